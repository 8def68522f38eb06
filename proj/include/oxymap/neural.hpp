#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "oxymap/core.hpp"
#include "oxymap/phantom.hpp"

namespace oxymap::nn {

/// Dense C x H x W activation in double precision.
struct Tensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  double* plane(std::size_t c) { return data.data() + c * height * width; }
  const double* plane(std::size_t c) const { return data.data() + c * height * width; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// Cross-correlation with a 3x3 kernel laid out [out][in][3][3], stride 1,
/// zero padding 1.
Tensor conv2d_3x3(const Tensor& input, std::span<const double> kernel, std::span<const double> bias,
                  std::size_t out_channels, unsigned threads = 1);

Tensor maxpool_2x2(const Tensor& input, unsigned threads = 1);

/// Transposed convolution, stride 2, kernel laid out [in][out][3][3]. Output
/// size is 2(H-1) - 2 padding + 3 + output_padding; must equal 2H.
Tensor upconv_3x3(const Tensor& input, std::span<const double> kernel, std::span<const double> bias,
                  std::size_t out_channels, std::size_t padding = 1, std::size_t output_padding = 1,
                  unsigned threads = 1);

enum class Op { conv3x3, upconv3x3, final_conv3x3, maxpool2x2, add };
enum class Activation { none, relu, leaky_relu, tanh };

struct LayerDesc {
  std::string name;
  Op op = Op::conv3x3;
  std::vector<std::string> inputs;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Activation activation = Activation::none;
  double slope = 0.0;  ///< leaky rectifier slope
  int level = 0;
  std::size_t padding = 1;
  std::size_t output_padding = 1;
};

struct NamedTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Contents of an OXW container: a layer graph and named float blobs.
/// role = "generator" for weights, "oracle" for reference activations.
struct WeightContainer {
  std::string role = "generator";
  nlohmann::json architecture = nlohmann::json::object();
  std::vector<LayerDesc> layers;
  std::map<std::string, NamedTensor> tensors;

  const NamedTensor& tensor(const std::string& name) const;
};

void save_oxw(const std::filesystem::path& path, const WeightContainer& c);
WeightContainer load_oxw(const std::filesystem::path& path);

using GeneratorWeights = WeightContainer;

/// Layer activations a trainer recorded for one fixed input (role "oracle").
struct ActivationOracle {
  Tensor input;
  std::map<std::string, Tensor> activations;  ///< keyed by layer name
  std::string output_layer;

  static ActivationOracle load(const std::filesystem::path& path);
};

struct FusionSpec {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{64, 128, 256, 512};
  double decoder_slope = 0.2;
};

/// Manifest of the residual encoder-decoder: per level a five-convolution
/// block with an addition joining the first and fourth convolutions, 2x2
/// max-pool descents, stride-2 up-convolution ascents with additive long
/// skips, rectifiers on the encoder, leaky rectifiers on the decoder, and a
/// final convolution with tanh.
std::vector<LayerDesc> fusion_manifest(const FusionSpec& spec);

/// Weights for a manifest: zero everywhere, or Gaussian N(0, std) from seed.
GeneratorWeights make_weights(const FusionSpec& spec, double stddev, std::uint64_t seed);

/// Validated executable graph over shared immutable weights. Forward passes
/// may run concurrently.
class Generator {
 public:
  explicit Generator(GeneratorWeights weights);

  const GeneratorWeights& weights() const noexcept { return weights_; }
  /// Spatial sizes must be multiples of this (2^number of pooling layers).
  std::size_t required_multiple() const noexcept { return multiple_; }
  std::size_t in_channels() const noexcept { return in_channels_; }
  const std::string& output_layer() const noexcept { return weights_.layers.back().name; }

  /// Raw network output (tanh range). When `trace` is non-null every layer
  /// output is recorded under its name.
  Tensor forward(const Tensor& input, unsigned threads = 1,
                 std::map<std::string, Tensor>* trace = nullptr) const;

 private:
  GeneratorWeights weights_;
  std::size_t multiple_ = 1;
  std::size_t in_channels_ = 0;
  std::vector<std::size_t> last_use_;
};

Tensor to_tensor(const InputTensor& input);

/// Runs the generator and maps tanh output y to StO2 = (y + 1) / 2.
StO2Map forward_generator(const InputTensor& input, const Generator& generator, unsigned threads = 1);
StO2Map forward_generator(const InputTensor& input, const GeneratorWeights& weights, unsigned threads = 1);

struct BenchmarkReport {
  std::size_t size = 0;
  unsigned threads = 1;
  std::size_t repeats = 0;
  double seconds_single = 0.0;   ///< best wall time per frame, 1 thread
  double seconds_multi = 0.0;    ///< best wall time per frame, `threads` threads
  double speedup = 0.0;
  bool deterministic = false;    ///< identical output bits across runs and thread counts
  unsigned hardware_threads = 0;

  nlohmann::json to_json() const;
};

BenchmarkReport benchmark_inference(const Generator& generator, std::size_t size, unsigned threads,
                                    std::size_t repeats = 2);

}  // namespace oxymap::nn
