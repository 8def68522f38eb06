#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "oxymap/chromophore.hpp"
#include "oxymap/core.hpp"
#include "oxymap/photon_model.hpp"
#include "oxymap/sfdi.hpp"

namespace oxymap {

enum class FeatureStyle { flat, two_region, smooth_blob };

/// Synthetic tissue description. Concentrations are in mM (matching the
/// shipped extinction table); scattering is given at `musp_ref_nm` and
/// scaled to other wavelengths by a power law.
struct SceneConfig {
  std::size_t width = 128;
  std::size_t height = 128;
  double pitch_mm = 0.25;
  double sto2_min = 0.3, sto2_max = 1.0;
  double thb_min = 0.03, thb_max = 0.08;
  double musp_min = 0.8, musp_max = 1.4;
  double musp_ref_nm = 659.0;
  double scatter_power = 1.0;
  FeatureStyle style = FeatureStyle::flat;
  std::size_t blob_count = 6;
  std::vector<double> wavelengths_nm{659.0, 851.0};

  void validate() const;
  static SceneConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Scene {
  ImagePlane conc_hbo2;
  ImagePlane conc_hhb;
  std::vector<ImagePlane> musp_planes;  ///< aligned with basis.wavelengths_nm
  ChromophoreBasis basis;
  std::uint64_t seed = 0;

  std::size_t wavelength_index(double wavelength_nm) const;
  ImagePlane mua(double wavelength_nm) const;
  const ImagePlane& musp(double wavelength_nm) const;
  /// c_HbO2 / (c_HbO2 + c_HHb), exact from the concentration planes.
  StO2Map sto2() const;
};

/// `table` is the extinction table; rows for the configured wavelengths are
/// selected from it.
Scene generate_scene(const SceneConfig& config, const ChromophoreBasis& table, std::uint64_t seed);

struct RenderSettings {
  double fx = 0.0;          ///< mm^-1; 0 renders the unmodulated DC image
  double phase_rad = 0.0;
  double noise_sigma = 0.0; ///< Gaussian noise std as a fraction of the signal
  std::uint64_t noise_seed = 0;
  double gain = 1.0;        ///< source intensity times camera response
};

/// pixel = gain * (Rd(0) + Rd(fx) sin(2 pi fx x + phase)) + noise, x along columns.
ImagePlane render_structured(const Scene& scene, double wavelength_nm, const RenderSettings& settings,
                             const ForwardModel& model);

/// Three phases (0, 2pi/3, 4pi/3) at one frequency.
PhaseTriplet render_triplet(const Scene& scene, double wavelength_nm, RenderSettings settings,
                            const ForwardModel& model);

struct ReferencePhantom {
  double mua = 0.01;
  double musp = 1.0;
  double gain = 1.0;
};

/// Renders and three-phase demodulates a homogeneous reference phantom.
ReferenceMeasurement render_reference(std::size_t width, std::size_t height, double pitch_mm,
                                      double wavelength_nm, double fx_ac,
                                      const ReferencePhantom& phantom, const ForwardModel& model);

/// Three-channel network input. Checkerboard parity is absolute: the pixel
/// at absolute position (origin_row + r, origin_col + c) carries the 659 nm
/// ratio when the coordinate sum is even.
struct InputTensor {
  ImagePlane ch1;  ///< flat-field corrected 659 nm single-phase image
  ImagePlane ch2;  ///< same at 851 nm
  ImagePlane ch3;  ///< reference M_AC/M_DC checkerboard
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;

  std::size_t width() const { return ch1.width(); }
  std::size_t height() const { return ch1.height(); }
  InputTensor crop(std::size_t row, std::size_t col, std::size_t height, std::size_t width) const;
  std::vector<ImagePlane> channels() const { return {ch1, ch2, ch3}; }
};

InputTensor build_input_tensor(const ImagePlane& img659, const ImagePlane& img851,
                               const ReferenceMeasurement& ref659, const ReferenceMeasurement& ref851);

ImagePlane crop_plane(const ImagePlane& p, std::size_t row, std::size_t col, std::size_t height,
                      std::size_t width);
ImagePlane flip_horizontal(const ImagePlane& p);
ImagePlane flip_vertical(const ImagePlane& p);

struct DatasetSample {
  InputTensor input;
  StO2Map target;
};

struct DatasetOptions {
  std::size_t patch_size = 256;
  double stride_fraction = 0.3;  ///< nominal stride as a fraction of the patch size
  bool augment = true;
  double flip_probability = 0.5;
  std::uint64_t seed = 0;
};

struct PatchRecord {
  std::size_t sample = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = 0;
  bool flip_h = false;
  bool flip_v = false;
  std::string input_path;
  std::string target_path;

  nlohmann::json to_json() const;
};

/// Patch origins along one axis: evenly covering [0, extent - patch] with
/// randomly jittered stride lengths.
std::vector<std::size_t> patch_origins(std::size_t extent, const DatasetOptions& options,
                                       std::uint64_t stream_seed);

std::vector<PatchRecord> plan_dataset(const std::vector<DatasetSample>& samples,
                                      const DatasetOptions& options);

/// Applies one record's crop and flips to input and target alike.
DatasetSample extract_patch(const DatasetSample& sample, const PatchRecord& record);

/// Plans, writes every patch pair as rasters under `out_dir`, and writes
/// `manifest.jsonl` there. Returns the records with their paths filled in.
std::vector<PatchRecord> make_dataset(const std::vector<DatasetSample>& samples,
                                      const DatasetOptions& options,
                                      const std::filesystem::path& out_dir);

/// Renders a sample the way the instrument would: single-phase AC images at
/// 659/851 nm, references, and the scene's exact StO2 as target.
DatasetSample synthesize_sample(const Scene& scene, double fx_ac, const ReferencePhantom& phantom,
                                const ForwardModel& model, double noise_sigma = 0.0,
                                std::uint64_t noise_seed = 0);

}  // namespace oxymap
