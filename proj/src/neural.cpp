#include "oxymap/neural.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <thread>

#include "oxymap/io.hpp"
#include "oxymap/parallel.hpp"

namespace oxymap::nn {

using nlohmann::json;

namespace {

constexpr std::size_t kRowBand = 16;

std::size_t band_count(std::size_t height) { return (height + kRowBand - 1) / kRowBand; }

void check_kernel(std::span<const double> kernel, std::span<const double> bias, std::size_t cin,
                  std::size_t cout, const char* what) {
  if (kernel.size() != cin * cout * 9 || bias.size() != cout)
    throw Error(Errc::shape_mismatch, std::string(what) + ": kernel/bias shape does not match " +
                                          std::to_string(cin) + " -> " + std::to_string(cout) + " channels");
}

}  // namespace

Tensor conv2d_3x3(const Tensor& in, std::span<const double> kernel, std::span<const double> bias,
                  std::size_t out_channels, unsigned threads) {
  const std::size_t cin = in.channels;
  const std::size_t h = in.height;
  const std::size_t w = in.width;
  check_kernel(kernel, bias, cin, out_channels, "conv2d_3x3");
  if (h == 0 || w == 0) throw Error(Errc::shape_mismatch, "conv2d_3x3: empty input");
  Tensor out(out_channels, h, w);
  const std::size_t bands = band_count(h);

  parallel_for(0, out_channels * bands, threads, [&](std::size_t task) {
    const std::size_t o = task / bands;
    const std::size_t y0 = (task % bands) * kRowBand;
    const std::size_t y1 = std::min(h, y0 + kRowBand);
    for (std::size_t y = y0; y < y1; ++y) {
      double* orow = out.plane(o) + y * w;
      std::fill(orow, orow + w, bias[o]);
      for (std::size_t i = 0; i < cin; ++i) {
        const double* k = kernel.data() + (o * cin + i) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          if (y + ky < 1 || y + ky - 1 >= h) continue;
          const double* irow = in.plane(i) + (y + ky - 1) * w;
          const double k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
          if (w == 1) {
            orow[0] += k1 * irow[0];
            continue;
          }
          orow[0] += k1 * irow[0] + k2 * irow[1];
          for (std::size_t x = 1; x + 1 < w; ++x) orow[x] += k0 * irow[x - 1] + k1 * irow[x] + k2 * irow[x + 1];
          orow[w - 1] += k0 * irow[w - 2] + k1 * irow[w - 1];
        }
      }
    }
  });
  return out;
}

Tensor maxpool_2x2(const Tensor& in, unsigned threads) {
  if (in.height % 2 != 0 || in.width % 2 != 0 || in.height == 0 || in.width == 0)
    throw Error(Errc::shape_mismatch, "maxpool_2x2: spatial dimensions must be even");
  Tensor out(in.channels, in.height / 2, in.width / 2);
  parallel_for(0, in.channels, threads, [&](std::size_t c) {
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x) {
        const double a = in.at(c, 2 * y, 2 * x), b = in.at(c, 2 * y, 2 * x + 1);
        const double d = in.at(c, 2 * y + 1, 2 * x), e = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = std::max(std::max(a, b), std::max(d, e));
      }
  });
  return out;
}

Tensor upconv_3x3(const Tensor& in, std::span<const double> kernel, std::span<const double> bias,
                  std::size_t out_channels, std::size_t padding, std::size_t output_padding,
                  unsigned threads) {
  const std::size_t cin = in.channels;
  check_kernel(kernel, bias, cin, out_channels, "upconv_3x3");
  const std::size_t h = in.height;
  const std::size_t w = in.width;
  if (h == 0 || w == 0) throw Error(Errc::shape_mismatch, "upconv_3x3: empty input");
  const long ho = 2 * (static_cast<long>(h) - 1) - 2 * static_cast<long>(padding) + 3 + static_cast<long>(output_padding);
  const long wo = 2 * (static_cast<long>(w) - 1) - 2 * static_cast<long>(padding) + 3 + static_cast<long>(output_padding);
  if (ho != 2 * static_cast<long>(h) || wo != 2 * static_cast<long>(w))
    throw Error(Errc::manifest, "upconv_3x3: padding/output padding do not double the spatial size");
  Tensor out(out_channels, 2 * h, 2 * w);
  const long p = static_cast<long>(padding);
  const std::size_t bands = band_count(out.height);

  parallel_for(0, out_channels * bands, threads, [&](std::size_t task) {
    const std::size_t o = task / bands;
    const std::size_t y0 = (task % bands) * kRowBand;
    const std::size_t y1 = std::min(out.height, y0 + kRowBand);
    for (std::size_t y = y0; y < y1; ++y) {
      double* orow = out.plane(o) + y * out.width;
      std::fill(orow, orow + out.width, bias[o]);
      for (std::size_t i = 0; i < cin; ++i) {
        const double* k = kernel.data() + (i * out_channels + o) * 9;
        for (long ky = 0; ky < 3; ++ky) {
          const long t = static_cast<long>(y) + p - ky;
          if (t < 0 || t % 2 != 0 || t / 2 >= static_cast<long>(h)) continue;
          const double* irow = in.plane(i) + static_cast<std::size_t>(t / 2) * w;
          for (long kx = 0; kx < 3; ++kx) {
            const double kv = k[ky * 3 + kx];
            for (std::size_t ix = 0; ix < w; ++ix) {
              const long x = 2 * static_cast<long>(ix) - p + kx;
              if (x >= 0 && x < static_cast<long>(out.width)) orow[x] += kv * irow[ix];
            }
          }
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Manifest (de)serialization

namespace {

const std::pair<Op, const char*> kOps[] = {{Op::conv3x3, "conv3x3"},
                                           {Op::upconv3x3, "upconv3x3"},
                                           {Op::final_conv3x3, "final_conv3x3"},
                                           {Op::maxpool2x2, "maxpool2x2"},
                                           {Op::add, "add"}};
const std::pair<Activation, const char*> kActs[] = {{Activation::none, "none"},
                                                    {Activation::relu, "relu"},
                                                    {Activation::leaky_relu, "leaky_relu"},
                                                    {Activation::tanh, "tanh"}};

template <class E, std::size_t N>
const char* to_name(const std::pair<E, const char*> (&table)[N], E v) {
  for (const auto& [e, n] : table)
    if (e == v) return n;
  return "?";
}

template <class E, std::size_t N>
E from_name(const std::pair<E, const char*> (&table)[N], const std::string& s, const char* what) {
  for (const auto& [e, n] : table)
    if (s == n) return e;
  throw Error(Errc::manifest, std::string("unknown ") + what + " '" + s + "'");
}

json layer_to_json(const LayerDesc& l) {
  json j{{"name", l.name},
         {"op", to_name(kOps, l.op)},
         {"inputs", l.inputs},
         {"in_channels", l.in_channels},
         {"out_channels", l.out_channels},
         {"activation", to_name(kActs, l.activation)},
         {"level", l.level}};
  if (l.activation == Activation::leaky_relu) j["slope"] = l.slope;
  if (l.op == Op::upconv3x3) {
    j["stride"] = 2;
    j["padding"] = l.padding;
    j["output_padding"] = l.output_padding;
  }
  return j;
}

LayerDesc layer_from_json(const json& j) {
  LayerDesc l;
  l.name = j.at("name").get<std::string>();
  l.op = from_name(kOps, j.at("op").get<std::string>(), "op");
  l.inputs = j.at("inputs").get<std::vector<std::string>>();
  l.in_channels = j.value("in_channels", std::size_t{0});
  l.out_channels = j.value("out_channels", std::size_t{0});
  l.activation = from_name(kActs, j.value("activation", std::string("none")), "activation");
  l.slope = j.value("slope", 0.0);
  l.level = j.value("level", 0);
  l.padding = j.value("padding", std::size_t{1});
  l.output_padding = j.value("output_padding", std::size_t{1});
  return l;
}

void apply_activation(Tensor& t, Activation a, double slope) {
  switch (a) {
    case Activation::none: return;
    case Activation::relu:
      for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::leaky_relu:
      for (auto& v : t.data) v = v > 0.0 ? v : slope * v;
      return;
    case Activation::tanh:
      for (auto& v : t.data) v = std::tanh(v);
      return;
  }
}

Tensor tensor_from_named(const NamedTensor& n, const std::string& name) {
  if (n.shape.size() != 3) throw Error(Errc::shape_mismatch, name + ": activation tensor must be C x H x W");
  Tensor t(n.shape[0], n.shape[1], n.shape[2]);
  if (t.data.size() != n.values.size()) throw Error(Errc::shape_mismatch, name + ": size mismatch");
  t.data = n.values;
  return t;
}

}  // namespace

const NamedTensor& WeightContainer::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(Errc::manifest, "container lacks tensor '" + name + "'");
  return it->second;
}

void save_oxw(const std::filesystem::path& path, const WeightContainer& c) {
  io::Container out;
  out.magic = "OXW1";
  json layers = json::array();
  for (const auto& l : c.layers) layers.push_back(layer_to_json(l));
  json table = json::array();
  for (const auto& [name, t] : c.tensors) {
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.values.size()) throw Error(Errc::shape_mismatch, name + ": shape does not match values");
    const auto offset = io::append_blob(out.blob, t.values);
    table.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "float32"}, {"offset", offset}});
  }
  out.header = {{"format", "oxw"},
                {"version", 1},
                {"role", c.role},
                {"architecture", c.architecture},
                {"layers", layers},
                {"tensors", table}};
  io::write_container(path, out);
}

WeightContainer load_oxw(const std::filesystem::path& path) {
  const io::Container in = io::read_container(path, "OXW1");
  WeightContainer c;
  try {
    const auto& h = in.header;
    if (h.value("format", std::string()) != "oxw") throw Error(Errc::format, path.string() + ": not an OXW container");
    c.role = h.at("role").get<std::string>();
    c.architecture = h.value("architecture", json::object());
    for (const auto& l : h.at("layers")) c.layers.push_back(layer_from_json(l));
    for (const auto& t : h.at("tensors")) {
      if (t.value("dtype", std::string("float32")) != "float32")
        throw Error(Errc::format, path.string() + ": only float32 tensors are supported");
      NamedTensor nt;
      nt.shape = t.at("shape").get<std::vector<std::size_t>>();
      std::size_t count = 1;
      for (auto d : nt.shape) count *= d;
      nt.values = io::slice_blob(in.blob, t.at("offset").get<std::uint64_t>(), count);
      c.tensors.emplace(t.at("name").get<std::string>(), std::move(nt));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::format, path.string() + ": bad OXW header: " + e.what());
  }
  return c;
}

ActivationOracle ActivationOracle::load(const std::filesystem::path& path) {
  WeightContainer c = load_oxw(path);
  if (c.role != "oracle") throw Error(Errc::format, path.string() + ": container role is not 'oracle'");
  ActivationOracle o;
  o.input = tensor_from_named(c.tensor("input"), "input");
  for (const auto& l : c.layers)
    if (c.tensors.count(l.name)) o.activations.emplace(l.name, tensor_from_named(c.tensors.at(l.name), l.name));
  o.output_layer = c.architecture.value("output_layer", c.layers.empty() ? std::string() : c.layers.back().name);
  return o;
}

// ---------------------------------------------------------------------------
// Architecture builder

std::vector<LayerDesc> fusion_manifest(const FusionSpec& spec) {
  if (spec.channels.empty() || spec.in_channels == 0)
    throw Error(Errc::invalid_argument, "fusion manifest needs input channels and at least one level");
  std::vector<LayerDesc> layers;
  auto conv = [&](const std::string& name, const std::string& input, std::size_t cin, std::size_t cout,
                  Activation act, double slope, int level) {
    LayerDesc l;
    l.name = name;
    l.op = Op::conv3x3;
    l.inputs = {input};
    l.in_channels = cin;
    l.out_channels = cout;
    l.activation = act;
    l.slope = slope;
    l.level = level;
    layers.push_back(l);
  };
  auto add = [&](const std::string& name, const std::string& a, const std::string& b, std::size_t ch, int level) {
    LayerDesc l;
    l.name = name;
    l.op = Op::add;
    l.inputs = {a, b};
    l.in_channels = l.out_channels = ch;
    l.level = level;
    layers.push_back(l);
  };
  // conv1 -> conv2 -> conv3 -> conv4, res = conv1 + conv4, conv5(res)
  auto block = [&](const std::string& p, const std::string& input, std::size_t cin, std::size_t ch,
                   Activation act, double slope, int level) {
    conv(p + ".conv1", input, cin, ch, act, slope, level);
    conv(p + ".conv2", p + ".conv1", ch, ch, act, slope, level);
    conv(p + ".conv3", p + ".conv2", ch, ch, act, slope, level);
    conv(p + ".conv4", p + ".conv3", ch, ch, act, slope, level);
    add(p + ".res", p + ".conv1", p + ".conv4", ch, level);
    conv(p + ".conv5", p + ".res", ch, ch, act, slope, level);
    return p + ".conv5";
  };

  const std::size_t depth = spec.channels.size();
  std::string x = "input";
  std::size_t cin = spec.in_channels;
  std::vector<std::string> skips;
  for (std::size_t l = 0; l < depth; ++l) {
    const int level = static_cast<int>(l + 1);
    const std::string p = "enc" + std::to_string(level);
    x = block(p, x, cin, spec.channels[l], Activation::relu, 0.0, level);
    skips.push_back(x);
    LayerDesc pool;
    pool.name = p + ".pool";
    pool.op = Op::maxpool2x2;
    pool.inputs = {x};
    pool.in_channels = pool.out_channels = spec.channels[l];
    pool.level = level;
    layers.push_back(pool);
    x = pool.name;
    cin = spec.channels[l];
  }
  x = block("bridge", x, cin, spec.channels.back(), Activation::relu, 0.0, static_cast<int>(depth + 1));
  cin = spec.channels.back();
  for (std::size_t l = depth; l-- > 0;) {
    const int level = static_cast<int>(l + 1);
    const std::string p = "dec" + std::to_string(level);
    LayerDesc up;
    up.name = p + ".up";
    up.op = Op::upconv3x3;
    up.inputs = {x};
    up.in_channels = cin;
    up.out_channels = spec.channels[l];
    up.activation = Activation::leaky_relu;
    up.slope = spec.decoder_slope;
    up.level = level;
    layers.push_back(up);
    add(p + ".skip", up.name, skips[l], spec.channels[l], level);
    x = block(p, p + ".skip", spec.channels[l], spec.channels[l], Activation::leaky_relu, spec.decoder_slope, level);
    cin = spec.channels[l];
  }
  LayerDesc fin;
  fin.name = "final";
  fin.op = Op::final_conv3x3;
  fin.inputs = {x};
  fin.in_channels = cin;
  fin.out_channels = 1;
  fin.activation = Activation::tanh;
  fin.level = 0;
  layers.push_back(fin);
  return layers;
}

GeneratorWeights make_weights(const FusionSpec& spec, double stddev, std::uint64_t seed) {
  GeneratorWeights g;
  g.role = "generator";
  g.layers = fusion_manifest(spec);
  g.architecture = {{"name", "fusion-generator"},
                    {"in_channels", spec.in_channels},
                    {"channels", spec.channels},
                    {"depth", spec.channels.size()},
                    {"output_layer", "final"},
                    {"output_mapping", "sto2 = (y + 1) / 2"}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, stddev > 0.0 ? stddev : 1.0);
  for (const auto& l : g.layers) {
    if (l.op == Op::add || l.op == Op::maxpool2x2) continue;
    NamedTensor w, b;
    w.shape = l.op == Op::upconv3x3 ? std::vector<std::size_t>{l.in_channels, l.out_channels, 3, 3}
                                    : std::vector<std::size_t>{l.out_channels, l.in_channels, 3, 3};
    w.values.resize(l.in_channels * l.out_channels * 9);
    b.shape = {l.out_channels};
    b.values.assign(l.out_channels, 0.0);
    for (auto& v : w.values) v = stddev > 0.0 ? static_cast<double>(static_cast<float>(gauss(rng))) : 0.0;
    g.tensors.emplace(l.name + ".weight", std::move(w));
    g.tensors.emplace(l.name + ".bias", std::move(b));
  }
  return g;
}

// ---------------------------------------------------------------------------

Generator::Generator(GeneratorWeights weights) : weights_(std::move(weights)) {
  const auto& layers = weights_.layers;
  if (layers.empty()) throw Error(Errc::manifest, "generator manifest has no layers");
  in_channels_ = weights_.architecture.value("in_channels", std::size_t{0});
  std::map<std::string, std::size_t> channels;
  std::map<std::string, std::size_t> position;
  std::size_t pools = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerDesc& l = layers[k];
    auto fail = [&](const std::string& why) { throw Error(Errc::manifest, "layer '" + l.name + "': " + why); };
    if (l.name.empty() || l.name == "input" || channels.count(l.name)) fail("missing or duplicate name");
    std::vector<std::size_t> in_ch;
    for (const auto& src : l.inputs) {
      if (src == "input") {
        if (in_channels_ == 0) in_channels_ = l.in_channels;
        in_ch.push_back(in_channels_);
      } else if (channels.count(src)) {
        in_ch.push_back(channels[src]);
      } else {
        fail("input '" + src + "' is not defined before use");
      }
    }
    const bool is_add = l.op == Op::add;
    if (in_ch.size() != (is_add ? 2u : 1u)) fail("wrong number of inputs");
    if (is_add && in_ch[0] != in_ch[1]) fail("added tensors differ in channel count");
    if (in_ch[0] != l.in_channels) fail("declared input channels do not match the producer");
    if (l.activation == Activation::leaky_relu && !(l.slope >= 0.0)) fail("invalid leaky slope");
    switch (l.op) {
      case Op::conv3x3:
      case Op::final_conv3x3:
      case Op::upconv3x3: {
        const auto& w = weights_.tensor(l.name + ".weight");
        const auto& b = weights_.tensor(l.name + ".bias");
        const std::vector<std::size_t> expect =
            l.op == Op::upconv3x3 ? std::vector<std::size_t>{l.in_channels, l.out_channels, 3, 3}
                                  : std::vector<std::size_t>{l.out_channels, l.in_channels, 3, 3};
        if (w.shape != expect) fail("weight shape disagrees with manifest");
        if (b.shape != std::vector<std::size_t>{l.out_channels}) fail("bias shape disagrees with manifest");
        for (double v : w.values)
          if (!std::isfinite(v)) fail("non-finite weight");
        for (double v : b.values)
          if (!std::isfinite(v)) fail("non-finite bias");
        if (l.op == Op::upconv3x3 && 2 * l.padding != l.output_padding + 1)
          fail("up-convolution padding does not double the spatial size");
        break;
      }
      case Op::maxpool2x2:
        ++pools;
        [[fallthrough]];
      case Op::add:
        if (l.out_channels != l.in_channels) fail("output channels must equal input channels");
        break;
    }
    channels[l.name] = l.out_channels;
    position[l.name] = k;
  }
  multiple_ = std::size_t{1} << pools;

  last_use_.assign(layers.size(), 0);
  for (std::size_t k = 0; k < layers.size(); ++k)
    for (const auto& src : layers[k].inputs)
      if (src != "input") last_use_[position[src]] = k;
  last_use_.back() = layers.size();
}

Tensor Generator::forward(const Tensor& input, unsigned threads,
                          std::map<std::string, Tensor>* trace) const {
  if (input.channels != in_channels_)
    throw Error(Errc::shape_mismatch, "generator expects " + std::to_string(in_channels_) + " input channels, got " +
                                          std::to_string(input.channels));
  if (input.height == 0 || input.width == 0 || input.height % multiple_ != 0 || input.width % multiple_ != 0)
    throw Error(Errc::dimension_mismatch, "input size " + std::to_string(input.height) + "x" +
                                              std::to_string(input.width) + " is not a multiple of " +
                                              std::to_string(multiple_));
  const auto& layers = weights_.layers;
  std::vector<Tensor> values(layers.size());
  std::map<std::string, std::size_t> index;
  auto get = [&](const std::string& name) -> const Tensor& {
    return name == "input" ? input : values[index.at(name)];
  };
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerDesc& l = layers[k];
    Tensor out;
    switch (l.op) {
      case Op::conv3x3:
      case Op::final_conv3x3:
        out = conv2d_3x3(get(l.inputs[0]), weights_.tensor(l.name + ".weight").values,
                         weights_.tensor(l.name + ".bias").values, l.out_channels, threads);
        break;
      case Op::upconv3x3:
        out = upconv_3x3(get(l.inputs[0]), weights_.tensor(l.name + ".weight").values,
                         weights_.tensor(l.name + ".bias").values, l.out_channels, l.padding,
                         l.output_padding, threads);
        break;
      case Op::maxpool2x2:
        out = maxpool_2x2(get(l.inputs[0]), threads);
        break;
      case Op::add: {
        const Tensor& a = get(l.inputs[0]);
        const Tensor& b = get(l.inputs[1]);
        if (!a.same_shape(b)) throw Error(Errc::shape_mismatch, l.name + ": added tensors differ in shape");
        out = a;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        break;
      }
    }
    apply_activation(out, l.activation, l.slope);
    values[k] = std::move(out);
    index[l.name] = k;
    if (trace) (*trace)[l.name] = values[k];
    // release inputs whose last consumer was this layer
    for (const auto& src : l.inputs)
      if (src != "input" && last_use_[index[src]] == k) values[index[src]] = Tensor();
  }
  return std::move(values.back());
}

Tensor to_tensor(const InputTensor& input) {
  Tensor t(3, input.height(), input.width());
  const ImagePlane* planes[] = {&input.ch1, &input.ch2, &input.ch3};
  for (std::size_t c = 0; c < 3; ++c)
    std::copy(planes[c]->values().begin(), planes[c]->values().end(), t.plane(c));
  return t;
}

StO2Map forward_generator(const InputTensor& input, const Generator& generator, unsigned threads) {
  const Tensor y = generator.forward(to_tensor(input), threads);
  if (y.channels != 1) throw Error(Errc::manifest, "generator output must have one channel");
  ImagePlane out(y.width, y.height, input.ch1.pitch_mm());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((y.data[i] + 1.0) / 2.0, 0.0, 1.0);
  return StO2Map(std::move(out));
}

StO2Map forward_generator(const InputTensor& input, const GeneratorWeights& weights, unsigned threads) {
  return forward_generator(input, Generator(weights), threads);
}

json BenchmarkReport::to_json() const {
  return {{"size", size},
          {"threads", threads},
          {"repeats", repeats},
          {"seconds_per_frame_1_thread", seconds_single},
          {"seconds_per_frame_n_threads", seconds_multi},
          {"frames_per_second_n_threads", seconds_multi > 0.0 ? 1.0 / seconds_multi : 0.0},
          {"speedup", speedup},
          {"deterministic", deterministic},
          {"hardware_threads", hardware_threads}};
}

BenchmarkReport benchmark_inference(const Generator& generator, std::size_t size, unsigned threads,
                                    std::size_t repeats) {
  if (size == 0 || size % generator.required_multiple() != 0)
    throw Error(Errc::dimension_mismatch, "benchmark size " + std::to_string(size) + " is not a multiple of " +
                                              std::to_string(generator.required_multiple()));
  threads = std::max(1u, threads);
  repeats = std::max<std::size_t>(1, repeats);
  Tensor input(generator.in_channels(), size, size);
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& v : input.data) v = unit(rng);

  BenchmarkReport r;
  r.size = size;
  r.threads = threads;
  r.repeats = repeats;
  r.hardware_threads = std::thread::hardware_concurrency();
  r.deterministic = true;
  Tensor reference;
  auto time_runs = [&](unsigned t) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < repeats; ++k) {
      const auto start = std::chrono::steady_clock::now();
      Tensor y = generator.forward(input, t);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
      best = std::min(best, dt.count());
      if (reference.data.empty()) {
        reference = std::move(y);
      } else if (y.data.size() != reference.data.size() ||
                 std::memcmp(y.data.data(), reference.data.data(), y.data.size() * sizeof(double)) != 0) {
        r.deterministic = false;
      }
    }
    return best;
  };
  r.seconds_single = time_runs(1);
  r.seconds_multi = threads == 1 ? r.seconds_single : time_runs(threads);
  r.speedup = r.seconds_multi > 0.0 ? r.seconds_single / r.seconds_multi : 0.0;
  return r;
}

}  // namespace oxymap::nn
