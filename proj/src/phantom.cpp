#include "oxymap/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "oxymap/io.hpp"

namespace oxymap {

namespace {

using nlohmann::json;

std::string style_name(FeatureStyle s) {
  switch (s) {
    case FeatureStyle::flat: return "flat";
    case FeatureStyle::two_region: return "two-region";
    case FeatureStyle::smooth_blob: return "smooth-blob";
  }
  return "flat";
}

FeatureStyle parse_style(const std::string& s) {
  if (s == "flat") return FeatureStyle::flat;
  if (s == "two-region") return FeatureStyle::two_region;
  if (s == "smooth-blob") return FeatureStyle::smooth_blob;
  throw Error(Errc::invalid_argument, "unknown feature style '" + s + "'");
}

/// Sum of random Gaussian blobs rescaled to span exactly [0, 1].
ImagePlane blob_field(std::size_t w, std::size_t h, double pitch, std::size_t count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double extent = static_cast<double>(std::min(w, h));
  struct Blob {
    double cx, cy, sigma, amp;
  };
  std::vector<Blob> blobs;
  for (std::size_t k = 0; k < std::max<std::size_t>(count, 1); ++k)
    blobs.push_back({unit(rng) * static_cast<double>(w), unit(rng) * static_cast<double>(h),
                     (0.1 + 0.2 * unit(rng)) * extent, 0.5 + 0.5 * unit(rng)});
  ImagePlane f(w, h, pitch);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double v = 0.0;
      for (const auto& b : blobs) {
        const double dx = static_cast<double>(c) - b.cx;
        const double dy = static_cast<double>(r) - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      f.at(r, c) = v;
    }
  const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
  const double l = *lo;
  const double span = *hi - *lo;
  for (auto& v : f.values()) v = span > 0.0 ? std::clamp((v - l) / span, 0.0, 1.0) : 0.0;
  return f;
}

}  // namespace

void SceneConfig::validate() const {
  auto range = [](double lo, double hi, const char* what, bool allow_zero) {
    if (!(hi >= lo) || !(allow_zero ? lo >= 0.0 : lo > 0.0))
      throw Error(Errc::invalid_argument, std::string("scene config: invalid ") + what + " range");
  };
  if (width < 1 || height < 1 || !(pitch_mm > 0.0))
    throw Error(Errc::invalid_argument, "scene config: invalid geometry");
  range(sto2_min, sto2_max, "StO2", true);
  if (sto2_max > 1.0) throw Error(Errc::invalid_argument, "scene config: StO2 above 1");
  range(thb_min, thb_max, "total hemoglobin", false);
  range(musp_min, musp_max, "reduced scattering", false);
  if (!(musp_ref_nm > 0.0)) throw Error(Errc::invalid_argument, "scene config: invalid scattering reference");
  if (wavelengths_nm.empty()) throw Error(Errc::invalid_argument, "scene config: no wavelengths");
}

SceneConfig SceneConfig::from_json(const json& j) {
  SceneConfig c;
  try {
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.pitch_mm = j.value("pitch_mm", c.pitch_mm);
    if (j.contains("sto2_range")) {
      c.sto2_min = j["sto2_range"].at(0).get<double>();
      c.sto2_max = j["sto2_range"].at(1).get<double>();
    }
    if (j.contains("thb_range")) {
      c.thb_min = j["thb_range"].at(0).get<double>();
      c.thb_max = j["thb_range"].at(1).get<double>();
    }
    if (j.contains("musp_range")) {
      c.musp_min = j["musp_range"].at(0).get<double>();
      c.musp_max = j["musp_range"].at(1).get<double>();
    }
    c.musp_ref_nm = j.value("musp_ref_nm", c.musp_ref_nm);
    c.scatter_power = j.value("scatter_power", c.scatter_power);
    c.style = parse_style(j.value("style", style_name(c.style)));
    c.blob_count = j.value("blob_count", c.blob_count);
    c.wavelengths_nm = j.value("wavelengths_nm", c.wavelengths_nm);
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("scene config: ") + e.what());
  }
  c.validate();
  return c;
}

json SceneConfig::to_json() const {
  return {{"width", width},
          {"height", height},
          {"pitch_mm", pitch_mm},
          {"sto2_range", {sto2_min, sto2_max}},
          {"thb_range", {thb_min, thb_max}},
          {"musp_range", {musp_min, musp_max}},
          {"musp_ref_nm", musp_ref_nm},
          {"scatter_power", scatter_power},
          {"style", style_name(style)},
          {"blob_count", blob_count},
          {"wavelengths_nm", wavelengths_nm}};
}

std::size_t Scene::wavelength_index(double wavelength_nm) const {
  for (std::size_t i = 0; i < basis.wavelengths_nm.size(); ++i)
    if (std::abs(basis.wavelengths_nm[i] - wavelength_nm) < 1e-6) return i;
  throw Error(Errc::wavelength_mismatch,
              "scene has no basis row at " + std::to_string(wavelength_nm) + " nm");
}

ImagePlane Scene::mua(double wavelength_nm) const {
  const auto row = static_cast<Eigen::Index>(wavelength_index(wavelength_nm));
  const double e_oxy = basis.epsilon(row, static_cast<Eigen::Index>(basis.column(kOxyHb)));
  const double e_deoxy = basis.epsilon(row, static_cast<Eigen::Index>(basis.column(kDeoxyHb)));
  ImagePlane out(conc_hbo2.width(), conc_hbo2.height(), conc_hbo2.pitch_mm());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = e_oxy * conc_hbo2[i] + e_deoxy * conc_hhb[i];
  return out;
}

const ImagePlane& Scene::musp(double wavelength_nm) const {
  return musp_planes[wavelength_index(wavelength_nm)];
}

StO2Map Scene::sto2() const {
  ImagePlane out(conc_hbo2.width(), conc_hbo2.height(), conc_hbo2.pitch_mm(), kInvalid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double total = conc_hbo2[i] + conc_hhb[i];
    if (total > 0.0) out[i] = conc_hbo2[i] / total;
  }
  return StO2Map(std::move(out));
}

Scene generate_scene(const SceneConfig& config, const ChromophoreBasis& table, std::uint64_t seed) {
  config.validate();
  const std::size_t w = config.width;
  const std::size_t h = config.height;
  const double pitch = config.pitch_mm;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto lerp = [](double lo, double hi, double t) { return lo + (hi - lo) * t; };

  ImagePlane sto2(w, h, pitch), thb(w, h, pitch), musp_ref(w, h, pitch);
  switch (config.style) {
    case FeatureStyle::flat: {
      const double s = lerp(config.sto2_min, config.sto2_max, unit(rng));
      const double t = lerp(config.thb_min, config.thb_max, unit(rng));
      const double m = lerp(config.musp_min, config.musp_max, unit(rng));
      std::fill(sto2.values().begin(), sto2.values().end(), s);
      std::fill(thb.values().begin(), thb.values().end(), t);
      std::fill(musp_ref.values().begin(), musp_ref.values().end(), m);
      break;
    }
    case FeatureStyle::two_region: {
      // Left half takes the lower bound of every range, right half the upper.
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const bool right = c >= w / 2;
          sto2.at(r, c) = right ? config.sto2_max : config.sto2_min;
          thb.at(r, c) = right ? config.thb_max : config.thb_min;
          musp_ref.at(r, c) = right ? config.musp_max : config.musp_min;
        }
      break;
    }
    case FeatureStyle::smooth_blob: {
      const ImagePlane fs = blob_field(w, h, pitch, config.blob_count, rng);
      const ImagePlane ft = blob_field(w, h, pitch, config.blob_count, rng);
      const ImagePlane fm = blob_field(w, h, pitch, config.blob_count, rng);
      for (std::size_t i = 0; i < sto2.size(); ++i) {
        sto2[i] = lerp(config.sto2_min, config.sto2_max, fs[i]);
        thb[i] = lerp(config.thb_min, config.thb_max, ft[i]);
        musp_ref[i] = lerp(config.musp_min, config.musp_max, fm[i]);
      }
      break;
    }
  }

  Scene scene;
  scene.seed = seed;
  scene.basis = table.select(config.wavelengths_nm);
  scene.conc_hbo2 = ImagePlane(w, h, pitch);
  scene.conc_hhb = ImagePlane(w, h, pitch);
  for (std::size_t i = 0; i < sto2.size(); ++i) {
    scene.conc_hbo2[i] = sto2[i] * thb[i];
    scene.conc_hhb[i] = thb[i] - scene.conc_hbo2[i];
  }
  for (double wl : config.wavelengths_nm) {
    const double scale = std::pow(wl / config.musp_ref_nm, -config.scatter_power);
    ImagePlane m = musp_ref;
    for (auto& v : m.values()) v *= scale;
    scene.musp_planes.push_back(std::move(m));
  }
  return scene;
}

ImagePlane render_structured(const Scene& scene, double wavelength_nm, const RenderSettings& s,
                             const ForwardModel& model) {
  const ImagePlane mua = scene.mua(wavelength_nm);
  const ImagePlane& musp = scene.musp(wavelength_nm);
  const double pitch = mua.pitch_mm();
  if (!(s.fx >= 0.0) || !(s.fx < 0.5 / pitch))
    throw Error(Errc::invalid_argument, "render: frequency must lie in [0, Nyquist)");
  if (!(s.noise_sigma >= 0.0)) throw Error(Errc::invalid_argument, "render: negative noise level");

  ImagePlane out(mua.width(), mua.height(), pitch);
  std::mt19937_64 rng(s.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double k = 2.0 * std::numbers::pi * s.fx;
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c) {
      const double a = mua.at(r, c);
      const double m = musp.at(r, c);
      double v = model.reflectance(a, m, 0.0);
      if (s.fx > 0.0)
        v += model.reflectance(a, m, s.fx) * std::sin(k * static_cast<double>(c) * pitch + s.phase_rad);
      v *= s.gain;
      if (s.noise_sigma > 0.0) v += s.noise_sigma * std::abs(v) * gauss(rng);
      out.at(r, c) = v;
    }
  return out;
}

PhaseTriplet render_triplet(const Scene& scene, double wavelength_nm, RenderSettings settings,
                            const ForwardModel& model) {
  const double base = settings.phase_rad;
  const std::uint64_t seed = settings.noise_seed;
  auto phase = [&](int k) {
    settings.phase_rad = base + 2.0 * std::numbers::pi * k / 3.0;
    settings.noise_seed = seed + static_cast<std::uint64_t>(k);
    return render_structured(scene, wavelength_nm, settings, model);
  };
  return {phase(0), phase(1), phase(2), settings.fx, wavelength_nm};
}

ReferenceMeasurement render_reference(std::size_t width, std::size_t height, double pitch_mm,
                                      double wavelength_nm, double fx_ac,
                                      const ReferencePhantom& phantom, const ForwardModel& model) {
  // A homogeneous scene with a one-chromophore-equivalent basis row.
  Scene ref;
  ref.basis.wavelengths_nm = {wavelength_nm, wavelength_nm + 1.0};
  ref.basis.names = {kOxyHb, kDeoxyHb};
  ref.basis.epsilon = Eigen::MatrixXd::Identity(2, 2);
  ref.conc_hbo2 = ImagePlane(width, height, pitch_mm, phantom.mua);
  ref.conc_hhb = ImagePlane(width, height, pitch_mm, 0.0);
  ref.musp_planes = {ImagePlane(width, height, pitch_mm, phantom.musp),
                     ImagePlane(width, height, pitch_mm, phantom.musp)};
  RenderSettings s;
  s.gain = phantom.gain;
  const Demodulated dc = demodulate(render_triplet(ref, wavelength_nm, s, model));
  s.fx = fx_ac;
  const Demodulated ac = demodulate(render_triplet(ref, wavelength_nm, s, model));
  return {dc.m_dc, ac.m_ac, phantom.mua, phantom.musp, wavelength_nm, fx_ac};
}

ImagePlane crop_plane(const ImagePlane& p, std::size_t row, std::size_t col, std::size_t height,
                      std::size_t width) {
  if (row + height > p.height() || col + width > p.width() || height == 0 || width == 0)
    throw Error(Errc::dimension_mismatch, "crop window exceeds the plane");
  ImagePlane out(width, height, p.pitch_mm());
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = p.at(row + r, col + c);
  return out;
}

ImagePlane flip_horizontal(const ImagePlane& p) {
  ImagePlane out = p;
  for (std::size_t r = 0; r < p.height(); ++r)
    for (std::size_t c = 0; c < p.width(); ++c) out.at(r, c) = p.at(r, p.width() - 1 - c);
  return out;
}

ImagePlane flip_vertical(const ImagePlane& p) {
  ImagePlane out = p;
  for (std::size_t r = 0; r < p.height(); ++r)
    for (std::size_t c = 0; c < p.width(); ++c) out.at(r, c) = p.at(p.height() - 1 - r, c);
  return out;
}

InputTensor InputTensor::crop(std::size_t row, std::size_t col, std::size_t h, std::size_t w) const {
  return {crop_plane(ch1, row, col, h, w), crop_plane(ch2, row, col, h, w),
          crop_plane(ch3, row, col, h, w), origin_row + row, origin_col + col};
}

InputTensor build_input_tensor(const ImagePlane& img659, const ImagePlane& img851,
                               const ReferenceMeasurement& ref659, const ReferenceMeasurement& ref851) {
  if (!img659.same_shape(img851) || !img659.same_shape(ref659.m_dc_ref) ||
      !img659.same_shape(ref851.m_dc_ref) || !ref659.m_dc_ref.same_shape(ref659.m_ac_ref) ||
      !ref851.m_dc_ref.same_shape(ref851.m_ac_ref))
    throw Error(Errc::dimension_mismatch, "input tensor: planes are not co-registered");
  const std::size_t w = img659.width();
  const std::size_t h = img659.height();
  InputTensor t{ImagePlane(w, h, img659.pitch_mm()), ImagePlane(w, h, img659.pitch_mm()),
                ImagePlane(w, h, img659.pitch_mm()), 0, 0};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double dc659 = ref659.m_dc_ref.at(r, c);
      const double dc851 = ref851.m_dc_ref.at(r, c);
      const double ac659 = ref659.m_ac_ref.at(r, c);
      const double ac851 = ref851.m_ac_ref.at(r, c);
      if (!(dc659 > 0.0) || !(dc851 > 0.0) || !(ac659 > 0.0) || !(ac851 > 0.0))
        throw Error(Errc::invalid_argument, "input tensor: reference magnitudes must be positive");
      t.ch1.at(r, c) = img659.at(r, c) / dc659;
      t.ch2.at(r, c) = img851.at(r, c) / dc851;
      t.ch3.at(r, c) = (r + c) % 2 == 0 ? ac659 / dc659 : ac851 / dc851;
    }
  return t;
}

json PatchRecord::to_json() const {
  return {{"sample", sample}, {"row", row},       {"col", col},           {"size", size},
          {"flip_h", flip_h}, {"flip_v", flip_v}, {"input", input_path}, {"target", target_path}};
}

std::vector<std::size_t> patch_origins(std::size_t extent, const DatasetOptions& options,
                                       std::uint64_t stream_seed) {
  if (extent < options.patch_size)
    throw Error(Errc::invalid_argument, "dataset: scene smaller than the patch size");
  const std::size_t span = extent - options.patch_size;
  if (span == 0) return {0};
  const double nominal = options.stride_fraction * static_cast<double>(options.patch_size);
  const auto steps = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(span) / nominal)));
  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  std::vector<double> cumulative{0.0};
  for (std::size_t k = 0; k < steps; ++k) cumulative.push_back(cumulative.back() + jitter(rng));
  std::vector<std::size_t> origins;
  for (double v : cumulative)
    origins.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(span) * v / cumulative.back())));
  origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
  return origins;
}

std::vector<PatchRecord> plan_dataset(const std::vector<DatasetSample>& samples,
                                      const DatasetOptions& options) {
  if (options.patch_size == 0) throw Error(Errc::invalid_argument, "dataset: patch size must be positive");
  std::mt19937_64 flips(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<PatchRecord> records;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& in = samples[s].input;
    if (!in.ch1.same_shape(samples[s].target.plane()))
      throw Error(Errc::dimension_mismatch, "dataset: input and target differ in size");
    const auto rows = patch_origins(in.height(), options, options.seed * 1000003ULL + 2 * s);
    const auto cols = patch_origins(in.width(), options, options.seed * 1000003ULL + 2 * s + 1);
    for (std::size_t r : rows)
      for (std::size_t c : cols) {
        PatchRecord rec{s, r, c, options.patch_size, false, false, {}, {}};
        if (options.augment) {
          rec.flip_h = unit(flips) < options.flip_probability;
          rec.flip_v = unit(flips) < options.flip_probability;
        }
        records.push_back(rec);
      }
  }
  return records;
}

DatasetSample extract_patch(const DatasetSample& sample, const PatchRecord& rec) {
  InputTensor in = sample.input.crop(rec.row, rec.col, rec.size, rec.size);
  ImagePlane target = crop_plane(sample.target.plane(), rec.row, rec.col, rec.size, rec.size);
  auto apply = [&](ImagePlane (*flip)(const ImagePlane&)) {
    in.ch1 = flip(in.ch1);
    in.ch2 = flip(in.ch2);
    in.ch3 = flip(in.ch3);
    target = flip(target);
  };
  if (rec.flip_h) apply(&flip_horizontal);
  if (rec.flip_v) apply(&flip_vertical);
  return {std::move(in), StO2Map(std::move(target))};
}

std::vector<PatchRecord> make_dataset(const std::vector<DatasetSample>& samples,
                                      const DatasetOptions& options,
                                      const std::filesystem::path& out_dir) {
  auto records = plan_dataset(samples, options);
  std::filesystem::create_directories(out_dir);
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw Error(Errc::io, "cannot write dataset manifest in " + out_dir.string());
  for (std::size_t k = 0; k < records.size(); ++k) {
    auto& rec = records[k];
    const DatasetSample patch = extract_patch(samples[rec.sample], rec);
    const std::string stem = "patch_" + std::to_string(k);
    rec.input_path = stem + "_input.f32";
    rec.target_path = stem + "_sto2.f32";
    const json extra{{"origin_row", patch.input.origin_row}, {"origin_col", patch.input.origin_col},
                     {"flip_h", rec.flip_h}, {"flip_v", rec.flip_v}};
    io::write_raster(out_dir / rec.input_path, patch.input.channels(), "input_tensor", extra);
    io::write_plane(out_dir / rec.target_path, patch.target.plane(), "sto2", extra);
    manifest << rec.to_json().dump() << '\n';
  }
  return records;
}

DatasetSample synthesize_sample(const Scene& scene, double fx_ac, const ReferencePhantom& phantom,
                                const ForwardModel& model, double noise_sigma,
                                std::uint64_t noise_seed) {
  const std::size_t w = scene.conc_hbo2.width();
  const std::size_t h = scene.conc_hbo2.height();
  const double pitch = scene.conc_hbo2.pitch_mm();
  RenderSettings s;
  s.fx = fx_ac;
  s.noise_sigma = noise_sigma;
  s.gain = phantom.gain;
  s.noise_seed = noise_seed;
  const ImagePlane i659 = render_structured(scene, 659.0, s, model);
  s.noise_seed = noise_seed + 1;
  const ImagePlane i851 = render_structured(scene, 851.0, s, model);
  const auto r659 = render_reference(w, h, pitch, 659.0, fx_ac, phantom, model);
  const auto r851 = render_reference(w, h, pitch, 851.0, fx_ac, phantom, model);
  return {build_input_tensor(i659, i851, r659, r851), scene.sto2()};
}

}  // namespace oxymap
