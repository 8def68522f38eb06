// oxymap: command-line front end for the oximetry pipeline.
//
// Every subcommand prints one JSON object on stdout when it succeeds. On
// failure it prints {"status":"error", "stage":..., "code":..., "message":...}
// on stderr and exits with status 1; argument errors exit with CLI11's code.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oxymap/chromophore.hpp"
#include "oxymap/io.hpp"
#include "oxymap/neural.hpp"
#include "oxymap/phantom.hpp"
#include "oxymap/photon_model.hpp"
#include "oxymap/sfdi.hpp"
#include "oxymap/ssop.hpp"
#include "oxymap/timeseries.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oxymap;

namespace {

std::string g_command;
std::string g_stage;

void stage(std::string name) { g_stage = std::move(name); }

std::string default_basis() { return (fs::path(OXYMAP_DATA_DIR) / "hemoglobin.json").string(); }

std::string wl_tag(double wl) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", wl);
  return buf;
}

std::optional<double> sidecar_number(const fs::path& p, const char* key) {
  return io::read_raster(p).number(key);
}

double resolve(std::optional<double> flag, const fs::path& file, const char* key, const char* what) {
  if (flag) return *flag;
  if (auto v = sidecar_number(file, key)) return *v;
  throw Error(Errc::invalid_argument, std::string(what) + " not given and " + file.string() + " has no '" + key +
                                          "' metadata");
}

void emit(json summary) {
  summary["status"] = "ok";
  summary["command"] = g_command;
  std::cout << summary.dump(2) << std::endl;
}

// ---------------------------------------------------------------------------

struct LutArgs {
  LutGridSpec spec;
  std::string out;
};

void run_lut(const LutArgs& a) {
  stage("lut build");
  const ReflectanceLut lut = build_lut(a.spec);
  stage("lut write");
  save_lut(a.out, lut);
  emit({{"out", a.out},
        {"mua_count", lut.mua_grid.size()},
        {"musp_count", lut.musp_grid.size()},
        {"fx_dc", lut.fx_dc},
        {"fx_ac", lut.fx_ac},
        {"n", lut.refractive_index},
        {"model_id", lut.model_id}});
}

struct PhantomArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  double fx = 0.2;
  double noise = 0.0;
  double ref_mua = 0.01;
  double ref_musp = 1.0;
  // dataset only
  std::size_t count = 1;
  std::size_t patch_size = 256;
  double stride_fraction = 0.3;
  bool no_augment = false;
};

SceneConfig read_scene_config(const std::string& path) {
  if (path.empty()) return SceneConfig{};
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open scene config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::format, path + ": " + e.what());
  }
  return SceneConfig::from_json(j);
}

void run_phantom_gen(const PhantomArgs& a) {
  stage("phantom config");
  const SceneConfig cfg = read_scene_config(a.config);
  stage("basis load");
  const ChromophoreBasis table = load_basis(default_basis());
  stage("phantom generate");
  const Scene scene = generate_scene(cfg, table, a.seed);
  const DiffusionModel model(1.4);
  const ReferencePhantom phantom{a.ref_mua, a.ref_musp, 1.0};
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::vector<std::string> files;
  auto write = [&](const std::string& name, const std::vector<ImagePlane>& ch, const std::string& sem,
                   const json& extra) {
    io::write_raster(dir / name, ch, sem, extra);
    files.push_back(name);
  };

  stage("phantom render");
  write("truth_sto2.f32", {scene.sto2().plane()}, "sto2", json::object());
  std::vector<ReferenceMeasurement> refs;
  std::map<double, ImagePlane> snapshots;
  for (std::size_t k = 0; k < cfg.wavelengths_nm.size(); ++k) {
    const double wl = cfg.wavelengths_nm[k];
    const std::string tag = wl_tag(wl);
    write("truth_" + tag + ".f32", {scene.mua(wl), scene.musp(wl)}, "optical_properties", {{"wavelength_nm", wl}});
    RenderSettings rs;
    rs.noise_sigma = a.noise;
    rs.noise_seed = a.seed * 1000 + 10 * k;
    const PhaseTriplet dc = render_triplet(scene, wl, rs, model);
    rs.fx = a.fx;
    rs.noise_seed += 3;
    const PhaseTriplet ac = render_triplet(scene, wl, rs, model);
    const ImagePlane* planes[] = {&dc.i0, &dc.i1, &dc.i2, &ac.i0, &ac.i1, &ac.i2};
    for (int p = 0; p < 6; ++p) {
      const bool is_ac = p >= 3;
      write(std::string(is_ac ? "ac_" : "dc_") + tag + "_" + std::to_string(p % 3) + ".f32", {*planes[p]},
            "structured_image",
            {{"wavelength_nm", wl}, {"fx_mm", is_ac ? a.fx : 0.0}, {"phase_index", p % 3}});
    }
    rs.phase_rad = 0.0;
    rs.noise_seed += 3;
    snapshots[wl] = render_structured(scene, wl, rs, model);
    write("snapshot_" + tag + ".f32", {snapshots[wl]}, "single_phase_image", {{"wavelength_nm", wl}, {"fx_mm", a.fx}});
    refs.push_back(render_reference(cfg.width, cfg.height, cfg.pitch_mm, wl, a.fx, phantom, model));
  }
  stage("reference write");
  save_references(dir / "refs.oxrf", refs);
  files.push_back("refs.oxrf");

  if (snapshots.count(659.0) && snapshots.count(851.0)) {
    stage("input tensor");
    const InputTensor t = build_input_tensor(snapshots[659.0], snapshots[851.0], find_reference(refs, 659.0),
                                             find_reference(refs, 851.0));
    write("input.f32", t.channels(), "input_tensor", {{"origin_row", t.origin_row}, {"origin_col", t.origin_col}});
  }
  {
    std::ofstream meta(dir / "scene.json");
    meta << json{{"config", cfg.to_json()}, {"seed", a.seed}, {"fx_mm", a.fx}, {"noise_sigma", a.noise}}.dump(2);
  }
  files.push_back("scene.json");
  const PlaneStats st = plane_stats(scene.sto2().plane());
  emit({{"out", a.out}, {"seed", a.seed}, {"files", files}, {"truth_sto2_mean", st.mean}});
}

void run_phantom_dataset(const PhantomArgs& a) {
  stage("phantom config");
  const SceneConfig cfg = read_scene_config(a.config);
  stage("basis load");
  const ChromophoreBasis table = load_basis(default_basis());
  stage("phantom render");
  const DiffusionModel model(1.4);
  std::vector<DatasetSample> samples;
  for (std::size_t k = 0; k < a.count; ++k) {
    const Scene scene = generate_scene(cfg, table, a.seed + k);
    samples.push_back(synthesize_sample(scene, a.fx, {a.ref_mua, a.ref_musp, 1.0}, model, a.noise,
                                        (a.seed + k) * 1000));
  }
  stage("dataset write");
  DatasetOptions opt;
  opt.patch_size = a.patch_size;
  opt.stride_fraction = a.stride_fraction;
  opt.augment = !a.no_augment;
  opt.seed = a.seed;
  const auto records = make_dataset(samples, opt, a.out);
  emit({{"out", a.out}, {"samples", a.count}, {"patches", records.size()},
        {"manifest", (fs::path(a.out) / "manifest.jsonl").string()}});
}

struct SfdiArgs {
  std::string dc[3], ac[3];
  std::string ref, lut, out, mask;
  std::optional<double> wavelength, fx;
  unsigned threads = 0;
};

void run_sfdi(const SfdiArgs& a) {
  stage("read images");
  auto triplet = [&](const std::string (&p)[3], double fx, double wl) {
    return PhaseTriplet{io::read_plane(p[0]), io::read_plane(p[1]), io::read_plane(p[2]), fx, wl};
  };
  const double wl = resolve(a.wavelength, a.dc[0], "wavelength_nm", "--wavelength");
  const double fx_dc = resolve(std::nullopt, a.dc[0], "fx_mm", "DC frequency");
  const double fx_ac = resolve(a.fx, a.ac[0], "fx_mm", "--fx");
  const PhaseTriplet dc = triplet(a.dc, fx_dc, wl);
  const PhaseTriplet ac = triplet(a.ac, fx_ac, wl);
  stage("reference load");
  const auto refs = load_references(a.ref);
  const ReferenceMeasurement& ref = find_reference(refs, wl);
  stage("lut load");
  const LutInverter inv(load_lut(a.lut));
  std::optional<Mask> mask;
  if (!a.mask.empty()) {
    stage("mask load");
    mask = io::read_mask(a.mask);
  }
  stage("sfdi");
  const SfdiResult r = sfdi_optical_properties(dc, ac, ref, inv, mask ? &*mask : nullptr, a.threads);
  stage("write output");
  io::write_raster(a.out, {r.properties.mua, r.properties.musp}, "optical_properties", {{"wavelength_nm", wl}});
  emit({{"out", a.out},
        {"wavelength_nm", wl},
        {"inverted", r.stats.inverted},
        {"out_of_gamut", r.stats.out_of_gamut},
        {"skipped", r.stats.skipped},
        {"mua_mean", plane_stats(r.properties.mua).mean},
        {"musp_mean", plane_stats(r.properties.musp).mean}});
}

struct Sto2Args {
  std::vector<std::string> mua;
  std::string basis = default_basis();
  std::string out;
  unsigned threads = 0;
};

void run_sto2(const Sto2Args& a) {
  stage("read absorption maps");
  std::vector<OpticalPropertyMap> stack;
  std::vector<double> wavelengths;
  for (const auto& spec : a.mua) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw Error(Errc::invalid_argument, "--mua expects WAVELENGTH:FILE, got " + spec);
    double wl = 0.0;
    try {
      wl = std::stod(spec.substr(0, colon));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "--mua: bad wavelength in " + spec);
    }
    const io::Raster r = io::read_raster(spec.substr(colon + 1));
    const ImagePlane& mua = r.channels.at(0);
    const ImagePlane musp = r.channels.size() > 1 ? r.channels[1] : ImagePlane(mua.width(), mua.height(), mua.pitch_mm(), 1.0);
    stack.push_back({mua, musp, wl});
    wavelengths.push_back(wl);
  }
  stage("basis load");
  const ChromophoreBasis basis = load_basis(a.basis).select(wavelengths);
  stage("chromophore fit");
  const StO2Map s = sto2_from_mua(stack, basis, a.threads);
  stage("write output");
  io::write_plane(a.out, s.plane(), "sto2");
  const PlaneStats st = plane_stats(s.plane());
  emit({{"out", a.out}, {"wavelengths_nm", wavelengths}, {"valid_pixels", st.count}, {"sto2_mean", st.mean}});
}

struct SsopArgs {
  std::string img659, img851, ref, lut, basis = default_basis(), out;
  double lp = 0.5, hpw = 0.5;
  std::optional<double> fx;
  std::string axis = "x";
  std::size_t border = 16;
  unsigned threads = 0;
};

SsopFilterSpec ssop_spec(const SsopArgs& a, double fx) {
  SsopFilterSpec spec;
  spec.fx = fx;
  spec.lowpass_cutoff = a.lp;
  spec.highpass_halfwidth = a.hpw;
  spec.modulation_axis = a.axis == "y" ? Axis::y : Axis::x;
  spec.border_px = a.border;
  return spec;
}

void run_ssop(const SsopArgs& a) {
  stage("read images");
  const ImagePlane i659 = io::read_plane(a.img659);
  const ImagePlane i851 = io::read_plane(a.img851);
  const double fx = resolve(a.fx, a.img659, "fx_mm", "--fx");
  stage("reference load");
  const auto refs = load_references(a.ref);
  stage("lut load");
  const LutInverter inv(load_lut(a.lut));
  stage("basis load");
  const double w2[] = {659.0, 851.0};
  const ChromophoreBasis basis = load_basis(a.basis).select(w2);
  stage("ssop");
  const SsopResult r = ssop_sto2(i659, i851, refs, inv, basis, ssop_spec(a, fx), a.threads);
  stage("write output");
  io::write_plane(a.out, r.sto2.plane(), "sto2", {{"border_px", a.border}});
  json stats = json::array();
  for (const auto& s : r.stats) stats.push_back({{"inverted", s.inverted}, {"out_of_gamut", s.out_of_gamut}});
  emit({{"out", a.out}, {"fx_mm", fx}, {"confident_pixels", r.confident.count()}, {"inversion", stats},
        {"sto2_mean", masked_stats(r.sto2.plane(), r.confident).mean}});
}

struct InferArgs {
  std::string weights, input, out;
  unsigned threads = 0;
};

InputTensor read_input_tensor(const std::string& path) {
  const io::Raster r = io::read_raster(path);
  if (r.channels.size() != 3) throw Error(Errc::shape_mismatch, path + ": input tensor must have 3 channels");
  InputTensor t{r.channels[0], r.channels[1], r.channels[2], 0, 0};
  t.origin_row = static_cast<std::size_t>(r.number("origin_row").value_or(0.0));
  t.origin_col = static_cast<std::size_t>(r.number("origin_col").value_or(0.0));
  return t;
}

void run_infer(const InferArgs& a) {
  stage("weights load");
  const nn::Generator g(nn::load_oxw(a.weights));
  stage("read input");
  const InputTensor t = read_input_tensor(a.input);
  stage("inference");
  const StO2Map s = nn::forward_generator(t, g, a.threads);
  stage("write output");
  io::write_plane(a.out, s.plane(), "sto2");
  emit({{"out", a.out}, {"width", s.width()}, {"height", s.height()}, {"sto2_mean", plane_stats(s.plane()).mean}});
}

struct BenchArgs {
  std::string weights;
  std::size_t size = 512;
  unsigned threads = 4;
  std::size_t repeats = 2;
};

void run_bench(const BenchArgs& a) {
  stage("weights load");
  const nn::Generator g(nn::load_oxw(a.weights));
  stage("benchmark");
  emit(nn::benchmark_inference(g, a.size, a.threads, a.repeats).to_json());
}

struct EvalArgs {
  std::string pred, gt, mask;
  std::size_t border = 0;
};

void run_eval(const EvalArgs& a) {
  stage("read maps");
  const StO2Map pred(io::read_plane(a.pred));
  const StO2Map gt(io::read_plane(a.gt));
  stage("mask");
  Mask m = a.mask.empty() ? Mask(gt.width(), gt.height(), true) : io::read_mask(a.mask);
  if (a.border > 0) m = m.eroded_border(a.border);
  stage("nmae");
  const double e = nmae(pred, gt, m);
  emit({{"nmae", e}, {"pixels", m.count()}, {"pred", a.pred}, {"gt", a.gt}});
}

struct TimeseriesArgs {
  std::string frames, roi, method = "ssop", pairing = "adjacent";
  std::string ref, lut, basis = default_basis(), weights, checkpoints;
  std::string csv, svg;
  std::optional<double> fx;
  unsigned threads = 0;
};

void run_timeseries(const TimeseriesArgs& a) {
  stage("frame manifest");
  const auto frames = read_frame_manifest(a.frames);
  const Pairing pairing = pair_frames(frames);
  for (const auto& w : pairing.warnings) std::cerr << "warning: " << w << '\n';
  if (pairing.pairs.empty()) throw Error(Errc::invalid_argument, "no 659/851 nm frame pairs in " + a.frames);
  const Roi roi = Roi::parse(a.roi);
  stage("reference load");
  const auto refs = load_references(a.ref);

  PairEstimator estimator;
  std::optional<LutInverter> inv;
  std::optional<nn::Generator> gen;
  ChromophoreBasis basis;
  if (a.method == "ssop") {
    stage("lut load");
    inv.emplace(load_lut(a.lut));
    stage("basis load");
    const double w2[] = {659.0, 851.0};
    basis = load_basis(a.basis).select(w2);
    SsopArgs sa;
    const double fx = resolve(a.fx, pairing.pairs.front().first.path, "fx_mm", "--fx");
    const SsopFilterSpec spec = ssop_spec(sa, fx);
    estimator = [&, spec](const ImagePlane& x, const ImagePlane& y) {
      return ssop_sto2(x, y, refs, *inv, basis, spec, 1).sto2;
    };
  } else {
    stage("weights load");
    gen.emplace(nn::load_oxw(a.weights));
    const ReferenceMeasurement& r659 = find_reference(refs, 659.0);
    const ReferenceMeasurement& r851 = find_reference(refs, 851.0);
    estimator = [&](const ImagePlane& x, const ImagePlane& y) {
      return nn::forward_generator(build_input_tensor(x, y, r659, r851), *gen, 1);
    };
  }
  stage("timeseries");
  const auto series = roi_timeseries(pairing.pairs, roi, estimator, a.threads);
  std::vector<Checkpoint> checkpoints;
  if (!a.checkpoints.empty()) {
    stage("checkpoints");
    checkpoints = read_checkpoints(a.checkpoints);
  }
  stage("write output");
  auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + path);
    out << text;
  };
  write_text(a.csv, timeseries_csv(series, a.method));
  if (!a.svg.empty()) write_text(a.svg, timeseries_svg(series, checkpoints, a.method));
  json points = json::array();
  for (const auto& p : series) points.push_back({{"t", p.t_seconds}, {"mean", p.mean_sto2}, {"std", p.std_sto2}});
  emit({{"csv", a.csv}, {"svg", a.svg}, {"method", a.method}, {"pairs", pairing.pairs.size()},
        {"dropped", pairing.dropped.size()}, {"series", points}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oxymap: tissue oxygenation mapping from structured-light images"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  LutArgs lut;
  auto* lut_cmd = app.add_subcommand("lut", "reflectance lookup tables")->require_subcommand(1);
  auto* lut_build = lut_cmd->add_subcommand("build", "tabulate (Rd_DC, Rd_AC) over a mua x musp grid");
  lut_build->add_option("--fx-ac", lut.spec.fx_ac, "AC spatial frequency, mm^-1")->capture_default_str();
  lut_build->add_option("--n", lut.spec.n, "tissue refractive index")->capture_default_str();
  lut_build->add_option("--mua-min", lut.spec.mua_min)->capture_default_str();
  lut_build->add_option("--mua-max", lut.spec.mua_max)->capture_default_str();
  lut_build->add_option("--musp-min", lut.spec.musp_min)->capture_default_str();
  lut_build->add_option("--musp-max", lut.spec.musp_max)->capture_default_str();
  lut_build->add_option("--mua-count", lut.spec.mua_count)->capture_default_str();
  lut_build->add_option("--musp-count", lut.spec.musp_count)->capture_default_str();
  lut_build->add_option("--out", lut.out)->required();
  lut_build->callback([&] {
    g_command = "lut build";
    run_lut(lut);
  });

  PhantomArgs ph;
  auto* ph_cmd = app.add_subcommand("phantom", "synthetic phantoms")->require_subcommand(1);
  auto add_phantom_common = [&](CLI::App* c) {
    c->add_option("--config", ph.config, "scene configuration JSON (defaults when omitted)");
    c->add_option("--seed", ph.seed)->capture_default_str();
    c->add_option("--out", ph.out, "output directory")->required();
    c->add_option("--fx", ph.fx, "AC spatial frequency, mm^-1")->capture_default_str();
    c->add_option("--noise", ph.noise, "noise std as a fraction of the signal")->capture_default_str();
    c->add_option("--ref-mua", ph.ref_mua)->capture_default_str();
    c->add_option("--ref-musp", ph.ref_musp)->capture_default_str();
  };
  auto* ph_gen = ph_cmd->add_subcommand("gen", "render one scene with truth, references and network input");
  add_phantom_common(ph_gen);
  ph_gen->callback([&] {
    g_command = "phantom gen";
    run_phantom_gen(ph);
  });
  auto* ph_ds = ph_cmd->add_subcommand("dataset", "render scenes and cut them into a patch dataset");
  add_phantom_common(ph_ds);
  ph_ds->add_option("--count", ph.count, "number of scenes")->capture_default_str();
  ph_ds->add_option("--patch-size", ph.patch_size)->capture_default_str();
  ph_ds->add_option("--stride-fraction", ph.stride_fraction)->capture_default_str();
  ph_ds->add_flag("--no-augment", ph.no_augment);
  ph_ds->callback([&] {
    g_command = "phantom dataset";
    run_phantom_dataset(ph);
  });

  SfdiArgs sf;
  auto* sf_cmd = app.add_subcommand("sfdi", "three-phase optical properties at one wavelength");
  for (int k = 0; k < 3; ++k) {
    sf_cmd->add_option("--dc" + std::to_string(k), sf.dc[k])->required();
    sf_cmd->add_option("--ac" + std::to_string(k), sf.ac[k])->required();
  }
  sf_cmd->add_option("--ref", sf.ref, "reference bundle")->required();
  sf_cmd->add_option("--lut", sf.lut)->required();
  sf_cmd->add_option("--out", sf.out)->required();
  sf_cmd->add_option("--mask", sf.mask);
  sf_cmd->add_option("--wavelength", sf.wavelength, "nm; read from the image metadata when omitted");
  sf_cmd->add_option("--fx", sf.fx, "AC frequency; read from the image metadata when omitted");
  sf_cmd->add_option("--threads", sf.threads);
  sf_cmd->callback([&] {
    g_command = "sfdi";
    run_sfdi(sf);
  });

  Sto2Args st;
  auto* st_cmd = app.add_subcommand("sto2", "saturation from absorption maps");
  st_cmd->add_option("--mua", st.mua, "WAVELENGTH:FILE, repeated")->required()->take_all();
  st_cmd->add_option("--basis", st.basis)->capture_default_str();
  st_cmd->add_option("--out", st.out)->required();
  st_cmd->add_option("--threads", st.threads);
  st_cmd->callback([&] {
    g_command = "sto2";
    run_sto2(st);
  });

  SsopArgs ss;
  auto* ss_cmd = app.add_subcommand("ssop", "saturation from one structured image per wavelength");
  ss_cmd->add_option("--img659", ss.img659)->required();
  ss_cmd->add_option("--img851", ss.img851)->required();
  ss_cmd->add_option("--ref", ss.ref)->required();
  ss_cmd->add_option("--lut", ss.lut)->required();
  ss_cmd->add_option("--basis", ss.basis)->capture_default_str();
  ss_cmd->add_option("--out", ss.out)->required();
  ss_cmd->add_option("--lp", ss.lp, "low-pass cutoff as a fraction of fx")->capture_default_str();
  ss_cmd->add_option("--hpw", ss.hpw, "band half-width as a fraction of fx")->capture_default_str();
  ss_cmd->add_option("--fx", ss.fx, "carrier frequency; read from the image metadata when omitted");
  ss_cmd->add_option("--axis", ss.axis)->check(CLI::IsMember({"x", "y"}))->capture_default_str();
  ss_cmd->add_option("--border", ss.border)->capture_default_str();
  ss_cmd->add_option("--threads", ss.threads);
  ss_cmd->callback([&] {
    g_command = "ssop";
    run_ssop(ss);
  });

  InferArgs in;
  auto* in_cmd = app.add_subcommand("infer", "run the generator network on an input tensor");
  in_cmd->add_option("--weights", in.weights)->required();
  in_cmd->add_option("--input", in.input)->required();
  in_cmd->add_option("--out", in.out)->required();
  in_cmd->add_option("--threads", in.threads);
  in_cmd->callback([&] {
    g_command = "infer";
    run_infer(in);
  });

  BenchArgs be;
  auto* be_cmd = app.add_subcommand("bench", "time generator inference");
  be_cmd->add_option("--weights", be.weights)->required();
  be_cmd->add_option("--size", be.size)->capture_default_str();
  be_cmd->add_option("--threads", be.threads)->capture_default_str();
  be_cmd->add_option("--repeats", be.repeats)->capture_default_str();
  be_cmd->callback([&] {
    g_command = "bench";
    run_bench(be);
  });

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "NMAE of a saturation map against truth");
  ev_cmd->add_option("--pred", ev.pred)->required();
  ev_cmd->add_option("--gt", ev.gt)->required();
  ev_cmd->add_option("--mask", ev.mask);
  ev_cmd->add_option("--border", ev.border, "exclude this many pixels at every edge")->capture_default_str();
  ev_cmd->callback([&] {
    g_command = "eval";
    run_eval(ev);
  });

  TimeseriesArgs ts;
  auto* ts_cmd = app.add_subcommand("timeseries", "ROI saturation over an alternating frame sequence");
  ts_cmd->add_option("--frames", ts.frames, "frame manifest (JSON lines)")->required();
  ts_cmd->add_option("--roi", ts.roi, "row,col,height,width")->required();
  ts_cmd->add_option("--method", ts.method)->check(CLI::IsMember({"ssop", "oxygan"}))->capture_default_str();
  ts_cmd->add_option("--pairing", ts.pairing)->check(CLI::IsMember({"adjacent"}))->capture_default_str();
  ts_cmd->add_option("--ref", ts.ref)->required();
  ts_cmd->add_option("--lut", ts.lut);
  ts_cmd->add_option("--basis", ts.basis)->capture_default_str();
  ts_cmd->add_option("--weights", ts.weights);
  ts_cmd->add_option("--fx", ts.fx);
  ts_cmd->add_option("--checkpoints", ts.checkpoints, "SFDI checkpoints (JSON lines)");
  ts_cmd->add_option("--csv", ts.csv)->required();
  ts_cmd->add_option("--svg", ts.svg);
  ts_cmd->add_option("--threads", ts.threads);
  ts_cmd->callback([&] {
    g_command = "timeseries";
    if (ts.method == "ssop" && ts.lut.empty()) throw CLI::RequiredError("--lut");
    if (ts.method == "oxygan" && ts.weights.empty()) throw CLI::RequiredError("--weights");
    run_timeseries(ts);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << json{{"status", "error"}, {"command", g_command}, {"stage", g_stage},
                      {"code", std::string(errc_name(e.code()))}, {"message", e.what()}}
                     .dump()
              << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"status", "error"}, {"command", g_command}, {"stage", g_stage}, {"code", "internal"},
                      {"message", e.what()}}
                     .dump()
              << std::endl;
    return 1;
  }
  return 0;
}
