#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oxymap/phantom.hpp"
#include "oxymap/ssop.hpp"

using namespace oxymap;

namespace {

constexpr double kPi = std::numbers::pi;

const ChromophoreBasis& table() {
  static const ChromophoreBasis b = load_basis(std::filesystem::path(OXYMAP_DATA_DIR) / "hemoglobin.json");
  return b;
}

const LutInverter& inverter() {
  static const LutInverter inv(build_lut(LutGridSpec{}));
  return inv;
}

ImagePlane carrier(std::size_t w, std::size_t h, double a, double b, double fx, double phase, double pitch = 0.25) {
  ImagePlane p(w, h, pitch);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) p.at(r, c) = a + b * std::sin(2 * kPi * fx * pitch * c + phase);
  return p;
}

Mask interior(std::size_t w, std::size_t h) { return Mask(w, h, true).eroded_border(16); }

struct Snapshot {
  Scene scene;
  ImagePlane i659, i851;
  std::vector<ReferenceMeasurement> refs;
};

Snapshot flat_snapshot(double sto2, std::size_t w, std::size_t h, double noise, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.width = w;
  cfg.height = h;
  cfg.sto2_min = cfg.sto2_max = sto2;
  const DiffusionModel model(1.4);
  Snapshot s{generate_scene(cfg, table(), seed), {}, {}, {}};
  RenderSettings rs;
  rs.fx = 0.2;
  rs.noise_sigma = noise;
  rs.noise_seed = seed;
  s.i659 = render_structured(s.scene, 659.0, rs, model);
  rs.noise_seed = seed + 1;
  s.i851 = render_structured(s.scene, 851.0, rs, model);
  s.refs = {render_reference(w, h, 0.25, 659.0, 0.2, {}, model), render_reference(w, h, 0.25, 851.0, 0.2, {}, model)};
  return s;
}

}  // namespace

TEST_CASE("constant image has no carrier energy") {
  const SsopDemodulated d = ssop_demodulate(ImagePlane(200, 40, 0.25, 0.8), SsopFilterSpec{});
  for (std::size_t i = 0; i < d.m_dc.size(); ++i) {
    CHECK(std::fabs(d.m_dc[i] - 0.8) < 1e-9);
    CHECK(d.m_ac[i] <= 1e-6 * 0.8);
  }
}

TEST_CASE("pure sinusoid recovers offset and amplitude in the interior") {
  for (double phase : {0.0, 0.9, 2.2}) {
    const SsopDemodulated d = ssop_demodulate(carrier(200, 48, 0.5, 0.2, 0.2, phase), SsopFilterSpec{});
    const Mask m = interior(200, 48);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) {
        CHECK(std::fabs(d.m_dc[i] / 0.5 - 1.0) < 0.01);
        CHECK(std::fabs(d.m_ac[i] / 0.2 - 1.0) < 0.01);
      }
  }
}

TEST_CASE("single snapshot agrees with three-phase demodulation on a rendered phantom") {
  const DiffusionModel model(1.4);
  SceneConfig cfg;
  cfg.width = 192;
  cfg.height = 64;
  const Scene scene = generate_scene(cfg, table(), 4);
  RenderSettings rs;
  rs.fx = 0.2;
  for (double phase : {0.0, 1.3}) {
    rs.phase_rad = phase;
    const SsopDemodulated d = ssop_demodulate(render_structured(scene, 851.0, rs, model), SsopFilterSpec{});
    const Demodulated t = demodulate(render_triplet(scene, 851.0, rs, model));
    const Mask m = interior(192, 64);
    CHECK(d.confident.count() == m.count());
    double worst = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i])
        worst = std::max({worst, std::fabs(d.m_dc[i] / t.m_dc[i] - 1.0), std::fabs(d.m_ac[i] / t.m_ac[i] - 1.0)});
    MESSAGE("phase " << phase << ": worst interior relative deviation " << worst);
    CHECK(worst < 0.02);
  }
}

TEST_CASE("modulation along rows is handled by transposition") {
  const ImagePlane img = carrier(200, 40, 0.6, 0.25, 0.2, 0.4);
  ImagePlane t(40, 200, 0.25);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 200; ++c) t.at(c, r) = img.at(r, c);
  SsopFilterSpec spec;
  const SsopDemodulated a = ssop_demodulate(img, spec);
  spec.modulation_axis = Axis::y;
  const SsopDemodulated b = ssop_demodulate(t, spec);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 200; ++c) {
      CHECK(b.m_ac.at(c, r) == a.m_ac.at(r, c));
      CHECK(b.m_dc.at(c, r) == a.m_dc.at(r, c));
      CHECK(b.confident.at(c, r) == a.confident.at(r, c));
    }
}

TEST_CASE("filter windows") {
  const SsopFilterSpec spec;
  CHECK(ssop_lowpass_gain(0.0, spec) == 1.0);
  CHECK(ssop_lowpass_gain(0.1, spec) == 0.0);
  CHECK(ssop_lowpass_gain(-0.05, spec) == doctest::Approx(std::cos(kPi / 4)));
  CHECK(ssop_band_gain(0.2, spec) == doctest::Approx(1.0));
  CHECK(ssop_band_gain(-0.2, spec) == 0.0);
  CHECK(ssop_band_gain(0.1, spec) == 0.0);
  CHECK(std::fabs(ssop_band_gain(0.3, spec)) < 1e-15);
  CHECK(ssop_band_gain(0.25, spec) == doctest::Approx(0.34));
  // the two windows do not overlap
  for (double u = 0.0; u < 0.5; u += 0.001) CHECK(std::fabs(ssop_lowpass_gain(u, spec) * ssop_band_gain(u, spec)) < 1e-15);
}

TEST_CASE("carrier energy lies inside the band window support") {
  const std::size_t w = 250;
  const double pitch = 0.25;
  const ImagePlane img = carrier(w, 1, 0.0, 1.0, 0.2, 0.3, pitch);
  const SsopFilterSpec spec;
  double inside = 0.0, total = 0.0;
  for (std::size_t k = 1; k < w / 2; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double hann = 0.5 - 0.5 * std::cos(2 * kPi * c / (w - 1.0));
      s += hann * img[c] * std::polar(1.0, -2 * kPi * k * c / double(w));
    }
    const double u = k / (w * pitch);
    total += std::norm(s);
    if (ssop_band_gain(u, spec) > 0.0) inside += std::norm(s);
  }
  CHECK(inside / total >= 0.99);
}

TEST_CASE("invalid demodulation requests") {
  SsopFilterSpec spec;
  spec.fx = 2.0;  // Nyquist at 0.25 mm pitch
  CHECK_THROWS_AS(ssop_demodulate(ImagePlane(200, 20, 0.25, 1.0), spec), Error);
  CHECK_THROWS_AS(ssop_demodulate(ImagePlane(120, 20, 0.25, 1.0), SsopFilterSpec{}), Error);
  spec = SsopFilterSpec{};
  spec.lowpass_cutoff = 1.0;
  CHECK_THROWS_AS(ssop_demodulate(ImagePlane(200, 20, 0.25, 1.0), spec), Error);
  spec = SsopFilterSpec{};
  spec.highpass_halfwidth = 0.0;
  CHECK_THROWS_AS(ssop_demodulate(ImagePlane(200, 20, 0.25, 1.0), spec), Error);
  ImagePlane holey(200, 20, 0.25, 1.0);
  holey[5] = kInvalid;
  CHECK_THROWS_AS(ssop_demodulate(holey, SsopFilterSpec{}), Error);
}

TEST_CASE("single snapshot demodulation is deterministic") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.01);
  ImagePlane img = carrier(256, 64, 0.5, 0.2, 0.2, 0.0);
  for (auto& v : img.values()) v += g(rng);
  const SsopDemodulated a = ssop_demodulate(img, SsopFilterSpec{});
  const SsopDemodulated b = ssop_demodulate(img, SsopFilterSpec{});
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(a.m_ac[i] == b.m_ac[i]);
    CHECK(a.m_dc[i] == b.m_dc[i]);
  }
}

TEST_CASE("flat phantom saturation from single snapshots") {
  const Snapshot clean = flat_snapshot(0.7, 256, 96, 0.0, 3);
  const SsopResult r = ssop_sto2(clean.i659, clean.i851, clean.refs, inverter(), table());
  const Mask m = interior(256, 96);
  const double clean_err = nmae(r.sto2, clean.scene.sto2(), m);
  MESSAGE("noise-free interior NMAE " << clean_err);
  CHECK(clean_err < 0.02);
  CHECK(r.properties.size() == 2);
  CHECK(r.confident.count() == m.count());

  const Snapshot noisy = flat_snapshot(0.7, 256, 96, 0.01, 3);
  const SsopResult rn = ssop_sto2(noisy.i659, noisy.i851, noisy.refs, inverter(), table());
  const double noisy_err = nmae(rn.sto2, noisy.scene.sto2(), m);
  MESSAGE("1% noise interior NMAE " << noisy_err);
  CHECK(noisy_err < 0.05);
}

TEST_CASE("snapshot inputs must agree") {
  const Snapshot s = flat_snapshot(0.7, 200, 40, 0.0, 1);
  const ImagePlane narrow = crop_plane(s.i851, 0, 0, 40, 180);
  CHECK_THROWS_AS(ssop_sto2(s.i659, narrow, s.refs, inverter(), table()), Error);

  SsopFilterSpec spec;
  spec.fx = 0.25;
  try {
    ssop_sto2(s.i659, s.i851, s.refs, inverter(), table(), spec);
    FAIL("expected frequency mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::frequency_mismatch);
  }
  const std::vector<ReferenceMeasurement> only659{s.refs[0]};
  CHECK_THROWS_AS(ssop_sto2(s.i659, s.i851, only659, inverter(), table()), Error);
}
