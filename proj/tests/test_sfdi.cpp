#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oxymap/phantom.hpp"
#include "oxymap/sfdi.hpp"

using namespace oxymap;

namespace {

constexpr double kPi = std::numbers::pi;

PhaseTriplet sinusoid(std::size_t w, std::size_t h, double a, double b, double fx, double phase) {
  PhaseTriplet t{ImagePlane(w, h, 0.25), ImagePlane(w, h, 0.25), ImagePlane(w, h, 0.25), fx, 659.0};
  ImagePlane* planes[] = {&t.i0, &t.i1, &t.i2};
  for (int k = 0; k < 3; ++k)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        planes[k]->at(r, c) = a + b * std::sin(2 * kPi * fx * 0.25 * c + phase + 2 * kPi * k / 3.0);
  return t;
}

/// Scene whose absorption at `wl` is exactly the given plane.
Scene optical_scene(const ImagePlane& mua, const ImagePlane& musp, double wl) {
  Scene s;
  s.basis.wavelengths_nm = {wl, wl + 1.0};
  s.basis.names = {kOxyHb, kDeoxyHb};
  s.basis.epsilon = Eigen::MatrixXd::Identity(2, 2);
  s.conc_hbo2 = mua;
  s.conc_hhb = ImagePlane(mua.width(), mua.height(), mua.pitch_mm(), 0.0);
  s.musp_planes = {musp, musp};
  return s;
}

struct Rendered {
  PhaseTriplet dc, ac;
  ReferenceMeasurement ref;
};

Rendered render(const Scene& s, double wl, double fx_ac, double gain = 1.0) {
  const DiffusionModel model(1.4);
  RenderSettings rs;
  rs.gain = gain;
  Rendered out{render_triplet(s, wl, rs, model), {}, {}};
  rs.fx = fx_ac;
  out.ac = render_triplet(s, wl, rs, model);
  const ImagePlane& m = s.conc_hbo2;
  out.ref = render_reference(m.width(), m.height(), m.pitch_mm(), wl, fx_ac, ReferencePhantom{0.01, 1.0, gain}, model);
  return out;
}

const LutInverter& inverter() {
  static const LutInverter inv(build_lut(LutGridSpec{}));
  return inv;
}

}  // namespace

TEST_CASE("unmodulated triplet demodulates to its level") {
  const PhaseTriplet t{ImagePlane(4, 3, 1.0, 0.7), ImagePlane(4, 3, 1.0, 0.7), ImagePlane(4, 3, 1.0, 0.7), 0.0,
                       659.0};
  const Demodulated d = demodulate(t);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(d.m_ac[i] == 0.0);
    CHECK(d.m_dc[i] == doctest::Approx(0.7).epsilon(1e-15));
  }
}

TEST_CASE("three-phase identity recovers offset and amplitude") {
  const Demodulated d = demodulate(sinusoid(64, 8, 0.5, 0.2, 0.2, 0.0));
  for (std::size_t i = 0; i < d.m_ac.size(); ++i) {
    CHECK(std::fabs(d.m_dc[i] - 0.5) < 1e-14);
    CHECK(std::fabs(d.m_ac[i] - 0.2) < 1e-14);
  }
}

TEST_CASE("demodulation matches a scalar oracle") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  PhaseTriplet t{ImagePlane(17, 9, 0.1), ImagePlane(17, 9, 0.1), ImagePlane(17, 9, 0.1), 0.2, 851.0};
  for (auto* p : {&t.i0, &t.i1, &t.i2})
    for (auto& v : p->values()) v = u(rng);
  const Demodulated d = demodulate(t, 3);
  for (std::size_t i = 0; i < t.i0.size(); ++i) {
    const double a = t.i0[i], b = t.i1[i], c = t.i2[i];
    const double ac = std::sqrt(2.0) / 3.0 * std::sqrt((a - b) * (a - b) + (b - c) * (b - c) + (c - a) * (c - a));
    CHECK(std::fabs(d.m_ac[i] - ac) <= 1e-12);
    CHECK(std::fabs(d.m_dc[i] - (a + b + c) / 3.0) <= 1e-12);
  }
}

TEST_CASE("demodulation ignores a global phase shift") {
  const Demodulated ref = demodulate(sinusoid(40, 4, 0.6, 0.25, 0.2, 0.0));
  for (double phi : {0.1, 1.0, 2.5}) {
    const Demodulated d = demodulate(sinusoid(40, 4, 0.6, 0.25, 0.2, phi));
    for (std::size_t i = 0; i < d.m_ac.size(); ++i) CHECK(std::fabs(d.m_ac[i] - ref.m_ac[i]) <= 1e-9);
  }
}

TEST_CASE("demodulation rejects mismatched planes") {
  const PhaseTriplet t{ImagePlane(4, 3, 1.0), ImagePlane(4, 3, 1.0), ImagePlane(3, 3, 1.0), 0.2, 659.0};
  CHECK_THROWS_AS(demodulate(t), Error);
}

TEST_CASE("calibration against the reference") {
  const DiffusionModel model(1.4);
  const ReferenceMeasurement ref{ImagePlane(6, 4, 0.25, 0.8), ImagePlane(6, 4, 0.25, 0.3), 0.01, 1.0, 659.0, 0.2};
  const double pred_dc = model.reflectance(0.01, 1.0, 0.0);
  const double pred_ac = model.reflectance(0.01, 1.0, 0.2);

  const Calibrated same = calibrate(ref.m_dc_ref, ref, Band::dc, model);
  const Calibrated same_ac = calibrate(ref.m_ac_ref, ref, Band::ac, model);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(same.rd[i] == doctest::Approx(pred_dc).epsilon(1e-15));
    CHECK(same_ac.rd[i] == doctest::Approx(pred_ac).epsilon(1e-15));
  }
  CHECK(same.valid.count() == 24);

  const Calibrated zero = calibrate(ImagePlane(6, 4, 0.25, 0.0), ref, Band::dc, model);
  CHECK(zero.rd[0] == 0.0);
  CHECK(zero.valid.count() == 0);

  const Calibrated bright = calibrate(ImagePlane(6, 4, 0.25, 8.0), ref, Band::dc, model);
  CHECK(bright.rd[0] > 1.0);
  CHECK(bright.valid.count() == 0);
}

TEST_CASE("calibration is invariant to a common scale") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 0.9);
  const DiffusionModel model(1.4);
  ImagePlane samp(5, 5, 0.25), mref(5, 5, 0.25);
  for (auto& v : samp.values()) v = u(rng);
  for (auto& v : mref.values()) v = u(rng);
  const ReferenceMeasurement ref{mref, mref, 0.01, 1.0, 659.0, 0.2};
  const Calibrated base = calibrate(samp, ref, Band::ac, model);
  for (double k : {0.01, 3.0}) {
    ImagePlane s2 = samp, r2 = mref;
    for (auto& v : s2.values()) v *= k;
    for (auto& v : r2.values()) v *= k;
    const Calibrated scaled = calibrate(s2, {r2, r2, 0.01, 1.0, 659.0, 0.2}, Band::ac, model);
    for (std::size_t i = 0; i < 25; ++i) CHECK(scaled.rd[i] == doctest::Approx(base.rd[i]).epsilon(1e-14));
  }
}

TEST_CASE("non-positive reference magnitude is an error only where unmasked") {
  const DiffusionModel model(1.4);
  ImagePlane dc(3, 1, 1.0, 0.5);
  dc[1] = 0.0;
  const ReferenceMeasurement ref{dc, ImagePlane(3, 1, 1.0, 0.2), 0.01, 1.0, 659.0, 0.2};
  CHECK_THROWS_AS(calibrate(ImagePlane(3, 1, 1.0, 0.4), ref, Band::dc, model), Error);
  Mask m(3, 1, true);
  m.set(1, false);
  const Calibrated c = calibrate(ImagePlane(3, 1, 1.0, 0.4), ref, Band::dc, model, &m);
  CHECK_FALSE(c.valid[1]);
  CHECK(c.valid[0]);
}

TEST_CASE("rendered sample calibrates to its forward reflectance") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ua(0.005, 0.05), us(0.6, 2.0);
  ImagePlane mua(48, 8, 0.25), musp(48, 8, 0.25);
  for (auto& v : mua.values()) v = ua(rng);
  for (auto& v : musp.values()) v = us(rng);
  const Rendered r = render(optical_scene(mua, musp, 659.0), 659.0, 0.2, 3.5);
  const DiffusionModel model(1.4);
  const Calibrated dc = calibrate(demodulate(r.dc).m_dc, r.ref, Band::dc, model);
  const Calibrated ac = calibrate(demodulate(r.ac).m_ac, r.ref, Band::ac, model);
  for (std::size_t i = 0; i < mua.size(); ++i) {
    CHECK(std::fabs(dc.rd[i] / model.reflectance(mua[i], musp[i], 0.0) - 1.0) < 0.005);
    CHECK(std::fabs(ac.rd[i] / model.reflectance(mua[i], musp[i], 0.2) - 1.0) < 0.005);
  }
}

TEST_CASE("homogeneous phantom recovers its optical properties") {
  const Rendered r = render(optical_scene(ImagePlane(32, 16, 0.25, 0.01), ImagePlane(32, 16, 0.25, 1.0), 659.0),
                            659.0, 0.2);
  const SfdiResult res = sfdi_optical_properties(r.dc, r.ac, r.ref, inverter());
  CHECK(res.stats.inverted == 32 * 16);
  for (std::size_t i = 0; i < res.properties.mua.size(); ++i) {
    CHECK(std::fabs(res.properties.mua[i] / 0.01 - 1.0) < 0.01);
    CHECK(std::fabs(res.properties.musp[i] / 1.0 - 1.0) < 0.01);
  }
}

TEST_CASE("two-region phantom recovers each region") {
  const std::size_t w = 40, h = 12;
  ImagePlane mua(w, h, 0.25), musp(w, h, 0.25);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      mua.at(r, c) = c < w / 2 ? 0.01 : 0.03;
      musp.at(r, c) = c < w / 2 ? 1.0 : 1.5;
    }
  const Rendered rd = render(optical_scene(mua, musp, 851.0), 851.0, 0.2, 2.0);
  const SfdiResult res = sfdi_optical_properties(rd.dc, rd.ac, rd.ref, inverter(), nullptr, 2);
  const std::size_t margin = 3;
  Mask left(w, h, false), right(w, h, false);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (c + margin < w / 2) left.set(r, c, true);
      if (c >= w / 2 + margin) right.set(r, c, true);
    }
  CHECK(std::fabs(masked_stats(res.properties.mua, left).mean / 0.01 - 1.0) < 0.01);
  CHECK(std::fabs(masked_stats(res.properties.musp, left).mean / 1.0 - 1.0) < 0.01);
  CHECK(std::fabs(masked_stats(res.properties.mua, right).mean / 0.03 - 1.0) < 0.01);
  CHECK(std::fabs(masked_stats(res.properties.musp, right).mean / 1.5 - 1.0) < 0.01);
}

TEST_CASE("frequency and wavelength mismatches are rejected") {
  const Rendered r = render(optical_scene(ImagePlane(16, 4, 0.25, 0.01), ImagePlane(16, 4, 0.25, 1.0), 659.0),
                            659.0, 0.2);
  LutGridSpec spec;
  spec.mua_count = spec.musp_count = 16;
  spec.fx_ac = 0.1;
  const LutInverter wrong(build_lut(spec));
  try {
    sfdi_optical_properties(r.dc, r.ac, r.ref, wrong);
    FAIL("expected frequency mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::frequency_mismatch);
  }
  ReferenceMeasurement other = r.ref;
  other.wavelength_nm = 851.0;
  CHECK_THROWS_AS(sfdi_optical_properties(r.dc, r.ac, other, inverter()), Error);
}

TEST_CASE("reference bundle round trip") {
  const DiffusionModel model(1.4);
  std::vector<ReferenceMeasurement> refs{render_reference(8, 6, 0.25, 659.0, 0.2, {}, model),
                                         render_reference(8, 6, 0.25, 851.0, 0.2, {0.02, 1.2, 2.0}, model)};
  const auto path = std::filesystem::temp_directory_path() / "oxymap_test_refs.oxrf";
  save_references(path, refs);
  const auto back = load_references(path);
  REQUIRE(back.size() == 2);
  const ReferenceMeasurement& r = find_reference(back, 851.0);
  CHECK(r.known_mua == 0.02);
  CHECK(r.known_musp == 1.2);
  CHECK(r.fx_ac == 0.2);
  CHECK(r.m_dc_ref[5] == static_cast<double>(static_cast<float>(refs[1].m_dc_ref[5])));
  CHECK_THROWS_AS(find_reference(back, 700.0), Error);
}
