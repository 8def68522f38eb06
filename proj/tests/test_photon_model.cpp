#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oxymap/photon_model.hpp"

using namespace oxymap;

namespace {

struct Sample {
  double mua, musp;
};

std::vector<Sample> interior_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> la(std::log(0.002), std::log(0.4));
  std::uniform_real_distribution<double> ls(std::log(0.15), std::log(4.0));
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({std::exp(la(rng)), std::exp(ls(rng))});
  return out;
}

double worst_round_trip(const LutInverter& inv, const std::vector<Sample>& samples) {
  const auto& lut = inv.lut();
  double worst = 0.0;
  for (const auto& s : samples) {
    const double dc = diffuse_reflectance(s.mua, s.musp, lut.fx_dc, lut.refractive_index);
    const double ac = diffuse_reflectance(s.mua, s.musp, lut.fx_ac, lut.refractive_index);
    const OpticalProperties p = inv.invert(dc, ac);
    worst = std::max({worst, std::fabs(p.mua / s.mua - 1.0), std::fabs(p.musp / s.musp - 1.0)});
  }
  return worst;
}

const LutInverter& default_inverter() {
  static const LutInverter inv(build_lut(LutGridSpec{}));
  return inv;
}

}  // namespace

TEST_CASE("zero absorption at DC reflects everything") {
  for (double musp : {0.1, 1.0, 7.5}) CHECK(diffuse_reflectance(0.0, musp, 0.0, 1.4) == 1.0);
}

TEST_CASE("closed form against an independent high-precision evaluation") {
  // Reference values computed with 30-digit arithmetic from the same closed form.
  CHECK(diffuse_reflectance(0.02, 1.2, 0.2, 1.4) == doctest::Approx(0.145874639027065737).epsilon(1e-14));
  CHECK(diffuse_reflectance(0.02, 1.2, 0.0, 1.4) == doctest::Approx(0.543746402563476290).epsilon(1e-14));
  CHECK(diffuse_reflectance(0.01, 1.0, 0.2, 1.4) == doctest::Approx(0.117906947952362964).epsilon(1e-14));
  CHECK(diffuse_reflectance(0.01, 1.0, 0.0, 1.4) == doctest::Approx(0.614887697448738730).epsilon(1e-14));
}

TEST_CASE("reflectance falls with frequency and absorption") {
  CHECK(diffuse_reflectance(0.01, 1.0, 0.2, 1.4) < diffuse_reflectance(0.01, 1.0, 0.0, 1.4));
  double prev = 2.0;
  for (double fx = 0.0; fx <= 0.5; fx += 0.05) {
    const double rd = diffuse_reflectance(0.03, 0.9, fx, 1.4);
    CHECK(rd < prev);
    prev = rd;
  }
}

TEST_CASE("forward model input validation") {
  CHECK_THROWS_AS(diffuse_reflectance(-0.01, 1.0, 0.0, 1.4), Error);
  CHECK_THROWS_AS(diffuse_reflectance(0.01, 0.0, 0.0, 1.4), Error);
  CHECK_THROWS_AS(diffuse_reflectance(0.01, 1.0, -0.1, 1.4), Error);
  CHECK_THROWS_AS(diffuse_reflectance(0.01, 1.0, 0.0, 1.0), Error);
}

TEST_CASE("two by two table equals direct evaluation") {
  const DiffusionModel model(1.4);
  const ReflectanceLut lut = build_lut({0.01, 0.1}, {0.5, 2.0}, 0.0, 0.2, model);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(lut.rd_dc[lut.index(i, j)] == diffuse_reflectance(lut.mua_grid[i], lut.musp_grid[j], 0.0, 1.4));
      CHECK(lut.rd_ac[lut.index(i, j)] == diffuse_reflectance(lut.mua_grid[i], lut.musp_grid[j], 0.2, 1.4));
    }
  CHECK(lut.model_id == model.id());
}

TEST_CASE("table construction rejects invalid configurations") {
  const DiffusionModel model(1.4);
  CHECK_THROWS_AS(build_lut({0.01, 0.1}, {0.5, 2.0}, 0.05, 0.2, model), Error);
  CHECK_THROWS_AS(build_lut({0.01, 0.1}, {0.5, 2.0}, 0.0, 0.0, model), Error);
  CHECK_THROWS_AS(build_lut({0.01}, {0.5, 2.0}, 0.0, 0.2, model), Error);
  CHECK_THROWS_AS(build_lut({0.1, 0.01}, {0.5, 2.0}, 0.0, 0.2, model), Error);
  LutGridSpec bad;
  bad.mua_min = 0.0;
  CHECK_THROWS_AS(build_lut(bad), Error);
  bad = LutGridSpec{};
  bad.mua_count = 1;
  CHECK_THROWS_AS(build_lut(bad), Error);
}

TEST_CASE("default grid is monotone in absorption and frequency") {
  const ReflectanceLut& lut = default_inverter().lut();
  CHECK(lut.mua_grid.size() == 256);
  CHECK(lut.musp_grid.size() == 256);
  CHECK(lut.mua_grid.front() == doctest::Approx(0.001));
  CHECK(lut.mua_grid.back() == doctest::Approx(0.5));
  CHECK(lut.musp_grid.front() == doctest::Approx(0.1));
  CHECK(lut.musp_grid.back() == doctest::Approx(5.0));
  std::size_t violations = 0;
  for (std::size_t j = 0; j < lut.musp_grid.size(); ++j)
    for (std::size_t i = 0; i + 1 < lut.mua_grid.size(); ++i) {
      if (!(lut.rd_dc[lut.index(i + 1, j)] < lut.rd_dc[lut.index(i, j)])) ++violations;
      if (!(lut.rd_ac[lut.index(i, j)] < lut.rd_dc[lut.index(i, j)])) ++violations;
      if (!(lut.rd_dc[lut.index(i, j)] > 0.0 && lut.rd_dc[lut.index(i, j)] <= 1.0)) ++violations;
    }
  CHECK(violations == 0);
}

TEST_CASE("inversion of a node returns the node") {
  const LutInverter& inv = default_inverter();
  const ReflectanceLut& lut = inv.lut();
  for (std::size_t i : {0u, 17u, 128u, 200u, 255u})
    for (std::size_t j : {0u, 3u, 99u, 254u, 255u}) {
      const OpticalProperties p = lut_invert(lut.rd_dc[lut.index(i, j)], lut.rd_ac[lut.index(i, j)], inv);
      CHECK(p.mua == lut.mua_grid[i]);
      CHECK(p.musp == lut.musp_grid[j]);
    }
}

TEST_CASE("inversion of a mid-cell point stays within one percent") {
  const LutInverter& inv = default_inverter();
  const ReflectanceLut& lut = inv.lut();
  const double mua = std::sqrt(lut.mua_grid[100] * lut.mua_grid[101]);
  const double musp = std::sqrt(lut.musp_grid[150] * lut.musp_grid[151]);
  const OpticalProperties p = inv.invert(diffuse_reflectance(mua, musp, 0.0, 1.4),
                                         diffuse_reflectance(mua, musp, 0.2, 1.4));
  CHECK(std::fabs(p.mua / mua - 1.0) < 0.01);
  CHECK(std::fabs(p.musp / musp - 1.0) < 0.01);
}

TEST_CASE("round trip converges with grid density") {
  const auto samples = interior_samples(2000, 11);
  const double coarse = worst_round_trip(default_inverter(), samples);
  MESSAGE("worst relative error, default grid: " << coarse);
  CHECK(coarse < 0.01);

  LutGridSpec dense;
  dense.mua_count = 4 * dense.mua_count;
  dense.musp_count = 4 * dense.musp_count;
  const LutInverter fine(build_lut(dense));
  const double fine_err = worst_round_trip(fine, samples);
  MESSAGE("worst relative error, 4x denser grid: " << fine_err);
  CHECK(fine_err < 0.001);
  CHECK(fine_err < coarse);
}

TEST_CASE("inversion is deterministic") {
  const LutInverter& inv = default_inverter();
  const auto samples = interior_samples(50, 5);
  for (const auto& s : samples) {
    const double dc = diffuse_reflectance(s.mua, s.musp, 0.0, 1.4);
    const double ac = diffuse_reflectance(s.mua, s.musp, 0.2, 1.4);
    const OpticalProperties a = inv.invert(dc, ac);
    const OpticalProperties b = inv.invert(dc, ac);
    CHECK(a.mua == b.mua);
    CHECK(a.musp == b.musp);
  }
}

TEST_CASE("inconsistent reflectance pair is out of gamut") {
  const LutInverter& inv = default_inverter();
  CHECK_FALSE(inv.try_invert(0.999, 0.001).has_value());
  try {
    inv.invert(0.999, 0.001);
    FAIL("expected out-of-gamut");
  } catch (const OutOfGamutError& e) {
    CHECK(e.code() == Errc::out_of_gamut);
    CHECK(e.distance > 0.0);
    CHECK(e.nearest.mua > 0.0);
    CHECK(e.nearest.musp > 0.0);
  }
}

TEST_CASE("map inversion") {
  const LutInverter& inv = default_inverter();
  const ReflectanceLut& lut = inv.lut();
  const std::size_t node = lut.index(60, 120);
  const ImagePlane dc(5, 4, 0.5, lut.rd_dc[node]);
  const ImagePlane ac(5, 4, 0.5, lut.rd_ac[node]);
  const InvertedMap m = lut_invert_map(dc, ac, inv, Mask(5, 4), 659.0, 2);
  CHECK(m.map.wavelength_nm == 659.0);
  CHECK(m.stats.inverted == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(m.map.mua[i] == lut.mua_grid[60]);
    CHECK(m.map.musp[i] == lut.musp_grid[120]);
  }

  const InvertedMap bad = lut_invert_map(ImagePlane(5, 4, 0.5, 0.999), ImagePlane(5, 4, 0.5, 0.001), inv,
                                         Mask(5, 4), 659.0);
  CHECK(bad.stats.out_of_gamut == 20);
  CHECK(bad.stats.out_of_gamut_fraction() == 1.0);
  CHECK(plane_stats(bad.map.mua).count == 0);

  Mask half(5, 4, true);
  half.set(0, false);
  const InvertedMap partial = lut_invert_map(dc, ac, inv, half);
  CHECK(partial.stats.skipped == 1);
  CHECK_FALSE(is_valid(partial.map.mua[0]));
}

TEST_CASE("table file round trip") {
  LutGridSpec spec;
  spec.mua_count = 32;
  spec.musp_count = 24;
  const ReflectanceLut lut = build_lut(spec);
  const auto path = std::filesystem::temp_directory_path() / "oxymap_test_lut.oxlt";
  save_lut(path, lut);
  const ReflectanceLut back = load_lut(path);
  CHECK(back.fx_dc == lut.fx_dc);
  CHECK(back.fx_ac == lut.fx_ac);
  CHECK(back.refractive_index == lut.refractive_index);
  CHECK(back.model_id == lut.model_id);
  REQUIRE(back.rd_dc.size() == lut.rd_dc.size());
  for (std::size_t i = 0; i < lut.rd_dc.size(); ++i) {
    CHECK(back.rd_dc[i] == static_cast<double>(static_cast<float>(lut.rd_dc[i])));
    CHECK(back.rd_ac[i] == static_cast<double>(static_cast<float>(lut.rd_ac[i])));
  }
  CHECK(back.mua_grid == lut.mua_grid);
}
