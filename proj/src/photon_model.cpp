#include "oxymap/photon_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "oxymap/io.hpp"
#include "oxymap/parallel.hpp"

namespace oxymap {

double effective_reflection(double n) {
  return -1.440 / (n * n) + 0.710 / n + 0.668 + 0.0636 * n;
}

double diffuse_reflectance(double mua, double musp, double fx, double n) {
  if (!(mua >= 0.0) || !(musp > 0.0) || !(fx >= 0.0))
    throw Error(Errc::invalid_argument, "diffuse_reflectance: need mua >= 0, musp > 0, fx >= 0");
  if (!(n > 1.0)) throw Error(Errc::invalid_argument, "diffuse_reflectance: refractive index must exceed 1");
  const double reff = effective_reflection(n);
  const double a = (1.0 - reff) / (2.0 * (1.0 + reff));
  const double mutr = mua + musp;
  const double albedo = musp / mutr;
  const double k = 2.0 * std::numbers::pi * fx;
  const double mueff = std::sqrt(3.0 * mua * mutr + k * k);
  const double r = mueff / mutr;
  return 3.0 * a * albedo / ((r + 1.0) * (r + 3.0 * a));
}

DiffusionModel::DiffusionModel(double n) : n_(n) {
  if (!(n > 1.0)) throw Error(Errc::invalid_argument, "refractive index must exceed 1");
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2)
    throw Error(Errc::invalid_argument, "log_space: need 0 < lo < hi and count >= 2");
  std::vector<double> out(count);
  const double llo = std::log(lo);
  const double step = (std::log(hi) - llo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::exp(llo + step * static_cast<double>(i));
  out.front() = lo;
  out.back() = hi;
  return out;
}

void ReflectanceLut::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::invalid_argument, "LUT: " + why); };
  if (fx_dc != 0.0) fail("DC frequency must be 0");
  if (!(fx_ac > 0.0)) fail("AC frequency must be positive");
  if (!(refractive_index > 1.0)) fail("refractive index must exceed 1");
  for (const auto* g : {&mua_grid, &musp_grid}) {
    if (g->size() < 2) fail("grid needs at least two samples");
    if (!(g->front() > 0.0)) fail("grid values must be positive");
    for (std::size_t i = 1; i < g->size(); ++i)
      if (!((*g)[i] > (*g)[i - 1])) fail("grid not strictly increasing");
  }
  const std::size_t n = mua_grid.size() * musp_grid.size();
  if (rd_dc.size() != n || rd_ac.size() != n) fail("table size does not match grid");
  for (std::size_t k = 0; k < n; ++k)
    if (!(rd_dc[k] > 0.0 && rd_dc[k] <= 1.0) || !(rd_ac[k] > 0.0 && rd_ac[k] <= 1.0))
      fail("reflectance outside (0, 1]");
  for (std::size_t j = 0; j < musp_grid.size(); ++j)
    for (std::size_t i = 1; i < mua_grid.size(); ++i)
      if (!(rd_dc[index(i, j)] < rd_dc[index(i - 1, j)])) fail("Rd_DC not strictly decreasing in mua");
}

ReflectanceLut build_lut(const std::vector<double>& mua_grid, const std::vector<double>& musp_grid,
                         double fx_dc, double fx_ac, const ForwardModel& model) {
  ReflectanceLut lut;
  lut.fx_dc = fx_dc;
  lut.fx_ac = fx_ac;
  lut.refractive_index = model.refractive_index();
  lut.model_id = model.id();
  lut.mua_grid = mua_grid;
  lut.musp_grid = musp_grid;
  if (fx_dc != 0.0) throw Error(Errc::invalid_argument, "LUT: DC frequency must be 0");
  if (mua_grid.size() < 2 || musp_grid.size() < 2)
    throw Error(Errc::invalid_argument, "LUT: grid sizes must be >= 2");
  const std::size_t n = mua_grid.size() * musp_grid.size();
  lut.rd_dc.resize(n);
  lut.rd_ac.resize(n);
  for (std::size_t i = 0; i < mua_grid.size(); ++i)
    for (std::size_t j = 0; j < musp_grid.size(); ++j) {
      lut.rd_dc[lut.index(i, j)] = model.reflectance(mua_grid[i], musp_grid[j], fx_dc);
      lut.rd_ac[lut.index(i, j)] = model.reflectance(mua_grid[i], musp_grid[j], fx_ac);
    }
  lut.validate();
  return lut;
}

ReflectanceLut build_lut(const LutGridSpec& spec) {
  if (spec.fx_dc != 0.0) throw Error(Errc::invalid_argument, "LUT: DC frequency must be 0");
  if (spec.mua_count < 2 || spec.musp_count < 2)
    throw Error(Errc::invalid_argument, "LUT: grid sizes must be >= 2");
  if (!(spec.mua_min > 0.0) || !(spec.musp_min > 0.0))
    throw Error(Errc::invalid_argument, "LUT: range lower bounds must be positive");
  const DiffusionModel model(spec.n);
  return build_lut(log_space(spec.mua_min, spec.mua_max, spec.mua_count),
                   log_space(spec.musp_min, spec.musp_max, spec.musp_count), spec.fx_dc, spec.fx_ac,
                   model);
}

void save_lut(const std::filesystem::path& path, const ReflectanceLut& lut) {
  lut.validate();
  io::Container c;
  c.magic = "OXLT";
  const auto dc = io::append_blob(c.blob, lut.rd_dc);
  const auto ac = io::append_blob(c.blob, lut.rd_ac);
  c.header = {{"format", "oxymap-lut"},
              {"version", 1},
              {"model_id", lut.model_id},
              {"fx_dc", lut.fx_dc},
              {"fx_ac", lut.fx_ac},
              {"refractive_index", lut.refractive_index},
              {"mua_grid", lut.mua_grid},
              {"musp_grid", lut.musp_grid},
              {"layout", "mua-major"},
              {"tables",
               {{"rd_dc", {{"offset", dc}, {"count", lut.rd_dc.size()}}},
                {"rd_ac", {{"offset", ac}, {"count", lut.rd_ac.size()}}}}}};
  io::write_container(path, c);
}

ReflectanceLut load_lut(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path, "OXLT");
  ReflectanceLut lut;
  try {
    const auto& h = c.header;
    lut.model_id = h.at("model_id").get<std::string>();
    lut.fx_dc = h.at("fx_dc").get<double>();
    lut.fx_ac = h.at("fx_ac").get<double>();
    lut.refractive_index = h.at("refractive_index").get<double>();
    lut.mua_grid = h.at("mua_grid").get<std::vector<double>>();
    lut.musp_grid = h.at("musp_grid").get<std::vector<double>>();
    const auto& t = h.at("tables");
    lut.rd_dc = io::slice_blob(c.blob, t.at("rd_dc").at("offset").get<std::uint64_t>(),
                               t.at("rd_dc").at("count").get<std::size_t>());
    lut.rd_ac = io::slice_blob(c.blob, t.at("rd_ac").at("offset").get<std::uint64_t>(),
                               t.at("rd_ac").at("count").get<std::size_t>());
  } catch (const io::json::exception& e) {
    throw Error(Errc::format, path.string() + ": bad LUT header: " + e.what());
  }
  lut.validate();
  return lut;
}

// ---------------------------------------------------------------------------

LutInverter::LutInverter(ReflectanceLut lut) : lut_(std::move(lut)) {
  lut_.validate();
  const std::size_t nm = lut_.mua_grid.size();
  const std::size_t ns = lut_.musp_grid.size();
  triangles_.reserve(2 * (nm - 1) * (ns - 1));
  for (std::size_t i = 0; i + 1 < nm; ++i)
    for (std::size_t j = 0; j + 1 < ns; ++j) {
      const auto a = static_cast<std::uint32_t>(lut_.index(i, j));
      const auto b = static_cast<std::uint32_t>(lut_.index(i + 1, j));
      const auto c = static_cast<std::uint32_t>(lut_.index(i + 1, j + 1));
      const auto d = static_cast<std::uint32_t>(lut_.index(i, j + 1));
      triangles_.push_back({{a, b, c}});
      triangles_.push_back({{a, c, d}});
    }

  const auto [xmin, xmax] = std::minmax_element(lut_.rd_dc.begin(), lut_.rd_dc.end());
  const auto [ymin, ymax] = std::minmax_element(lut_.rd_ac.begin(), lut_.rd_ac.end());
  x0_ = *xmin;
  y0_ = *ymin;
  nbx_ = nby_ = std::clamp<std::size_t>(2 * std::max(nm, ns), 16, 2048);
  dx_ = std::max(*xmax - x0_, 1e-300) / static_cast<double>(nbx_);
  dy_ = std::max(*ymax - y0_, 1e-300) / static_cast<double>(nby_);

  auto span_of = [&](const Triangle& t, std::size_t& bx0, std::size_t& bx1, std::size_t& by0,
                     std::size_t& by1) {
    double lx = 1e300, hx = -1e300, ly = 1e300, hy = -1e300;
    for (auto v : t.v) {
      lx = std::min(lx, lut_.rd_dc[v]);
      hx = std::max(hx, lut_.rd_dc[v]);
      ly = std::min(ly, lut_.rd_ac[v]);
      hy = std::max(hy, lut_.rd_ac[v]);
    }
    auto cell = [](double v, double o, double d, std::size_t n) {
      const double f = std::floor((v - o) / d);
      return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
    };
    bx0 = cell(lx, x0_, dx_, nbx_);
    bx1 = cell(hx, x0_, dx_, nbx_);
    by0 = cell(ly, y0_, dy_, nby_);
    by1 = cell(hy, y0_, dy_, nby_);
  };

  std::vector<std::uint32_t> counts(nbx_ * nby_ + 1, 0);
  for (const auto& t : triangles_) {
    std::size_t bx0, bx1, by0, by1;
    span_of(t, bx0, bx1, by0, by1);
    for (std::size_t by = by0; by <= by1; ++by)
      for (std::size_t bx = bx0; bx <= bx1; ++bx) ++counts[by * nbx_ + bx + 1];
  }
  for (std::size_t k = 1; k < counts.size(); ++k) counts[k] += counts[k - 1];
  bucket_start_ = counts;
  bucket_items_.resize(counts.back());
  std::vector<std::uint32_t> fill(counts.begin(), counts.end() - 1);
  for (std::size_t ti = 0; ti < triangles_.size(); ++ti) {
    std::size_t bx0, bx1, by0, by1;
    span_of(triangles_[ti], bx0, bx1, by0, by1);
    for (std::size_t by = by0; by <= by1; ++by)
      for (std::size_t bx = bx0; bx <= bx1; ++bx)
        bucket_items_[fill[by * nbx_ + bx]++] = static_cast<std::uint32_t>(ti);
  }
}

std::size_t LutInverter::bucket_of(double x, double y, bool& inside) const {
  const double fx = std::floor((x - x0_) / dx_);
  const double fy = std::floor((y - y0_) / dy_);
  const auto nx = static_cast<double>(nbx_);
  const auto ny = static_cast<double>(nby_);
  // Points on the upper bounding-box edge belong to the last bucket.
  inside = fx >= 0.0 && fy >= 0.0 && fx <= nx && fy <= ny;
  const auto bx = static_cast<std::size_t>(std::clamp(fx, 0.0, nx - 1.0));
  const auto by = static_cast<std::size_t>(std::clamp(fy, 0.0, ny - 1.0));
  return by * nbx_ + bx;
}

OpticalProperties LutInverter::node_properties(std::size_t node) const {
  const std::size_t ns = lut_.musp_grid.size();
  return {lut_.mua_grid[node / ns], lut_.musp_grid[node % ns]};
}

namespace {

/// Geometric interpolation at fractional index u of a positive grid.
double grid_at(const std::vector<double>& g, double u) {
  const double top = static_cast<double>(g.size() - 1);
  u = std::clamp(u, 0.0, top);
  auto i0 = static_cast<std::size_t>(std::floor(u));
  if (i0 >= g.size() - 1) i0 = g.size() - 2;
  const double t = u - static_cast<double>(i0);
  if (t == 0.0) return g[i0];
  if (t == 1.0) return g[i0 + 1];
  return std::exp(std::log(g[i0]) * (1.0 - t) + std::log(g[i0 + 1]) * t);
}

constexpr double kBaryTolerance = 1e-10;

}  // namespace

std::optional<OpticalProperties> LutInverter::try_invert(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  bool inside = false;
  const std::size_t b = bucket_of(x, y, inside);
  if (!inside) return std::nullopt;

  const std::size_t ns = lut_.musp_grid.size();
  const std::uint32_t first = bucket_start_[b];
  const std::uint32_t last = bucket_start_[b + 1];

  // A query that hits a node exactly returns that node's properties.
  std::optional<OpticalProperties> best;
  for (std::uint32_t k = first; k < last; ++k)
    for (auto v : triangles_[bucket_items_[k]].v)
      if (lut_.rd_dc[v] == x && lut_.rd_ac[v] == y) {
        const OpticalProperties p = node_properties(v);
        if (!best || p.mua < best->mua) best = p;
      }
  if (best) return best;

  for (std::uint32_t k = first; k < last; ++k) {
    const Triangle& t = triangles_[bucket_items_[k]];
    const double x0 = lut_.rd_dc[t.v[0]], y0 = lut_.rd_ac[t.v[0]];
    const double x1 = lut_.rd_dc[t.v[1]], y1 = lut_.rd_ac[t.v[1]];
    const double x2 = lut_.rd_dc[t.v[2]], y2 = lut_.rd_ac[t.v[2]];
    const double det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2);
    if (det == 0.0) continue;
    const double l0 = ((y1 - y2) * (x - x2) + (x2 - x1) * (y - y2)) / det;
    const double l1 = ((y2 - y0) * (x - x2) + (x0 - x2) * (y - y2)) / det;
    const double l2 = 1.0 - l0 - l1;
    if (l0 < -kBaryTolerance || l1 < -kBaryTolerance || l2 < -kBaryTolerance) continue;

    double u = 0.0, w = 0.0;
    const double lam[3] = {l0, l1, l2};
    for (int q = 0; q < 3; ++q) {
      u += lam[q] * static_cast<double>(t.v[q] / ns);
      w += lam[q] * static_cast<double>(t.v[q] % ns);
    }
    const OpticalProperties p{grid_at(lut_.mua_grid, u), grid_at(lut_.musp_grid, w)};
    if (!best || p.mua < best->mua) best = p;
  }
  return best;
}

OpticalProperties LutInverter::invert(double rd_dc, double rd_ac) const {
  if (auto p = try_invert(rd_dc, rd_ac)) return *p;
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lut_.rd_dc.size(); ++k) {
    const double d = std::hypot(lut_.rd_dc[k] - rd_dc, lut_.rd_ac[k] - rd_ac);
    if (d < best) {
      best = d;
      nearest = k;
    }
  }
  const OpticalProperties p = node_properties(nearest);
  std::ostringstream msg;
  msg << "reflectance pair (" << rd_dc << ", " << rd_ac << ") is outside the LUT gamut; nearest node mua="
      << p.mua << " musp=" << p.musp << " at distance " << best;
  throw OutOfGamutError(msg.str(), p, lut_.rd_dc[nearest], lut_.rd_ac[nearest], best);
}

OpticalProperties lut_invert(double rd_dc, double rd_ac, const LutInverter& inverter) {
  return inverter.invert(rd_dc, rd_ac);
}

InvertedMap lut_invert_map(const ImagePlane& rd_dc, const ImagePlane& rd_ac,
                           const LutInverter& inverter, const Mask& mask, double wavelength_nm,
                           unsigned threads) {
  if (!rd_dc.same_shape(rd_ac) || !mask.matches(rd_dc))
    throw Error(Errc::dimension_mismatch, "lut_invert_map: reflectance planes and mask differ in size");
  const std::size_t w = rd_dc.width();
  const std::size_t h = rd_dc.height();
  InvertedMap out{{ImagePlane(w, h, rd_dc.pitch_mm(), kInvalid),
                   ImagePlane(w, h, rd_dc.pitch_mm(), kInvalid), wavelength_nm},
                  {}};
  std::vector<InversionStats> per_row(h);
  parallel_for(0, h, threads == 0 ? default_threads() : threads, [&](std::size_t r) {
    InversionStats& s = per_row[r];
    for (std::size_t c = 0; c < w; ++c) {
      const double x = rd_dc.at(r, c);
      const double y = rd_ac.at(r, c);
      if (!mask.at(r, c) || !is_valid(x) || !is_valid(y)) {
        ++s.skipped;
        continue;
      }
      ++s.considered;
      if (auto p = inverter.try_invert(x, y)) {
        out.map.mua.at(r, c) = p->mua;
        out.map.musp.at(r, c) = p->musp;
        ++s.inverted;
      } else {
        ++s.out_of_gamut;
      }
    }
  });
  for (const auto& s : per_row) {
    out.stats.considered += s.considered;
    out.stats.inverted += s.inverted;
    out.stats.out_of_gamut += s.out_of_gamut;
    out.stats.skipped += s.skipped;
  }
  return out;
}

}  // namespace oxymap
