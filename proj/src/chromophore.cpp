#include "oxymap/chromophore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oxymap/io.hpp"
#include "oxymap/parallel.hpp"

namespace oxymap {

void ChromophoreBasis::validate() const {
  const auto w = static_cast<Eigen::Index>(wavelengths_nm.size());
  const auto n = static_cast<Eigen::Index>(names.size());
  if (n < 2 || w < n)
    throw Error(Errc::invalid_argument, "basis needs W >= N >= 2 (W wavelengths, N chromophores)");
  if (epsilon.rows() != w || epsilon.cols() != n)
    throw Error(Errc::dimension_mismatch, "basis epsilon shape does not match wavelengths x names");
  if ((epsilon.array() < 0.0).any() || !epsilon.allFinite())
    throw Error(Errc::invalid_argument, "basis extinction coefficients must be finite and >= 0");
  for (const char* required : {kOxyHb, kDeoxyHb})
    if (std::find(names.begin(), names.end(), required) == names.end())
      throw Error(Errc::missing_channel, std::string("basis lacks chromophore ") + required);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(epsilon);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s(s.size() - 1) > 1e-12 * s(0)))
    throw Error(Errc::singular_basis, "basis extinction columns are linearly dependent");
}

std::size_t ChromophoreBasis::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(Errc::missing_channel, "basis lacks chromophore " + name);
  return static_cast<std::size_t>(it - names.begin());
}

ChromophoreBasis ChromophoreBasis::select(std::span<const double> wavelengths,
                                          double max_distance_nm) const {
  ChromophoreBasis out;
  out.names = names;
  out.units = units;
  out.source = source;
  out.epsilon.resize(static_cast<Eigen::Index>(wavelengths.size()), epsilon.cols());
  for (std::size_t k = 0; k < wavelengths.size(); ++k) {
    std::size_t best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
      const double d = std::abs(wavelengths_nm[i] - wavelengths[k]);
      if (d < dist) {
        dist = d;
        best = i;
      }
    }
    if (dist > max_distance_nm)
      throw Error(Errc::wavelength_mismatch,
                  "no tabulated extinction within " + std::to_string(max_distance_nm) + " nm of " +
                      std::to_string(wavelengths[k]) + " nm");
    out.wavelengths_nm.push_back(wavelengths[k]);
    out.epsilon.row(static_cast<Eigen::Index>(k)) = epsilon.row(static_cast<Eigen::Index>(best));
  }
  out.validate();
  return out;
}

ChromophoreBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open basis " + path.string());
  ChromophoreBasis b;
  try {
    const auto j = io::json::parse(in);
    b.wavelengths_nm = j.at("wavelengths_nm").get<std::vector<double>>();
    b.names = j.at("names").get<std::vector<std::string>>();
    const auto rows = j.at("epsilon_rows").get<std::vector<std::vector<double>>>();
    b.units = j.value("units", "");
    b.source = j.value("source", "");
    if (rows.size() != b.wavelengths_nm.size())
      throw Error(Errc::format, path.string() + ": epsilon_rows count differs from wavelengths");
    b.epsilon.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(b.names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != b.names.size())
        throw Error(Errc::format, path.string() + ": epsilon row width differs from names");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        b.epsilon(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  } catch (const io::json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
  b.validate();
  return b;
}

void save_basis(const std::filesystem::path& path, const ChromophoreBasis& basis) {
  basis.validate();
  std::vector<std::vector<double>> rows;
  for (Eigen::Index r = 0; r < basis.epsilon.rows(); ++r) {
    rows.emplace_back();
    for (Eigen::Index c = 0; c < basis.epsilon.cols(); ++c) rows.back().push_back(basis.epsilon(r, c));
  }
  const io::json j{{"wavelengths_nm", basis.wavelengths_nm},
                   {"names", basis.names},
                   {"epsilon_rows", rows},
                   {"units", basis.units},
                   {"source", basis.source}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

const ImagePlane& ConcentrationMap::channel(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(Errc::missing_channel, "concentration map lacks " + name);
  return planes[static_cast<std::size_t>(it - names.begin())];
}

NnlsSolution nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index n = a.cols();
  if (a.rows() != b.size()) throw Error(Errc::dimension_mismatch, "nnls: A and b disagree");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-14 * std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    z.setZero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
    const Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
  };

  for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    Eigen::Index t = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    if (t < 0) break;
    passive[static_cast<std::size_t>(t)] = true;

    Eigen::VectorXd z;
    for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
      if (feasible) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0)
          alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
    }
    x = z;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)]) x(j) = 0.0;
  }
  return {x, (a * x - b).norm()};
}

ConcentrationMap fit_chromophores(std::span<const OpticalPropertyMap> stack,
                                  const ChromophoreBasis& basis, unsigned threads) {
  basis.validate();
  const std::size_t w = basis.wavelengths_nm.size();
  if (stack.size() != w)
    throw Error(Errc::wavelength_mismatch, "fit_chromophores: stack has " + std::to_string(stack.size()) +
                                               " maps, basis has " + std::to_string(w) + " wavelengths");
  // order[i] = stack entry for basis row i
  std::vector<const ImagePlane*> order(w, nullptr);
  for (std::size_t i = 0; i < w; ++i) {
    for (const auto& m : stack)
      if (std::abs(m.wavelength_nm - basis.wavelengths_nm[i]) < 1e-6) order[i] = &m.mua;
    if (!order[i])
      throw Error(Errc::wavelength_mismatch, "fit_chromophores: no absorption map at " +
                                                 std::to_string(basis.wavelengths_nm[i]) + " nm");
  }
  const ImagePlane& ref = *order[0];
  for (const auto* p : order)
    if (!p->same_shape(ref)) throw Error(Errc::dimension_mismatch, "fit_chromophores: maps differ in size");

  ConcentrationMap out;
  out.names = basis.names;
  out.planes.assign(basis.names.size(), ImagePlane(ref.width(), ref.height(), ref.pitch_mm(), kInvalid));
  parallel_for(0, ref.height(), threads == 0 ? default_threads() : threads, [&](std::size_t r) {
    Eigen::VectorXd mu(static_cast<Eigen::Index>(w));
    for (std::size_t c = 0; c < ref.width(); ++c) {
      bool ok = true;
      for (std::size_t i = 0; i < w; ++i) {
        const double v = order[i]->at(r, c);
        ok = ok && is_valid(v);
        mu(static_cast<Eigen::Index>(i)) = v;
      }
      if (!ok) continue;
      const NnlsSolution s = nnls(basis.epsilon, mu);
      for (std::size_t k = 0; k < out.planes.size(); ++k) out.planes[k].at(r, c) = s.x(static_cast<Eigen::Index>(k));
    }
  });
  return out;
}

StO2Map sto2(const ConcentrationMap& conc) {
  const ImagePlane& oxy = conc.channel(kOxyHb);
  const ImagePlane& deoxy = conc.channel(kDeoxyHb);
  if (!oxy.same_shape(deoxy)) throw Error(Errc::dimension_mismatch, "sto2: channels differ in size");
  ImagePlane out(oxy.width(), oxy.height(), oxy.pitch_mm(), kInvalid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double o = oxy[i];
    const double d = deoxy[i];
    if (!is_valid(o) || !is_valid(d) || o < 0.0 || d < 0.0) continue;
    const double total = o + d;
    if (!(total > 0.0)) continue;
    out[i] = o / total;
  }
  return StO2Map(std::move(out));
}

StO2Map sto2_from_mua(std::span<const OpticalPropertyMap> stack, const ChromophoreBasis& basis,
                      unsigned threads) {
  return sto2(fit_chromophores(stack, basis, threads));
}

}  // namespace oxymap
