#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oxymap/core.hpp"
#include "oxymap/photon_model.hpp"

namespace oxymap {

inline constexpr const char* kOxyHb = "HbO2";
inline constexpr const char* kDeoxyHb = "HHb";

/// Extinction coefficients (mm^-1 per unit concentration), one row per
/// wavelength and one column per chromophore.
struct ChromophoreBasis {
  std::vector<double> wavelengths_nm;
  std::vector<std::string> names;
  Eigen::MatrixXd epsilon;
  std::string units;
  std::string source;

  /// Throws Errc::invalid_argument / Errc::singular_basis on violation.
  void validate() const;
  std::size_t column(const std::string& name) const;
  /// Rows for the requested wavelengths, each taken from the nearest
  /// tabulated wavelength within `max_distance_nm`.
  ChromophoreBasis select(std::span<const double> wavelengths, double max_distance_nm = 5.0) const;
};

ChromophoreBasis load_basis(const std::filesystem::path& path);
void save_basis(const std::filesystem::path& path, const ChromophoreBasis& basis);

struct ConcentrationMap {
  std::vector<std::string> names;
  std::vector<ImagePlane> planes;  // one per chromophore, kInvalid where unfit

  const ImagePlane& channel(const std::string& name) const;
};

struct NnlsSolution {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
};

/// Lawson-Hanson active-set non-negative least squares, min ||A x - b|| s.t. x >= 0.
NnlsSolution nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// Per-pixel Beer-Lambert fit of mu_a(lambda_i) = sum_n eps_n(lambda_i) c_n.
/// The stack must hold exactly one map per basis wavelength (any order).
ConcentrationMap fit_chromophores(std::span<const OpticalPropertyMap> mua_stack,
                                  const ChromophoreBasis& basis, unsigned threads = 0);

/// c_HbO2 / (c_HbO2 + c_HHb); zero total hemoglobin gives an invalid pixel.
StO2Map sto2(const ConcentrationMap& conc);

StO2Map sto2_from_mua(std::span<const OpticalPropertyMap> mua_stack, const ChromophoreBasis& basis,
                      unsigned threads = 0);

}  // namespace oxymap
