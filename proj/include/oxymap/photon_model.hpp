#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oxymap/core.hpp"

namespace oxymap {

/// Per-pixel absorption and reduced scattering (mm^-1) at one wavelength.
/// Pixels that could not be recovered hold kInvalid in both planes.
struct OpticalPropertyMap {
  ImagePlane mua;
  ImagePlane musp;
  double wavelength_nm = 0.0;
};

/// Spatially-modulated diffuse reflectance of a semi-infinite medium.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;
  virtual double reflectance(double mua, double musp, double fx) const = 0;
  virtual double refractive_index() const = 0;
  virtual std::string id() const = 0;
};

/// Effective reflection coefficient for a medium of index n against air
/// (polynomial fit in 1/n).
double effective_reflection(double n);

/// Diffusion-approximation closed form for Rd(fx).
double diffuse_reflectance(double mua, double musp, double fx, double n);

class DiffusionModel final : public ForwardModel {
 public:
  explicit DiffusionModel(double n = 1.4);
  double reflectance(double mua, double musp, double fx) const override {
    return diffuse_reflectance(mua, musp, fx, n_);
  }
  double refractive_index() const override { return n_; }
  std::string id() const override { return "diffusion-sfd"; }

 private:
  double n_;
};

struct LutGridSpec {
  double mua_min = 0.001, mua_max = 0.5;
  double musp_min = 0.1, musp_max = 5.0;
  std::size_t mua_count = 256, musp_count = 256;
  double fx_dc = 0.0, fx_ac = 0.2;
  double n = 1.4;
};

/// Log-spaced samples from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, std::size_t count);

/// (Rd_DC, Rd_AC) tabulated on a mua x musp grid. Tables are indexed
/// [mua_index * musp_count + musp_index].
struct ReflectanceLut {
  double fx_dc = 0.0;
  double fx_ac = 0.2;
  double refractive_index = 1.4;
  std::string model_id;
  std::vector<double> mua_grid;
  std::vector<double> musp_grid;
  std::vector<double> rd_dc;
  std::vector<double> rd_ac;

  std::size_t index(std::size_t i_mua, std::size_t j_musp) const { return i_mua * musp_grid.size() + j_musp; }
  /// Throws Errc::invalid_argument if any structural invariant fails.
  void validate() const;
};

ReflectanceLut build_lut(const LutGridSpec& spec);
ReflectanceLut build_lut(const std::vector<double>& mua_grid, const std::vector<double>& musp_grid,
                         double fx_dc, double fx_ac, const ForwardModel& model);

void save_lut(const std::filesystem::path& path, const ReflectanceLut& lut);
ReflectanceLut load_lut(const std::filesystem::path& path);

struct OpticalProperties {
  double mua;
  double musp;
};

/// Raised by LutInverter::invert for a reflectance pair no grid cell covers.
class OutOfGamutError : public Error {
 public:
  OutOfGamutError(const std::string& what, OpticalProperties nearest, double nearest_rd_dc,
                  double nearest_rd_ac, double distance)
      : Error(Errc::out_of_gamut, what),
        nearest(nearest),
        nearest_rd_dc(nearest_rd_dc),
        nearest_rd_ac(nearest_rd_ac),
        distance(distance) {}

  OpticalProperties nearest;  ///< grid node closest in reflectance space
  double nearest_rd_dc;
  double nearest_rd_ac;
  double distance;  ///< Euclidean distance in (Rd_DC, Rd_AC)
};

struct InversionStats {
  std::size_t considered = 0;    ///< masked-in pixels with valid reflectance
  std::size_t inverted = 0;
  std::size_t out_of_gamut = 0;
  std::size_t skipped = 0;       ///< masked out or already invalid
  double out_of_gamut_fraction() const {
    return considered == 0 ? 0.0 : static_cast<double>(out_of_gamut) / static_cast<double>(considered);
  }
};

/// Inverts (Rd_DC, Rd_AC) -> (mua, musp) by piecewise-linear interpolation
/// over a triangulation of the forward grid. Each grid cell is split into two
/// triangles; a uniform bucket index over reflectance space finds candidate
/// triangles in O(1). Immutable after construction.
class LutInverter {
 public:
  explicit LutInverter(ReflectanceLut lut);

  const ReflectanceLut& lut() const noexcept { return lut_; }

  /// nullopt when the pair lies outside every triangle.
  std::optional<OpticalProperties> try_invert(double rd_dc, double rd_ac) const;
  /// Throws OutOfGamutError carrying the nearest node.
  OpticalProperties invert(double rd_dc, double rd_ac) const;

 private:
  struct Triangle {
    std::uint32_t v[3];
  };

  OpticalProperties node_properties(std::size_t node) const;
  std::size_t bucket_of(double x, double y, bool& inside) const;

  ReflectanceLut lut_;
  std::vector<Triangle> triangles_;
  double x0_ = 0, y0_ = 0, dx_ = 1, dy_ = 1;
  std::size_t nbx_ = 1, nby_ = 1;
  std::vector<std::uint32_t> bucket_start_;
  std::vector<std::uint32_t> bucket_items_;
};

OpticalProperties lut_invert(double rd_dc, double rd_ac, const LutInverter& inverter);

struct InvertedMap {
  OpticalPropertyMap map;
  InversionStats stats;
};

/// Per-pixel inversion. Out-of-gamut pixels become invalid and are counted.
InvertedMap lut_invert_map(const ImagePlane& rd_dc, const ImagePlane& rd_ac,
                           const LutInverter& inverter, const Mask& mask,
                           double wavelength_nm = 0.0, unsigned threads = 0);

}  // namespace oxymap
