#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "oxymap/error.hpp"

namespace oxymap {

/// Sentinel stored in masked-out or otherwise invalid pixels. Distinct from
/// every finite value, so a dark region is never confused with StO2 = 0.
inline constexpr double kInvalid = std::numeric_limits<double>::quiet_NaN();

inline bool is_valid(double v) noexcept { return !std::isnan(v); }

/// 2-D row-major raster with a physical pixel pitch. Valid samples are
/// finite; the only permitted non-finite value is the kInvalid sentinel.
class ImagePlane {
 public:
  ImagePlane() = default;
  ImagePlane(std::size_t width, std::size_t height, double pitch_mm, double fill = 0.0);
  ImagePlane(std::size_t width, std::size_t height, double pitch_mm, std::vector<double> data);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  double pitch_mm() const noexcept { return pitch_mm_; }

  double& at(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * width_, width_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * width_, width_}; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const ImagePlane& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  void validate() const;

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  double pitch_mm_ = 1.0;
  std::vector<double> data_;
};

class Mask {
 public:
  Mask() = default;
  Mask(std::size_t width, std::size_t height, bool fill = true);

  /// Mask of the pixels of `plane` that hold valid (non-sentinel) values.
  static Mask valid_pixels(const ImagePlane& plane);
  static Mask checkerboard(std::size_t width, std::size_t height);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
  void set(std::size_t row, std::size_t col, bool v) { bits_[row * width_ + col] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  bool matches(const ImagePlane& plane) const noexcept {
    return width_ == plane.width() && height_ == plane.height();
  }
  bool matches(const Mask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  Mask operator&(const Mask& other) const;
  /// Clears a border of `margin` pixels on every side.
  Mask eroded_border(std::size_t margin) const;

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Fractional oxygen saturation; every valid pixel lies in [0, 1].
class StO2Map {
 public:
  StO2Map() = default;
  explicit StO2Map(ImagePlane plane);

  const ImagePlane& plane() const noexcept { return plane_; }
  std::size_t width() const noexcept { return plane_.width(); }
  std::size_t height() const noexcept { return plane_.height(); }

 private:
  ImagePlane plane_;
};

struct PlaneStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
};

/// Statistics over valid pixels inside the mask (sentinels are skipped).
PlaneStats masked_stats(const ImagePlane& plane, const Mask& mask);
PlaneStats plane_stats(const ImagePlane& plane);

ImagePlane apply_mask(const ImagePlane& plane, const Mask& mask);

/// Normalized mean absolute error, sum |pred - gt| / sum gt over the masked
/// pixels where both maps are valid.
double nmae(const StO2Map& pred, const StO2Map& gt, const Mask& mask);

}  // namespace oxymap
