#include "oxymap/core.hpp"

#include <algorithm>
#include <string>

namespace oxymap {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::empty_mask: return "empty_mask";
    case Errc::zero_denominator: return "zero_denominator";
    case Errc::out_of_gamut: return "out_of_gamut";
    case Errc::frequency_mismatch: return "frequency_mismatch";
    case Errc::wavelength_mismatch: return "wavelength_mismatch";
    case Errc::singular_basis: return "singular_basis";
    case Errc::missing_channel: return "missing_channel";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::manifest: return "manifest";
    case Errc::io: return "io";
    case Errc::format: return "format";
  }
  return "unknown";
}

ImagePlane::ImagePlane(std::size_t width, std::size_t height, double pitch_mm, double fill)
    : width_(width), height_(height), pitch_mm_(pitch_mm), data_(width * height, fill) {
  validate();
}

ImagePlane::ImagePlane(std::size_t width, std::size_t height, double pitch_mm,
                       std::vector<double> data)
    : width_(width), height_(height), pitch_mm_(pitch_mm), data_(std::move(data)) {
  validate();
}

void ImagePlane::validate() const {
  if (width_ < 1 || height_ < 1)
    throw Error(Errc::invalid_argument, "image plane must be at least 1x1");
  if (!(pitch_mm_ > 0.0) || !std::isfinite(pitch_mm_))
    throw Error(Errc::invalid_argument, "pixel pitch must be positive");
  if (data_.size() != width_ * height_)
    throw Error(Errc::dimension_mismatch,
                "plane data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(width_) + "x" + std::to_string(height_));
  for (double v : data_)
    if (std::isinf(v)) throw Error(Errc::invalid_argument, "plane holds an infinite value");
}

Mask::Mask(std::size_t width, std::size_t height, bool fill)
    : width_(width), height_(height), bits_(width * height, fill ? 1 : 0) {}

Mask Mask::valid_pixels(const ImagePlane& plane) {
  Mask m(plane.width(), plane.height(), false);
  for (std::size_t i = 0; i < plane.size(); ++i) m.set(i, is_valid(plane[i]));
  return m;
}

Mask Mask::checkerboard(std::size_t width, std::size_t height) {
  Mask m(width, height, false);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) m.set(r, c, (r + c) % 2 == 0);
  return m;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::operator&(const Mask& other) const {
  if (!matches(other)) throw Error(Errc::dimension_mismatch, "mask dimensions differ");
  Mask out(width_, height_, false);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

Mask Mask::eroded_border(std::size_t margin) const {
  Mask out = *this;
  for (std::size_t r = 0; r < height_; ++r)
    for (std::size_t c = 0; c < width_; ++c)
      if (r < margin || c < margin || r + margin >= height_ || c + margin >= width_)
        out.set(r, c, false);
  return out;
}

StO2Map::StO2Map(ImagePlane plane) : plane_(std::move(plane)) {
  for (double v : plane_.values())
    if (is_valid(v) && (v < 0.0 || v > 1.0))
      throw Error(Errc::invalid_argument, "StO2 value outside [0, 1]: " + std::to_string(v));
}

PlaneStats masked_stats(const ImagePlane& plane, const Mask& mask) {
  if (!mask.matches(plane)) throw Error(Errc::dimension_mismatch, "mask does not match plane");
  PlaneStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double v = plane[i];
    if (!mask[i] || !is_valid(v)) continue;
    if (s.count == 0) s.min = s.max = v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double v = plane[i];
    if (!mask[i] || !is_valid(v)) continue;
    ss += (v - s.mean) * (v - s.mean);
  }
  s.stddev = std::sqrt(ss / static_cast<double>(s.count));
  return s;
}

PlaneStats plane_stats(const ImagePlane& plane) {
  return masked_stats(plane, Mask(plane.width(), plane.height(), true));
}

ImagePlane apply_mask(const ImagePlane& plane, const Mask& mask) {
  if (!mask.matches(plane)) throw Error(Errc::dimension_mismatch, "mask does not match plane");
  ImagePlane out = plane;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask[i]) out[i] = kInvalid;
  return out;
}

double nmae(const StO2Map& pred, const StO2Map& gt, const Mask& mask) {
  const ImagePlane& p = pred.plane();
  const ImagePlane& g = gt.plane();
  if (!p.same_shape(g) || !mask.matches(g))
    throw Error(Errc::dimension_mismatch, "nmae: prediction, ground truth and mask differ in size");
  double num = 0.0;
  double den = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!mask[i] || !is_valid(p[i]) || !is_valid(g[i])) continue;
    num += std::abs(p[i] - g[i]);
    den += g[i];
    ++n;
  }
  if (n == 0) throw Error(Errc::empty_mask, "nmae: empty mask");
  if (!(den > 0.0)) throw Error(Errc::zero_denominator, "nmae: ground truth sums to zero");
  return num / den;
}

}  // namespace oxymap
