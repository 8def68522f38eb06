#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oxymap/core.hpp"

namespace oxymap {

struct Roi {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  /// Throws Errc::invalid_argument unless the rectangle is non-empty and
  /// lies inside a width x height image.
  void check_inside(std::size_t image_width, std::size_t image_height) const;
  Mask mask(std::size_t image_width, std::size_t image_height) const;
  /// Parses "row,col,height,width".
  static Roi parse(const std::string& text);
};

struct Frame {
  double t_seconds = 0.0;
  double wavelength_nm = 0.0;
  std::filesystem::path path;
};

/// JSON lines {t_seconds, wavelength_nm, path}; relative paths resolve
/// against the manifest's directory.
std::vector<Frame> read_frame_manifest(const std::filesystem::path& path);

struct FramePair {
  double t_seconds = 0.0;  ///< time of the later frame
  Frame first;             ///< at first_nm
  Frame second;            ///< at second_nm
};

struct Pairing {
  std::vector<FramePair> pairs;
  std::vector<Frame> dropped;
  std::vector<std::string> warnings;
};

/// Consumes the time-ordered sequence front to back, pairing each frame with
/// its immediate successor when the two carry the two wavelengths. A frame
/// without such a partner is dropped with a warning.
Pairing pair_frames(const std::vector<Frame>& frames, double first_nm = 659.0, double second_nm = 851.0,
                    double tolerance_nm = 0.5);

/// Saturation estimate from one co-registered image pair.
using PairEstimator = std::function<StO2Map(const ImagePlane& first, const ImagePlane& second)>;

struct TimePoint {
  double t_seconds = 0.0;
  double mean_sto2 = 0.0;
  double std_sto2 = 0.0;
  std::size_t pixels = 0;
};

/// ROI mean and population std of StO2 per pair, ordered by time. Pairs are
/// evaluated in parallel.
std::vector<TimePoint> roi_timeseries(const std::vector<FramePair>& pairs, const Roi& roi,
                                      const PairEstimator& estimator, unsigned threads = 0);

struct Checkpoint {
  double t_seconds = 0.0;
  double sto2 = 0.0;
};

/// JSON lines {t_seconds, sto2}.
std::vector<Checkpoint> read_checkpoints(const std::filesystem::path& path);

/// Columns t,mean_sto2,std_sto2,method.
std::string timeseries_csv(const std::vector<TimePoint>& series, const std::string& method);
std::string timeseries_svg(const std::vector<TimePoint>& series, const std::vector<Checkpoint>& checkpoints,
                           const std::string& method);

}  // namespace oxymap
