#pragma once

#include <span>
#include <vector>

#include "oxymap/chromophore.hpp"
#include "oxymap/core.hpp"
#include "oxymap/photon_model.hpp"
#include "oxymap/sfdi.hpp"

namespace oxymap {

enum class Axis { x, y };

struct SsopFilterSpec {
  double fx = 0.2;                 ///< carrier, mm^-1
  double lowpass_cutoff = 0.5;     ///< fraction of fx
  double highpass_halfwidth = 0.5; ///< fraction of fx
  Axis modulation_axis = Axis::x;
  std::size_t border_px = 16;      ///< flagged low-confidence in outputs

  void validate() const;
};

struct SsopDemodulated {
  ImagePlane m_dc;
  ImagePlane m_ac;
  Mask confident;  ///< false inside the low-confidence border
};

/// Single-image demodulation: an anisotropic sine-profile low pass gives the
/// DC magnitude; a Blackman band around +fx followed by the magnitude of the
/// one-sided (analytic) reconstruction, doubled, gives the AC envelope.
SsopDemodulated ssop_demodulate(const ImagePlane& img, const SsopFilterSpec& spec);

/// Filter gains at a signed frequency along the modulation axis (mm^-1).
double ssop_lowpass_gain(double u, const SsopFilterSpec& spec);
double ssop_band_gain(double u, const SsopFilterSpec& spec);

struct SnapshotImage {
  ImagePlane image;
  double wavelength_nm = 0.0;
};

struct SsopResult {
  StO2Map sto2;
  Mask confident;
  std::vector<OpticalPropertyMap> properties;
  std::vector<InversionStats> stats;
};

/// Per wavelength: ssop_demodulate -> calibrate -> lut_invert_map; then the
/// Beer-Lambert fit and saturation over all wavelengths.
SsopResult ssop_sto2(std::span<const SnapshotImage> images,
                     const std::vector<ReferenceMeasurement>& refs, const LutInverter& lut,
                     const ChromophoreBasis& basis, const SsopFilterSpec& spec,
                     unsigned threads = 0);

SsopResult ssop_sto2(const ImagePlane& img659, const ImagePlane& img851,
                     const std::vector<ReferenceMeasurement>& refs, const LutInverter& lut,
                     const ChromophoreBasis& basis, const SsopFilterSpec& spec = {},
                     unsigned threads = 0);

}  // namespace oxymap
