#pragma once

#include <filesystem>
#include <vector>

#include "oxymap/core.hpp"
#include "oxymap/photon_model.hpp"

namespace oxymap {

/// Three images at phase offsets 0, 2pi/3 and 4pi/3.
struct PhaseTriplet {
  ImagePlane i0, i1, i2;
  double fx = 0.0;  // mm^-1
  double wavelength_nm = 0.0;

  void validate() const;
};

/// Demodulated reference-phantom response with its known optical properties.
struct ReferenceMeasurement {
  ImagePlane m_dc_ref;
  ImagePlane m_ac_ref;
  double known_mua = 0.0;
  double known_musp = 0.0;
  double wavelength_nm = 0.0;
  double fx_ac = 0.0;

  void validate() const;
};

struct Demodulated {
  ImagePlane m_dc;
  ImagePlane m_ac;
};

Demodulated demodulate(const PhaseTriplet& triplet, unsigned threads = 0);

enum class Band { dc, ac };

/// Calibrated reflectance and the pixels it is trustworthy at. Pixels whose
/// reflectance falls outside (0, 1] keep their value but are flagged.
struct Calibrated {
  ImagePlane rd;
  Mask valid;
};

/// rd = (m_samp / m_ref) * Rd_model(reference properties, band frequency).
Calibrated calibrate(const ImagePlane& m_samp, const ReferenceMeasurement& ref, Band band,
                     const ForwardModel& model, const Mask* mask = nullptr);

struct SfdiResult {
  OpticalPropertyMap properties;
  InversionStats stats;
};

/// demodulate -> calibrate (both bands) -> lut_invert_map.
SfdiResult sfdi_optical_properties(const PhaseTriplet& triplet_dc, const PhaseTriplet& triplet_ac,
                                   const ReferenceMeasurement& ref, const LutInverter& lut,
                                   const Mask* mask = nullptr, unsigned threads = 0);

/// Forward model matching the LUT's provenance (refractive index and model id).
DiffusionModel model_for(const ReflectanceLut& lut);

/// Frequency agreement tolerance between data, references and LUT.
inline constexpr double kFrequencyTolerance = 1e-9;

/// Reference bundle: one ReferenceMeasurement per wavelength.
void save_references(const std::filesystem::path& path, const std::vector<ReferenceMeasurement>& refs);
std::vector<ReferenceMeasurement> load_references(const std::filesystem::path& path);
const ReferenceMeasurement& find_reference(const std::vector<ReferenceMeasurement>& refs,
                                           double wavelength_nm);

}  // namespace oxymap
