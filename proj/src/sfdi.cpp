#include "oxymap/sfdi.hpp"

#include <cmath>

#include "oxymap/io.hpp"
#include "oxymap/parallel.hpp"

namespace oxymap {

void PhaseTriplet::validate() const {
  if (!i0.same_shape(i1) || !i0.same_shape(i2))
    throw Error(Errc::dimension_mismatch, "phase triplet planes differ in size");
  if (!(fx >= 0.0)) throw Error(Errc::invalid_argument, "phase triplet frequency must be >= 0");
}

void ReferenceMeasurement::validate() const {
  if (!m_dc_ref.same_shape(m_ac_ref))
    throw Error(Errc::dimension_mismatch, "reference DC and AC planes differ in size");
  if (!(known_mua > 0.0) || !(known_musp > 0.0))
    throw Error(Errc::invalid_argument, "reference optical properties must be positive");
  if (!(fx_ac > 0.0)) throw Error(Errc::invalid_argument, "reference AC frequency must be positive");
}

Demodulated demodulate(const PhaseTriplet& t, unsigned threads) {
  t.validate();
  const std::size_t w = t.i0.width();
  const std::size_t h = t.i0.height();
  Demodulated out{ImagePlane(w, h, t.i0.pitch_mm()), ImagePlane(w, h, t.i0.pitch_mm())};
  const double scale = std::sqrt(2.0) / 3.0;
  parallel_for(0, h, threads == 0 ? default_threads() : threads, [&](std::size_t r) {
    const auto a = t.i0.row(r);
    const auto b = t.i1.row(r);
    const auto c = t.i2.row(r);
    auto dc = out.m_dc.row(r);
    auto ac = out.m_ac.row(r);
    for (std::size_t x = 0; x < w; ++x) {
      const double d01 = a[x] - b[x];
      const double d12 = b[x] - c[x];
      const double d20 = c[x] - a[x];
      ac[x] = scale * std::sqrt(d01 * d01 + d12 * d12 + d20 * d20);
      dc[x] = (a[x] + b[x] + c[x]) / 3.0;
    }
  });
  return out;
}

Calibrated calibrate(const ImagePlane& m_samp, const ReferenceMeasurement& ref, Band band,
                     const ForwardModel& model, const Mask* mask) {
  const ImagePlane& m_ref = band == Band::dc ? ref.m_dc_ref : ref.m_ac_ref;
  if (!m_samp.same_shape(m_ref) || (mask && !mask->matches(m_samp)))
    throw Error(Errc::dimension_mismatch, "calibrate: sample, reference and mask differ in size");
  if (!(ref.known_mua > 0.0) || !(ref.known_musp > 0.0))
    throw Error(Errc::invalid_argument, "calibrate: reference optical properties must be positive");
  const double fx = band == Band::dc ? 0.0 : ref.fx_ac;
  const double rd_ref = model.reflectance(ref.known_mua, ref.known_musp, fx);

  Calibrated out{ImagePlane(m_samp.width(), m_samp.height(), m_samp.pitch_mm()),
                 Mask(m_samp.width(), m_samp.height(), false)};
  for (std::size_t i = 0; i < m_samp.size(); ++i) {
    if (mask && !(*mask)[i]) {
      out.rd[i] = kInvalid;
      continue;
    }
    const double s = m_samp[i];
    const double r = m_ref[i];
    if (!is_valid(s)) {
      out.rd[i] = kInvalid;
      continue;
    }
    if (!(r > 0.0))
      throw Error(Errc::invalid_argument, "calibrate: reference magnitude not positive at pixel " +
                                              std::to_string(i));
    const double rd = s / r * rd_ref;
    out.rd[i] = rd;
    out.valid.set(i, rd > 0.0 && rd <= 1.0);
  }
  return out;
}

DiffusionModel model_for(const ReflectanceLut& lut) {
  if (lut.model_id != DiffusionModel(lut.refractive_index).id())
    throw Error(Errc::invalid_argument, "no forward model available for LUT model id '" + lut.model_id + "'");
  return DiffusionModel(lut.refractive_index);
}

SfdiResult sfdi_optical_properties(const PhaseTriplet& triplet_dc, const PhaseTriplet& triplet_ac,
                                   const ReferenceMeasurement& ref, const LutInverter& inverter,
                                   const Mask* mask, unsigned threads) {
  triplet_dc.validate();
  triplet_ac.validate();
  ref.validate();
  const ReflectanceLut& lut = inverter.lut();
  if (triplet_dc.wavelength_nm != triplet_ac.wavelength_nm || triplet_dc.wavelength_nm != ref.wavelength_nm)
    throw Error(Errc::wavelength_mismatch, "sfdi: triplets and reference are at different wavelengths");
  if (std::abs(triplet_dc.fx - lut.fx_dc) > kFrequencyTolerance ||
      std::abs(triplet_ac.fx - lut.fx_ac) > kFrequencyTolerance ||
      std::abs(ref.fx_ac - lut.fx_ac) > kFrequencyTolerance)
    throw Error(Errc::frequency_mismatch,
                "sfdi: data frequencies (" + std::to_string(triplet_dc.fx) + ", " +
                    std::to_string(triplet_ac.fx) + ") do not match LUT (" + std::to_string(lut.fx_dc) +
                    ", " + std::to_string(lut.fx_ac) + ")");
  if (!triplet_dc.i0.same_shape(triplet_ac.i0))
    throw Error(Errc::dimension_mismatch, "sfdi: DC and AC triplets differ in size");

  const DiffusionModel model = model_for(lut);
  const Demodulated dc = demodulate(triplet_dc, threads);
  const Demodulated ac = demodulate(triplet_ac, threads);
  Calibrated rd_dc = calibrate(dc.m_dc, ref, Band::dc, model, mask);
  Calibrated rd_ac = calibrate(ac.m_ac, ref, Band::ac, model, mask);
  const Mask use = rd_dc.valid & rd_ac.valid;
  InvertedMap inv = lut_invert_map(rd_dc.rd, rd_ac.rd, inverter, use, ref.wavelength_nm, threads);
  return {std::move(inv.map), inv.stats};
}

void save_references(const std::filesystem::path& path, const std::vector<ReferenceMeasurement>& refs) {
  io::Container c;
  c.magic = "OXRF";
  io::json entries = io::json::array();
  for (const auto& r : refs) {
    r.validate();
    const auto dc = io::append_blob(c.blob, r.m_dc_ref.values());
    const auto ac = io::append_blob(c.blob, r.m_ac_ref.values());
    entries.push_back({{"wavelength_nm", r.wavelength_nm},
                       {"fx_ac", r.fx_ac},
                       {"known_mua", r.known_mua},
                       {"known_musp", r.known_musp},
                       {"width", r.m_dc_ref.width()},
                       {"height", r.m_dc_ref.height()},
                       {"pitch_mm", r.m_dc_ref.pitch_mm()},
                       {"m_dc_offset", dc},
                       {"m_ac_offset", ac}});
  }
  c.header = {{"format", "oxymap-references"}, {"version", 1}, {"references", entries}};
  io::write_container(path, c);
}

std::vector<ReferenceMeasurement> load_references(const std::filesystem::path& path) {
  const io::Container c = io::read_container(path, "OXRF");
  std::vector<ReferenceMeasurement> refs;
  try {
    for (const auto& e : c.header.at("references")) {
      const auto w = e.at("width").get<std::size_t>();
      const auto h = e.at("height").get<std::size_t>();
      const double pitch = e.at("pitch_mm").get<double>();
      ReferenceMeasurement r;
      r.wavelength_nm = e.at("wavelength_nm").get<double>();
      r.fx_ac = e.at("fx_ac").get<double>();
      r.known_mua = e.at("known_mua").get<double>();
      r.known_musp = e.at("known_musp").get<double>();
      r.m_dc_ref = ImagePlane(w, h, pitch, io::slice_blob(c.blob, e.at("m_dc_offset").get<std::uint64_t>(), w * h));
      r.m_ac_ref = ImagePlane(w, h, pitch, io::slice_blob(c.blob, e.at("m_ac_offset").get<std::uint64_t>(), w * h));
      r.validate();
      refs.push_back(std::move(r));
    }
  } catch (const io::json::exception& e) {
    throw Error(Errc::format, path.string() + ": bad reference header: " + e.what());
  }
  return refs;
}

const ReferenceMeasurement& find_reference(const std::vector<ReferenceMeasurement>& refs,
                                           double wavelength_nm) {
  for (const auto& r : refs)
    if (std::abs(r.wavelength_nm - wavelength_nm) < 1e-6) return r;
  throw Error(Errc::wavelength_mismatch,
              "no reference measurement at " + std::to_string(wavelength_nm) + " nm");
}

}  // namespace oxymap
