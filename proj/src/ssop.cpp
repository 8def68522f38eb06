#include "oxymap/ssop.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>
#include <numbers>

#include "oxymap/fft.hpp"

namespace oxymap {

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t reflect(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - 1 - m);
}

/// Reflection of column x between two mirror axes a < b. Axes are given in
/// half-pixel units (2a, 2b) so every reflected position is a whole pixel.
std::size_t reflect_between(long x, long two_a, long two_b, std::size_t n) {
  if (x >= 0 && x < static_cast<long>(n)) return static_cast<std::size_t>(x);
  const long period = two_b - two_a;  // 2 (b - a), whole pixels
  long m = (2 * x - two_a) % (2 * period);
  if (m < 0) m += 2 * period;
  const long twice = m <= period ? two_a + m : two_a + 2 * period - m;
  return static_cast<std::size_t>(std::clamp(twice / 2, 0L, static_cast<long>(n) - 1));
}

/// Mirror axes at the carrier crests nearest each edge, so the extension
/// continues the fringe pattern in phase.
std::pair<long, long> carrier_axes(const ImagePlane& img, double fx) {
  const std::size_t w = img.width();
  const double k = 2.0 * kPi * fx * img.pitch_mm();  // rad per pixel
  std::vector<double> profile(w, 0.0);
  for (std::size_t r = 0; r < img.height(); ++r)
    for (std::size_t c = 0; c < w; ++c) profile[c] += img.at(r, c);
  double mean = 0.0;
  for (double v : profile) mean += v;
  mean /= static_cast<double>(w);
  std::complex<double> z = 0.0;
  for (std::size_t c = 0; c < w; ++c) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * (static_cast<double>(c) + 0.5) / static_cast<double>(w));
    z += hann * (profile[c] - mean) * std::polar(1.0, -k * static_cast<double>(c));
  }
  const double half_period = kPi / k;
  if (std::abs(z) == 0.0) return {-1, 2 * static_cast<long>(w) - 1};
  // crests sit where k x = m pi - arg z
  const double x0 = -std::arg(z) / k;
  auto crest_from = [&](double lo) { return x0 + std::ceil((lo - x0) / half_period) * half_period; };
  const double left = crest_from(-0.5);
  const double right = crest_from(static_cast<double>(w) - 0.5 - half_period);
  long two_a = std::lround(2.0 * left);
  long two_b = std::lround(2.0 * right);
  two_a = std::clamp(two_a, -1L, 2 * static_cast<long>(w) - 1);
  two_b = std::clamp(two_b, two_a + 2, 2 * static_cast<long>(w) - 1);
  return {two_a, two_b};
}

ImagePlane transposed(const ImagePlane& p) {
  ImagePlane t(p.height(), p.width(), p.pitch_mm());
  for (std::size_t r = 0; r < p.height(); ++r)
    for (std::size_t c = 0; c < p.width(); ++c) t.at(c, r) = p.at(r, c);
  return t;
}

Mask transposed(const Mask& m) {
  Mask t(m.height(), m.width(), false);
  for (std::size_t r = 0; r < m.height(); ++r)
    for (std::size_t c = 0; c < m.width(); ++c) t.set(c, r, m.at(r, c));
  return t;
}

/// Modulation along columns (x).
SsopDemodulated demodulate_x(const ImagePlane& img, const SsopFilterSpec& spec) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const double pitch = img.pitch_mm();
  for (double v : img.values())
    if (!is_valid(v)) throw Error(Errc::invalid_argument, "ssop: image holds invalid pixels");
  if (!(spec.fx < 0.5 / pitch))
    throw Error(Errc::invalid_argument, "ssop: carrier " + std::to_string(spec.fx) +
                                            " mm^-1 is at or above Nyquist " + std::to_string(0.5 / pitch));
  if (w < 2 || static_cast<double>(w) * pitch * spec.fx < 8.0)
    throw Error(Errc::invalid_argument, "ssop: image spans fewer than 8 carrier periods along the modulation axis");

  // Mirror-extend to a power of two at least twice each dimension so the
  // circular wrap sits far from the image. Along the modulation axis the
  // mirrors sit on fringe crests.
  const std::size_t pw = fft::next_pow2(2 * w);
  const std::size_t ph = fft::next_pow2(2 * h);
  const long ox = static_cast<long>((pw - w) / 2);
  const long oy = static_cast<long>((ph - h) / 2);
  const auto [two_a, two_b] = carrier_axes(img, spec.fx);
  std::vector<std::size_t> cols(pw);
  for (std::size_t c = 0; c < pw; ++c) cols[c] = reflect_between(static_cast<long>(c) - ox, two_a, two_b, w);
  fft::Grid spectrum(ph, pw);
  for (std::size_t r = 0; r < ph; ++r) {
    const std::size_t sr = reflect(static_cast<long>(r) - oy, h);
    for (std::size_t c = 0; c < pw; ++c) spectrum.at(r, c) = img.at(sr, cols[c]);
  }
  fft::forward(spectrum);

  fft::Grid low = spectrum;
  fft::Grid band = std::move(spectrum);
  for (std::size_t c = 0; c < pw; ++c) {
    const double u = fft::bin_frequency(c, pw) / pitch;
    const double gl = ssop_lowpass_gain(u, spec);
    const double gb = ssop_band_gain(u, spec);
    for (std::size_t r = 0; r < ph; ++r) {
      low.at(r, c) *= gl;
      band.at(r, c) *= gb;
    }
  }
  fft::inverse(low);
  fft::inverse(band);

  SsopDemodulated out{ImagePlane(w, h, pitch), ImagePlane(w, h, pitch),
                      Mask(w, h, true).eroded_border(spec.border_px)};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const auto gr = static_cast<std::size_t>(static_cast<long>(r) + oy);
      const auto gc = static_cast<std::size_t>(static_cast<long>(c) + ox);
      out.m_dc.at(r, c) = std::max(0.0, low.at(gr, gc).real());
      out.m_ac.at(r, c) = 2.0 * std::abs(band.at(gr, gc));
    }
  return out;
}

}  // namespace

void SsopFilterSpec::validate() const {
  if (!(fx > 0.0)) throw Error(Errc::invalid_argument, "ssop: carrier frequency must be positive");
  if (!(lowpass_cutoff > 0.0 && lowpass_cutoff < 1.0))
    throw Error(Errc::invalid_argument, "ssop: low-pass cutoff must lie in (0, 1)");
  if (!(highpass_halfwidth > 0.0)) throw Error(Errc::invalid_argument, "ssop: band half-width must be positive");
}

double ssop_lowpass_gain(double u, const SsopFilterSpec& spec) {
  const double cutoff = spec.lowpass_cutoff * spec.fx;
  const double a = std::abs(u);
  return a < cutoff ? std::cos(0.5 * kPi * a / cutoff) : 0.0;
}

double ssop_band_gain(double u, const SsopFilterSpec& spec) {
  const double half = spec.highpass_halfwidth * spec.fx;
  const double d = std::abs(u - spec.fx);
  if (u <= 0.0 || d >= half) return 0.0;
  const double t = kPi * d / half;
  return 0.42 + 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
}

SsopDemodulated ssop_demodulate(const ImagePlane& img, const SsopFilterSpec& spec) {
  spec.validate();
  if (spec.modulation_axis == Axis::x) return demodulate_x(img, spec);
  SsopDemodulated t = demodulate_x(transposed(img), spec);
  return {transposed(t.m_dc), transposed(t.m_ac), transposed(t.confident)};
}

SsopResult ssop_sto2(std::span<const SnapshotImage> images,
                     const std::vector<ReferenceMeasurement>& refs, const LutInverter& inverter,
                     const ChromophoreBasis& basis, const SsopFilterSpec& spec, unsigned threads) {
  if (images.empty()) throw Error(Errc::invalid_argument, "ssop: no images");
  const ReflectanceLut& lut = inverter.lut();
  if (std::abs(spec.fx - lut.fx_ac) > kFrequencyTolerance)
    throw Error(Errc::frequency_mismatch, "ssop: carrier does not match LUT AC frequency");
  for (const auto& im : images)
    if (!im.image.same_shape(images.front().image))
      throw Error(Errc::dimension_mismatch, "ssop: images differ in size");

  const DiffusionModel model = model_for(lut);
  SsopResult result;
  std::vector<double> wavelengths;
  Mask confident(images.front().image.width(), images.front().image.height(), true);
  for (const auto& im : images) {
    const ReferenceMeasurement& ref = find_reference(refs, im.wavelength_nm);
    if (std::abs(ref.fx_ac - lut.fx_ac) > kFrequencyTolerance)
      throw Error(Errc::frequency_mismatch, "ssop: reference frequency does not match LUT");
    const SsopDemodulated d = ssop_demodulate(im.image, spec);
    const Calibrated rd_dc = calibrate(d.m_dc, ref, Band::dc, model);
    const Calibrated rd_ac = calibrate(d.m_ac, ref, Band::ac, model);
    InvertedMap inv = lut_invert_map(rd_dc.rd, rd_ac.rd, inverter, rd_dc.valid & rd_ac.valid,
                                     im.wavelength_nm, threads);
    confident = confident & d.confident;
    result.properties.push_back(std::move(inv.map));
    result.stats.push_back(inv.stats);
    wavelengths.push_back(im.wavelength_nm);
  }
  const ChromophoreBasis selected = basis.select(wavelengths);
  result.sto2 = sto2_from_mua(result.properties, selected, threads);
  result.confident = std::move(confident);
  return result;
}

SsopResult ssop_sto2(const ImagePlane& img659, const ImagePlane& img851,
                     const std::vector<ReferenceMeasurement>& refs, const LutInverter& lut,
                     const ChromophoreBasis& basis, const SsopFilterSpec& spec, unsigned threads) {
  if (!img659.same_shape(img851)) throw Error(Errc::dimension_mismatch, "ssop: images differ in size");
  const SnapshotImage images[] = {{img659, 659.0}, {img851, 851.0}};
  return ssop_sto2(images, refs, lut, basis, spec, threads);
}

}  // namespace oxymap
