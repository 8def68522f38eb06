#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oxymap {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  empty_mask,
  zero_denominator,
  out_of_gamut,
  frequency_mismatch,
  wavelength_mismatch,
  singular_basis,
  missing_channel,
  shape_mismatch,
  manifest,
  io,
  format,
};

std::string_view errc_name(Errc code);

/// Base exception for every failure reported by the library. The code lets
/// callers (and the CLI) distinguish failure kinds without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace oxymap
