#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace oxymap::fft {

using cplx = std::complex<double>;

/// Row-major complex grid for 2-D transforms.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;

  Grid(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  cplx& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const cplx& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// In-place unnormalized forward transform (exp(-i...)).
void forward(Grid& g);
/// In-place inverse transform, normalized by 1/(rows*cols).
void inverse(Grid& g);

std::size_t next_pow2(std::size_t n);

/// Signed frequency of DFT bin k for length n, in cycles per sample.
inline double bin_frequency(std::size_t k, std::size_t n) {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return (k <= n / 2 ? kk : kk - nn) / nn;
}

}  // namespace oxymap::fft
