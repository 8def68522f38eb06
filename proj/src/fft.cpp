#include "oxymap/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "oxymap/error.hpp"

namespace oxymap::fft {

namespace {

// FFTW planning is not thread-safe; execution of a plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void transform(Grid& g, int sign) {
  if (g.rows == 0 || g.cols == 0) throw Error(Errc::invalid_argument, "fft: empty grid");
  auto* buf = reinterpret_cast<fftw_complex*>(g.data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps the chosen algorithm, and so the output bits, fixed.
    plan = fftw_plan_dft_2d(static_cast<int>(g.rows), static_cast<int>(g.cols), buf, buf, sign,
                            FFTW_ESTIMATE);
  }
  if (!plan) throw Error(Errc::invalid_argument, "fft: planning failed");
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

void forward(Grid& g) { transform(g, FFTW_FORWARD); }

void inverse(Grid& g) {
  transform(g, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(g.rows * g.cols);
  for (auto& v : g.data) v *= scale;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace oxymap::fft
