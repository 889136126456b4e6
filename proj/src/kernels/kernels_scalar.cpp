#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

namespace fracmatch::kernels {
namespace {

BandSums band_sums_scalar(const std::complex<double>* a, const std::complex<double>* b,
                          std::size_t n) {
  BandSums s;
  for (std::size_t i = 0; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    s.cross += ar * br + ai * bi;
    s.energy_a += ar * ar + ai * ai;
    s.energy_b += br * br + bi * bi;
  }
  return s;
}

void disc_row_accumulate_scalar(const DiscRowArgs& args) {
  const std::size_t w = args.half_width;
  for (std::size_t x = args.x_begin; x < args.x_end; ++x) {
    args.sum[x] += args.prefix[x + w + 1] - args.prefix[x - w];
    args.sum_sq[x] += args.prefix_sq[x + w + 1] - args.prefix_sq[x - w];
  }
}

std::size_t spike_replace_row_scalar(const double* h, const double* sum, const double* sum_sq,
                                     const double* count, std::size_t n, double k, double tol,
                                     double* out) {
  std::size_t replaced = 0;
  for (std::size_t x = 0; x < n; ++x) {
    const double mean = sum[x] / count[x];
    const double var = std::max(sum_sq[x] / count[x] - mean * mean, 0.0);
    const double dev = std::fabs(h[x] - mean);
    if (dev > k * std::sqrt(var) + tol) {
      out[x] = mean;
      ++replaced;
    } else {
      out[x] = h[x];
    }
  }
  return replaced;
}

void blur_row_interior_scalar(const std::complex<double>* above, const std::complex<double>* mid,
                              const std::complex<double>* below, std::size_t n,
                              std::complex<double>* out) {
  constexpr double kNinth = 1.0 / 9.0;
  for (std::size_t x = 1; x + 1 < n; ++x) {
    for (int c = 0; c < 2; ++c) {
      auto part = [c](const std::complex<double>& z) { return c == 0 ? z.real() : z.imag(); };
      const double ra = part(above[x - 1]) + part(above[x]) + part(above[x + 1]);
      const double rm = part(mid[x - 1]) + part(mid[x]) + part(mid[x + 1]);
      const double rb = part(below[x - 1]) + part(below[x]) + part(below[x + 1]);
      const double v = ((ra + rm) + rb) * kNinth;
      if (c == 0) {
        out[x].real(v);
      } else {
        out[x].imag(v);
      }
    }
  }
}

void scale_row_scalar(double* row, const double* col_weights, double row_weight, std::size_t n) {
  for (std::size_t x = 0; x < n; ++x) row[x] *= row_weight * col_weights[x];
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{SimdLevel::scalar,       band_sums_scalar,
                                 disc_row_accumulate_scalar, spike_replace_row_scalar,
                                 blur_row_interior_scalar,  scale_row_scalar};
  return table;
}

}  // namespace detail
}  // namespace fracmatch::kernels
