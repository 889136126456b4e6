#pragma once

// Data-parallel inner loops shared by the preprocessing and spectral code.
// Every kernel has a scalar reference and, where the CPU supports it, an
// AVX2 variant. The active table is chosen once at startup from the CPU
// features and the FRACMATCH_SIMD environment variable (scalar|avx2), and
// can be overridden with set_simd_level().

#include <complex>
#include <cstddef>
#include <span>

namespace fracmatch::kernels {

enum class SimdLevel { scalar, avx2 };

const char* to_string(SimdLevel level) noexcept;

/// Running sums of Re(a·conj(b)), |a|² and |b|² over a span of complex bins.
struct BandSums {
  double cross = 0.0;
  double energy_a = 0.0;
  double energy_b = 0.0;

  BandSums& operator+=(const BandSums& o) noexcept {
    cross += o.cross;
    energy_a += o.energy_a;
    energy_b += o.energy_b;
    return *this;
  }
};

/// Accumulates disc statistics for pixels [x_begin, x_end) of one output row
/// from one source row. `prefix` and `prefix_sq` are inclusive-exclusive
/// prefix sums of the source row (length width + 1). For each pixel x the
/// window [x - half_width, x + half_width] must lie inside the row; border
/// pixels are handled by the caller.
struct DiscRowArgs {
  const double* prefix;
  const double* prefix_sq;
  std::size_t half_width;
  double* sum;     // indexed by x
  double* sum_sq;  // indexed by x
  std::size_t x_begin;
  std::size_t x_end;
};

struct KernelTable {
  SimdLevel level;

  BandSums (*band_sums)(const std::complex<double>* a, const std::complex<double>* b,
                        std::size_t n);

  void (*disc_row_accumulate)(const DiscRowArgs& args);

  /// Decides replacement for pixels of one row. Returns the replaced count;
  /// writes mean into `out` where |h - mean| > k·std + tol, else h.
  std::size_t (*spike_replace_row)(const double* h, const double* sum, const double* sum_sq,
                                   const double* count, std::size_t n, double k, double tol,
                                   double* out);

  /// out[x] = (rows[0][x-1] + rows[0][x] + rows[0][x+1] + ... rows[2][x+1]) / 9
  /// for x in [1, n-1), three complex source rows of length n.
  void (*blur_row_interior)(const std::complex<double>* above, const std::complex<double>* mid,
                            const std::complex<double>* below, std::size_t n,
                            std::complex<double>* out);

  /// row[x] *= row_weight * col_weights[x]
  void (*scale_row)(double* row, const double* col_weights, double row_weight, std::size_t n);
};

const KernelTable& active() noexcept;
const KernelTable& table(SimdLevel level);
bool supported(SimdLevel level) noexcept;
void set_simd_level(SimdLevel level);

}  // namespace fracmatch::kernels
