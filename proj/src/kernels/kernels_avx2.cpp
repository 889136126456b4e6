#include <immintrin.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "kernels_impl.hpp"

// Lane-wise variants keep the scalar evaluation order per element, so
// disc_row_accumulate, spike_replace_row, blur_row_interior and scale_row
// reproduce the scalar results exactly. band_sums reassociates the
// reduction and agrees only to rounding.

namespace fracmatch::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

BandSums band_sums_avx2(const std::complex<double>* a, const std::complex<double>* b,
                        std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  __m256d cross0 = _mm256_setzero_pd(), cross1 = _mm256_setzero_pd();
  __m256d ea0 = _mm256_setzero_pd(), ea1 = _mm256_setzero_pd();
  __m256d eb0 = _mm256_setzero_pd(), eb1 = _mm256_setzero_pd();

  std::size_t i = 0;
  // two complex values per register, two registers per step
  for (; i + 4 <= n; i += 4) {
    const __m256d va0 = _mm256_loadu_pd(pa + 2 * i);
    const __m256d vb0 = _mm256_loadu_pd(pb + 2 * i);
    const __m256d va1 = _mm256_loadu_pd(pa + 2 * i + 4);
    const __m256d vb1 = _mm256_loadu_pd(pb + 2 * i + 4);
    cross0 = _mm256_add_pd(cross0, _mm256_mul_pd(va0, vb0));
    cross1 = _mm256_add_pd(cross1, _mm256_mul_pd(va1, vb1));
    ea0 = _mm256_add_pd(ea0, _mm256_mul_pd(va0, va0));
    ea1 = _mm256_add_pd(ea1, _mm256_mul_pd(va1, va1));
    eb0 = _mm256_add_pd(eb0, _mm256_mul_pd(vb0, vb0));
    eb1 = _mm256_add_pd(eb1, _mm256_mul_pd(vb1, vb1));
  }
  BandSums s;
  s.cross = hsum(_mm256_add_pd(cross0, cross1));
  s.energy_a = hsum(_mm256_add_pd(ea0, ea1));
  s.energy_b = hsum(_mm256_add_pd(eb0, eb1));
  for (; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    s.cross += ar * br + ai * bi;
    s.energy_a += ar * ar + ai * ai;
    s.energy_b += br * br + bi * bi;
  }
  return s;
}

void disc_row_accumulate_avx2(const DiscRowArgs& args) {
  const std::size_t w = args.half_width;
  std::size_t x = args.x_begin;
  for (; x + 4 <= args.x_end; x += 4) {
    const __m256d hi = _mm256_loadu_pd(args.prefix + x + w + 1);
    const __m256d lo = _mm256_loadu_pd(args.prefix + x - w);
    const __m256d hi2 = _mm256_loadu_pd(args.prefix_sq + x + w + 1);
    const __m256d lo2 = _mm256_loadu_pd(args.prefix_sq + x - w);
    _mm256_storeu_pd(args.sum + x, _mm256_add_pd(_mm256_loadu_pd(args.sum + x), _mm256_sub_pd(hi, lo)));
    _mm256_storeu_pd(args.sum_sq + x,
                     _mm256_add_pd(_mm256_loadu_pd(args.sum_sq + x), _mm256_sub_pd(hi2, lo2)));
  }
  for (; x < args.x_end; ++x) {
    args.sum[x] += args.prefix[x + w + 1] - args.prefix[x - w];
    args.sum_sq[x] += args.prefix_sq[x + w + 1] - args.prefix_sq[x - w];
  }
}

std::size_t spike_replace_row_avx2(const double* h, const double* sum, const double* sum_sq,
                                   const double* count, std::size_t n, double k, double tol,
                                   double* out) {
  const __m256d vk = _mm256_set1_pd(k);
  const __m256d vtol = _mm256_set1_pd(tol);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  std::size_t replaced = 0;
  std::size_t x = 0;
  for (; x + 4 <= n; x += 4) {
    const __m256d c = _mm256_loadu_pd(count + x);
    const __m256d mean = _mm256_div_pd(_mm256_loadu_pd(sum + x), c);
    __m256d var = _mm256_sub_pd(_mm256_div_pd(_mm256_loadu_pd(sum_sq + x), c), _mm256_mul_pd(mean, mean));
    var = _mm256_max_pd(var, zero);
    const __m256d hv = _mm256_loadu_pd(h + x);
    const __m256d dev = _mm256_and_pd(_mm256_sub_pd(hv, mean), abs_mask);
    const __m256d thresh = _mm256_add_pd(_mm256_mul_pd(vk, _mm256_sqrt_pd(var)), vtol);
    const __m256d mask = _mm256_cmp_pd(dev, thresh, _CMP_GT_OQ);
    _mm256_storeu_pd(out + x, _mm256_blendv_pd(hv, mean, mask));
    replaced += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(_mm256_movemask_pd(mask))));
  }
  for (; x < n; ++x) {
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

void blur_row_interior_avx2(const std::complex<double>* above, const std::complex<double>* mid,
                            const std::complex<double>* below, std::size_t n,
                            std::complex<double>* out) {
  const __m256d ninth = _mm256_set1_pd(1.0 / 9.0);
  auto row3 = [](const std::complex<double>* r, std::size_t x) {
    const double* p = reinterpret_cast<const double*>(r + x);
    return _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(p - 2), _mm256_loadu_pd(p)),
                         _mm256_loadu_pd(p + 2));
  };
  std::size_t x = 1;
  for (; x + 2 < n; x += 2) {
    const __m256d v =
        _mm256_add_pd(_mm256_add_pd(row3(above, x), row3(mid, x)), row3(below, x));
    _mm256_storeu_pd(reinterpret_cast<double*>(out + x), _mm256_mul_pd(v, ninth));
  }
  constexpr double kNinth = 1.0 / 9.0;
  for (; x + 1 < n; ++x) {
    const std::complex<double> ra = above[x - 1] + above[x] + above[x + 1];
    const std::complex<double> rm = mid[x - 1] + mid[x] + mid[x + 1];
    const std::complex<double> rb = below[x - 1] + below[x] + below[x + 1];
    const std::complex<double> v = (ra + rm) + rb;
    out[x] = {v.real() * kNinth, v.imag() * kNinth};
  }
}

void scale_row_avx2(double* row, const double* col_weights, double row_weight, std::size_t n) {
  const __m256d rw = _mm256_set1_pd(row_weight);
  std::size_t x = 0;
  for (; x + 4 <= n; x += 4) {
    const __m256d w = _mm256_mul_pd(rw, _mm256_loadu_pd(col_weights + x));
    _mm256_storeu_pd(row + x, _mm256_mul_pd(_mm256_loadu_pd(row + x), w));
  }
  for (; x < n; ++x) row[x] *= row_weight * col_weights[x];
}

}  // namespace

namespace detail {

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{SimdLevel::avx2,       band_sums_avx2,
                                 disc_row_accumulate_avx2, spike_replace_row_avx2,
                                 blur_row_interior_avx2,  scale_row_avx2};
  return table;
}

}  // namespace detail
}  // namespace fracmatch::kernels
