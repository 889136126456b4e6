#include "fracmatch/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

#include "fracmatch/error.hpp"
#include "fracmatch/kernels.hpp"

namespace fracmatch {
namespace {

// FFTW's planner is not reentrant; execution on private buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))), size(n) {
    if (data == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  fftw_complex* data;
  std::size_t size;
};

std::vector<Complex> transform(const std::vector<Complex>& in, std::size_t width,
                               std::size_t height, int sign) {
  if (in.size() != width * height) {
    throw Error(ErrorCode::shape_mismatch, "FFT input size does not match its dimensions");
  }
  FftwBuffer buf(in.size());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), buf.data, buf.data,
                            sign, FFTW_ESTIMATE);
  }
  std::copy(in.begin(), in.end(), reinterpret_cast<Complex*>(buf.data));
  fftw_execute(plan);
  std::vector<Complex> out(reinterpret_cast<Complex*>(buf.data),
                           reinterpret_cast<Complex*>(buf.data) + in.size());
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

// Signed frequency index in FFT order.
inline double signed_index(std::size_t k, std::size_t n) {
  return k <= (n - 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

}  // namespace

// BandSet ----------------------------------------------------------------------

BandSet::BandSet(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw Error(ErrorCode::invalid_argument, "a band set needs at least two edges");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!(edges_[i] > 0.0) || !std::isfinite(edges_[i])) {
      throw Error(ErrorCode::invalid_argument, "band edges must be positive and finite");
    }
    if (i > 0 && !(edges_[i] > edges_[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "band edges must be strictly ascending");
    }
  }
}

BandSet BandSet::parse(const std::string& text) {
  std::vector<double> edges;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "bad band edge '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw Error(ErrorCode::invalid_argument, "bad band edge '" + item + "'");
    edges.push_back(v);
  }
  return BandSet(std::move(edges));
}

BandSet BandSet::classification() { return BandSet({5, 10, 20}); }

BandSet BandSet::sweep() { return BandSet({3, 5, 10, 20, 25, 33, 50, 67, 100, 133, 200}); }

std::string BandSet::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (i) os << ',';
    os << edges_[i];
  }
  return os.str();
}

// BandLayout -------------------------------------------------------------------

BandLayout::BandLayout(std::size_t width, std::size_t height, double freq_res_x, double freq_res_y,
                       const BandSet& bands)
    : width_(width), height_(height), res_x_(freq_res_x), res_y_(freq_res_y), bands_(bands),
      runs_(bands.count()), bins_(bands.count(), 0) {
  const auto& edges = bands_.edges();
  for (std::size_t ky = 0; ky < height; ++ky) {
    const double fy = signed_index(ky, height) * res_y_;
    std::size_t run_band = 0, run_start = 0;
    bool in_run = false;
    auto close_run = [&](std::size_t end) {
      if (in_run) {
        runs_[run_band].push_back({ky * width + run_start, end - run_start});
        bins_[run_band] += end - run_start;
        in_run = false;
      }
    };
    for (std::size_t kx = 0; kx < width; ++kx) {
      const double fx = signed_index(kx, width) * res_x_;
      const double f = std::sqrt(fx * fx + fy * fy);
      // index of the band with edges[b] <= f < edges[b+1], if any
      const auto it = std::upper_bound(edges.begin(), edges.end(), f);
      const bool inside = it != edges.begin() && it != edges.end();
      const std::size_t b = inside ? static_cast<std::size_t>(it - edges.begin()) - 1 : 0;
      if (!inside || (in_run && b != run_band)) close_run(kx);
      if (inside && !in_run) {
        in_run = true;
        run_band = b;
        run_start = kx;
      }
    }
    close_run(width);
  }
}

bool BandLayout::low_resolution(std::size_t band) const {
  const Band b = bands_.band(band);
  return (b.hi - b.lo) / std::max(res_x_, res_y_) < 2.0;
}

BandedCoefficients extract_bands(const Spectrum& s, const BandLayout& layout) {
  if (!layout.matches(s)) {
    throw Error(ErrorCode::shape_mismatch, "band layout built for a different spectrum grid");
  }
  BandedCoefficients out;
  out.source_label = s.source_label;
  out.bands.resize(layout.band_count());
  for (std::size_t b = 0; b < layout.band_count(); ++b) {
    auto& dst = out.bands[b];
    dst.reserve(layout.bins(b));
    for (const auto& run : layout.runs(b)) {
      dst.insert(dst.end(), s.coeffs.begin() + static_cast<std::ptrdiff_t>(run.offset),
                 s.coeffs.begin() + static_cast<std::ptrdiff_t>(run.offset + run.length));
    }
  }
  return out;
}

// Windowing and transforms -----------------------------------------------------

std::vector<double> tukey_weights(std::size_t n, double edge_fraction) {
  if (!(edge_fraction > 0.0 && edge_fraction <= 0.5)) {
    throw Error(ErrorCode::invalid_argument, "taper edge fraction must lie in (0, 0.5]");
  }
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  const double span = edge_fraction * static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::min(static_cast<double>(i), static_cast<double>(n - 1 - i));
    if (d < span) w[i] = 0.5 * (1.0 - std::cos(std::numbers::pi * d / span));
  }
  return w;
}

HeightMap taper_window(const HeightMap& m, double edge_fraction) {
  const auto wx = tukey_weights(m.width(), edge_fraction);
  const auto wy = tukey_weights(m.height(), edge_fraction);
  std::vector<double> out(m.values().begin(), m.values().end());
  const auto& kt = kernels::active();
  for (std::size_t y = 0; y < m.height(); ++y) {
    kt.scale_row(&out[y * m.width()], wx.data(), wy[y], m.width());
  }
  return m.with_values(std::move(out));
}

std::vector<Complex> fft2(const std::vector<Complex>& grid, std::size_t width, std::size_t height) {
  return transform(grid, width, height, FFTW_FORWARD);
}

std::vector<Complex> ifft2(const std::vector<Complex>& coeffs, std::size_t width, std::size_t height) {
  auto out = transform(coeffs, width, height, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(width * height);
  for (auto& v : out) v *= scale;
  return out;
}

Spectrum fft2(const HeightMap& m) {
  std::vector<Complex> grid(m.values().begin(), m.values().end());
  Spectrum s;
  s.width = m.width();
  s.height = m.height();
  s.freq_res_x = m.freq_resolution_x();
  s.freq_res_y = m.freq_resolution_y();
  s.coeffs = fft2(grid, m.width(), m.height());
  s.source_label = m.label();
  return s;
}

std::vector<double> ifft2_real(const Spectrum& s) {
  const auto c = ifft2(s.coeffs, s.width, s.height);
  std::vector<double> out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](const Complex& z) { return z.real(); });
  return out;
}

// Correlation ------------------------------------------------------------------

namespace {

BandCorrelation finish(const kernels::BandSums& s, std::size_t bins, double lines) {
  BandCorrelation out;
  out.bins = bins;
  out.few_lines = lines < 4.0;
  if (!(s.energy_a > 0.0) || !(s.energy_b > 0.0)) {
    out.zero_energy = true;
    out.r = 0.0;
    return out;
  }
  out.r = std::clamp(s.cross / std::sqrt(s.energy_a * s.energy_b), -1.0, 1.0);
  return out;
}

}  // namespace

BandCorrelation band_correlation(const Spectrum& a, const Spectrum& b, Band band) {
  if (!a.same_grid(b)) {
    throw Error(ErrorCode::shape_mismatch, "spectra differ in size or frequency resolution");
  }
  const BandLayout layout = BandLayout::for_spectrum(a, BandSet({band.lo, band.hi}));
  if (layout.bins(0) == 0) {
    std::ostringstream os;
    os << "band [" << band.lo << ", " << band.hi << ") mm^-1 contains no frequency bins";
    throw Error(ErrorCode::empty_band, os.str());
  }
  const auto& kt = kernels::active();
  kernels::BandSums sums;
  for (const auto& run : layout.runs(0)) {
    sums += kt.band_sums(a.coeffs.data() + run.offset, b.coeffs.data() + run.offset, run.length);
  }
  return finish(sums, layout.bins(0), layout.frequency_lines(0));
}

BandCorrelation band_correlation(const BandedCoefficients& a, const BandedCoefficients& b,
                                 const BandLayout& layout, std::size_t band) {
  const auto& va = a.bands.at(band);
  const auto& vb = b.bands.at(band);
  if (va.size() != vb.size() || va.size() != layout.bins(band)) {
    throw Error(ErrorCode::shape_mismatch, "banded coefficients do not match the layout");
  }
  if (va.empty()) {
    const Band bd = layout.bands().band(band);
    std::ostringstream os;
    os << "band [" << bd.lo << ", " << bd.hi << ") mm^-1 contains no frequency bins";
    throw Error(ErrorCode::empty_band, os.str());
  }
  const auto sums = kernels::active().band_sums(va.data(), vb.data(), va.size());
  return finish(sums, va.size(), layout.frequency_lines(band));
}

double fisher_z(double r) {
  const double c = std::clamp(r, -1.0 + kFisherClamp, 1.0 - kFisherClamp);
  return std::atanh(c);
}

Spectrum blur_spectrum(const Spectrum& s) {
  const std::size_t w = s.width, h = s.height;
  Spectrum out = s;
  const auto& kt = kernels::active();
  for (std::size_t y = 0; y < h; ++y) {
    const Complex* above = &s.coeffs[((y + h - 1) % h) * w];
    const Complex* mid = &s.coeffs[y * w];
    const Complex* below = &s.coeffs[((y + 1) % h) * w];
    Complex* dst = &out.coeffs[y * w];
    kt.blur_row_interior(above, mid, below, w, dst);
    for (std::size_t x : {std::size_t{0}, w - 1}) {
      const std::size_t xl = (x + w - 1) % w, xr = (x + 1) % w;
      const Complex ra = above[xl] + above[x] + above[xr];
      const Complex rm = mid[xl] + mid[x] + mid[xr];
      const Complex rb = below[xl] + below[x] + below[xr];
      const Complex v = (ra + rm) + rb;
      dst[x] = {v.real() * (1.0 / 9.0), v.imag() * (1.0 / 9.0)};
    }
  }
  return out;
}

// Height-height statistic ------------------------------------------------------

SaturationCurve height_height_saturation(const HeightMap& m, const std::vector<double>& window_sizes_um) {
  if (window_sizes_um.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "need at least two window sizes");
  }
  std::vector<std::size_t> lags;
  for (std::size_t i = 0; i < window_sizes_um.size(); ++i) {
    if (i > 0 && !(window_sizes_um[i] > window_sizes_um[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "window sizes must be ascending");
    }
    const double px = window_sizes_um[i] / m.pitch_um();
    const auto lag = static_cast<std::size_t>(std::llround(px));
    if (lag < 4 || lag >= m.width()) {
      throw Error(ErrorCode::invalid_argument, "window sizes must span 4 pixels to the image width");
    }
    lags.push_back(lag);
  }

  std::vector<double> raw(lags.size(), 0.0);
  for (std::size_t i = 0; i < lags.size(); ++i) {
    const std::size_t lag = lags[i];
    double acc = 0.0;
    for (std::size_t y = 0; y < m.height(); ++y) {
      const auto r = m.row(y);
      for (std::size_t x = 0; x + lag < r.size(); ++x) {
        const double d = r[x + lag] - r[x];
        acc += d * d;
      }
    }
    raw[i] = std::sqrt(acc / static_cast<double>((m.width() - lag) * m.height()));
  }

  SaturationCurve curve;
  const double ref = raw.back();
  if (!(ref > 0.0)) {
    curve.flat = true;
    for (std::size_t i = 0; i < lags.size(); ++i) curve.points.push_back({window_sizes_um[i], 0.0});
    return curve;
  }
  for (std::size_t i = 0; i < lags.size(); ++i) {
    curve.points.push_back({window_sizes_um[i], raw[i] / ref});
  }
  for (std::size_t i = 0; i + 1 < lags.size(); ++i) {
    // Slopes use the realized pixel lags; sizes rounding to the same lag carry no slope.
    if (lags[i + 1] == lags[i]) continue;
    const double a = curve.points[i].statistic, b = curve.points[i + 1].statistic;
    if (!(a > 0.0) || !(b > 0.0)) continue;
    const double slope = std::log(b / a) / std::log(static_cast<double>(lags[i + 1]) / static_cast<double>(lags[i]));
    if (slope < 0.1) {
      curve.saturation_um = window_sizes_um[i];
      break;
    }
  }
  return curve;
}

}  // namespace fracmatch
