#include "fracmatch/heightmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fracmatch/error.hpp"
#include "fracmatch/kernels.hpp"

namespace fracmatch {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io_failure: return "io_failure";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::bad_version: return "bad_version";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::non_rectangular: return "non_rectangular";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::bad_pitch: return "bad_pitch";
    case ErrorCode::too_small: return "too_small";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::strip_too_narrow: return "strip_too_narrow";
    case ErrorCode::empty_band: return "empty_band";
    case ErrorCode::degenerate_scatter: return "degenerate_scatter";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::fingerprint_mismatch: return "fingerprint_mismatch";
  }
  return "unknown";
}

HeightMap::HeightMap(std::size_t width, std::size_t height, double pitch_um,
                     std::vector<double> heights, std::string label)
    : width_(width), height_(height), pitch_um_(pitch_um), heights_(std::move(heights)),
      label_(std::move(label)) {
  if (width_ < kMinSide || height_ < kMinSide) {
    throw Error(ErrorCode::too_small, "height map must be at least 8x8, got " +
                                          std::to_string(width_) + "x" + std::to_string(height_));
  }
  if (!(pitch_um_ > 0.0) || !std::isfinite(pitch_um_)) {
    throw Error(ErrorCode::bad_pitch, "pixel pitch must be positive and finite");
  }
  if (heights_.size() != width_ * height_) {
    throw Error(ErrorCode::non_rectangular, "height count does not match width x height");
  }
  if (!std::all_of(heights_.begin(), heights_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::non_finite, "height map contains NaN or Inf");
  }
}

HeightMap HeightMap::with_values(std::vector<double> heights) const {
  return HeightMap(width_, height_, pitch_um_, std::move(heights), label_);
}

HeightMap HeightMap::with_label(std::string label) const {
  HeightMap out = *this;
  out.label_ = std::move(label);
  return out;
}

const char* to_string(SurfaceRole role) noexcept {
  switch (role) {
    case SurfaceRole::base: return "base";
    case SurfaceRole::tip: return "tip";
    case SurfaceRole::replica: return "replica";
  }
  return "unknown";
}

SurfaceRole parse_role(const std::string& s) {
  if (s == "base") return SurfaceRole::base;
  if (s == "tip") return SurfaceRole::tip;
  if (s == "replica") return SurfaceRole::replica;
  throw Error(ErrorCode::invalid_argument, "unknown surface role: " + s);
}

const char* to_string(MirrorAxis axis) noexcept {
  switch (axis) {
    case MirrorAxis::horizontal: return "h";
    case MirrorAxis::vertical: return "v";
    case MirrorAxis::off: return "off";
  }
  return "unknown";
}

MirrorAxis parse_mirror_axis(const std::string& s) {
  if (s == "h" || s == "horizontal") return MirrorAxis::horizontal;
  if (s == "v" || s == "vertical") return MirrorAxis::vertical;
  if (s == "off" || s == "none") return MirrorAxis::off;
  throw Error(ErrorCode::invalid_argument, "unknown mirror axis: " + s);
}

void ImageSequence::validate() const {
  if (images.empty()) throw Error(ErrorCode::invalid_argument, "image sequence is empty");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "overlap fraction must lie in [0, 1)");
  }
  const HeightMap& first = images.front();
  for (const HeightMap& m : images) {
    if (m.width() != first.width() || m.height() != first.height() ||
        m.pitch_um() != first.pitch_um()) {
      throw Error(ErrorCode::shape_mismatch, "images in a sequence must share size and pitch");
    }
  }
}

HeightMap remove_tilt(const HeightMap& m) {
  // With centred coordinates the plane's normal equations decouple.
  const std::size_t w = m.width(), h = m.height();
  const double cx = 0.5 * static_cast<double>(w - 1);
  const double cy = 0.5 * static_cast<double>(h - 1);
  double sum = 0.0, sxh = 0.0, syh = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    const double dy = static_cast<double>(y) - cy;
    double row_sum = 0.0, row_x = 0.0;
    const auto r = m.row(y);
    for (std::size_t x = 0; x < w; ++x) {
      row_sum += r[x];
      row_x += (static_cast<double>(x) - cx) * r[x];
    }
    sum += row_sum;
    sxh += row_x;
    syh += dy * row_sum;
  }
  const double n = static_cast<double>(w * h);
  // Σ(x - cx)² over the grid = h · w(w² - 1)/12
  const double sxx = static_cast<double>(h) * static_cast<double>(w) *
                     (static_cast<double>(w) * static_cast<double>(w) - 1.0) / 12.0;
  const double syy = static_cast<double>(w) * static_cast<double>(h) *
                     (static_cast<double>(h) * static_cast<double>(h) - 1.0) / 12.0;
  const double a = sxh / sxx, b = syh / syy, c = sum / n;

  std::vector<double> out(m.size());
  for (std::size_t y = 0; y < h; ++y) {
    const double plane_y = c + b * (static_cast<double>(y) - cy);
    const auto r = m.row(y);
    for (std::size_t x = 0; x < w; ++x) {
      out[y * w + x] = r[x] - (plane_y + a * (static_cast<double>(x) - cx));
    }
  }
  return m.with_values(std::move(out));
}

SpikeResult remove_spikes(const HeightMap& m, int radius, double k) {
  if (radius < 1) throw Error(ErrorCode::invalid_argument, "spike radius must be >= 1");
  if (!(k > 0.0)) throw Error(ErrorCode::invalid_argument, "spike threshold must be positive");
  const std::size_t w = m.width(), h = m.height();
  const std::size_t r = static_cast<std::size_t>(radius);
  if (w <= 2 * r + 1 || h <= 2 * r + 1) {
    throw Error(ErrorCode::too_small, "image must exceed the spike window in both dimensions");
  }

  // Work on mean-shifted values so the single-pass variance keeps precision.
  const auto vals = m.values();
  const double shift = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  double peak = 0.0;
  std::vector<double> centred(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    centred[i] = vals[i] - shift;
    peak = std::max(peak, std::fabs(centred[i]));
  }
  // Deviations below this are rounding noise of the prefix sums.
  const double tol = 1e-10 * peak;

  std::vector<double> prefix((w + 1) * h), prefix_sq((w + 1) * h);
  for (std::size_t y = 0; y < h; ++y) {
    double* p = &prefix[y * (w + 1)];
    double* q = &prefix_sq[y * (w + 1)];
    p[0] = q[0] = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      const double v = centred[y * w + x];
      p[x + 1] = p[x] + v;
      q[x + 1] = q[x] + v * v;
    }
  }

  std::vector<std::size_t> half(r + 1);
  for (std::size_t d = 0; d <= r; ++d) {
    half[d] = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(r * r - d * d)) + 1e-12));
  }

  const auto& kt = kernels::active();
  std::vector<double> sum(w), sum_sq(w), count(w), out_row(w);
  std::vector<double> out(vals.size());
  std::size_t replaced = 0;

  for (std::size_t y = 0; y < h; ++y) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
    std::fill(count.begin(), count.end(), 0.0);
    const std::size_t y0 = y >= r ? y - r : 0;
    const std::size_t y1 = std::min(h - 1, y + r);
    for (std::size_t yy = y0; yy <= y1; ++yy) {
      const std::size_t hw = half[yy > y ? yy - y : y - yy];
      const double* p = &prefix[yy * (w + 1)];
      const double* q = &prefix_sq[yy * (w + 1)];
      auto clipped = [&](std::size_t x) {
        const std::size_t lo = x >= hw ? x - hw : 0;
        const std::size_t hi = std::min(w - 1, x + hw);
        sum[x] += p[hi + 1] - p[lo];
        sum_sq[x] += q[hi + 1] - q[lo];
      };
      const std::size_t inner_begin = hw;
      const std::size_t inner_end = w - hw;
      for (std::size_t x = 0; x < inner_begin; ++x) clipped(x);
      kt.disc_row_accumulate({p, q, hw, sum.data(), sum_sq.data(), inner_begin, inner_end});
      for (std::size_t x = inner_end; x < w; ++x) clipped(x);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t lo = x >= hw ? x - hw : 0;
        const std::size_t hi = std::min(w - 1, x + hw);
        count[x] += static_cast<double>(hi - lo + 1);
      }
    }
    replaced += kt.spike_replace_row(&centred[y * w], sum.data(), sum_sq.data(), count.data(), w,
                                     k, tol, out_row.data());
    // Untouched pixels keep their exact input value.
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      out[i] = out_row[x] == centred[i] ? vals[i] : out_row[x] + shift;
    }
  }
  return {m.with_values(std::move(out)), replaced};
}

HeightMap mirror(const HeightMap& m, MirrorAxis axis) {
  if (axis == MirrorAxis::off) return m;
  const std::size_t w = m.width(), h = m.height();
  std::vector<double> out(m.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = axis == MirrorAxis::horizontal ? w - 1 - x : x;
      const std::size_t sy = axis == MirrorAxis::vertical ? h - 1 - y : y;
      out[y * w + x] = m.at(sx, sy);
    }
  }
  return m.with_values(std::move(out));
}

std::size_t required_strip_width(std::size_t window, std::size_t count, double overlap_fraction) {
  if (count == 0) return 0;
  const double stride = static_cast<double>(window) * (1.0 - overlap_fraction);
  return window + static_cast<std::size_t>(std::llround(stride * static_cast<double>(count - 1)));
}

ImageSequence extract_windows(const HeightMap& strip, std::size_t window, std::size_t count,
                              double overlap_fraction, SurfaceRole role) {
  if (count == 0) throw Error(ErrorCode::invalid_argument, "window count must be >= 1");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "overlap fraction must lie in [0, 1)");
  }
  if (window > strip.height()) {
    throw Error(ErrorCode::strip_too_narrow, "window taller than the strip");
  }
  if (required_strip_width(window, count, overlap_fraction) > strip.width()) {
    throw Error(ErrorCode::strip_too_narrow,
                "strip width " + std::to_string(strip.width()) + " cannot hold " +
                    std::to_string(count) + " windows of " + std::to_string(window) + " px");
  }
  const double stride = static_cast<double>(window) * (1.0 - overlap_fraction);
  const std::size_t top = (strip.height() - window) / 2;

  ImageSequence seq;
  seq.overlap_fraction = overlap_fraction;
  seq.role = role;
  seq.images.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t left = static_cast<std::size_t>(std::llround(stride * static_cast<double>(k)));
    std::vector<double> v(window * window);
    for (std::size_t y = 0; y < window; ++y) {
      const auto src = strip.row(top + y).subspan(left, window);
      std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(y * window));
    }
    seq.images.emplace_back(window, window, strip.pitch_um(), std::move(v),
                            strip.label() + "/img" + std::to_string(k));
  }
  return seq;
}

}  // namespace fracmatch
