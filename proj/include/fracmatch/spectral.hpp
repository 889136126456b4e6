#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fracmatch/heightmap.hpp"

namespace fracmatch {

using Complex = std::complex<double>;

/// Unnormalized 2D DFT of a height map, row-major in FFT order (index 0 is
/// DC, the upper half of each axis holds negative frequencies).
struct Spectrum {
  std::size_t width = 0;
  std::size_t height = 0;
  double freq_res_x = 0.0;  // mm⁻¹ per frequency line
  double freq_res_y = 0.0;
  std::vector<Complex> coeffs;
  std::string source_label;

  const Complex& at(std::size_t kx, std::size_t ky) const { return coeffs[ky * width + kx]; }
  double freq_resolution() const noexcept { return freq_res_x; }
  bool same_grid(const Spectrum& o) const noexcept {
    return width == o.width && height == o.height && freq_res_x == o.freq_res_x &&
           freq_res_y == o.freq_res_y;
  }
};

/// Half-open annulus [lo, hi) of radial spatial frequency in mm⁻¹.
struct Band {
  double lo = 0.0;
  double hi = 0.0;
};

class BandSet {
 public:
  BandSet() = default;
  explicit BandSet(std::vector<double> edges);

  /// Parses "5,10,20" style threshold lists.
  static BandSet parse(const std::string& text);
  /// The 5-10 and 10-20 mm⁻¹ classification bands.
  static BandSet classification();
  /// Ten bands from 3 to 200 mm⁻¹ used for the replica fidelity sweep.
  static BandSet sweep();

  std::size_t count() const noexcept { return edges_.empty() ? 0 : edges_.size() - 1; }
  Band band(std::size_t i) const { return {edges_.at(i), edges_.at(i + 1)}; }
  const std::vector<double>& edges() const noexcept { return edges_; }
  std::string to_string() const;
  bool operator==(const BandSet&) const = default;

 private:
  std::vector<double> edges_;
};

/// Selected bins of one band, stored as contiguous runs of the coefficient
/// grid so band sums stream through memory.
class BandLayout {
 public:
  struct Run {
    std::size_t offset;
    std::size_t length;
  };

  BandLayout(std::size_t width, std::size_t height, double freq_res_x, double freq_res_y,
             const BandSet& bands);
  static BandLayout for_spectrum(const Spectrum& s, const BandSet& bands) {
    return BandLayout(s.width, s.height, s.freq_res_x, s.freq_res_y, bands);
  }

  std::size_t band_count() const noexcept { return runs_.size(); }
  const std::vector<Run>& runs(std::size_t band) const { return runs_.at(band); }
  std::size_t bins(std::size_t band) const { return bins_.at(band); }
  /// Bins per quadrant: the number of distinct frequency lines up to the
  /// four-fold symmetry of a real image's spectrum.
  double frequency_lines(std::size_t band) const { return static_cast<double>(bins(band)) / 4.0; }
  /// True when the band spans fewer than two frequency lines radially.
  bool low_resolution(std::size_t band) const;
  const BandSet& bands() const noexcept { return bands_; }
  bool matches(const Spectrum& s) const noexcept {
    return s.width == width_ && s.height == height_ && s.freq_res_x == res_x_ &&
           s.freq_res_y == res_y_;
  }

 private:
  std::size_t width_, height_;
  double res_x_, res_y_;
  BandSet bands_;
  std::vector<std::vector<Run>> runs_;
  std::vector<std::size_t> bins_;
};

/// Coefficients of each band of one spectrum, gathered contiguously.
struct BandedCoefficients {
  std::vector<std::vector<Complex>> bands;
  std::string source_label;
};

BandedCoefficients extract_bands(const Spectrum& s, const BandLayout& layout);

struct BandCorrelation {
  double r = 0.0;
  std::size_t bins = 0;
  bool zero_energy = false;  // r forced to 0
  bool few_lines = false;    // fewer than 4 frequency lines in the band
};

// Windowing and transforms --------------------------------------------------

/// Per-axis tapered-cosine weights: the outer `edge_fraction` of each side
/// rolls off to zero, the interior is flat. edge_fraction = 0.5 is Hann.
std::vector<double> tukey_weights(std::size_t n, double edge_fraction);

HeightMap taper_window(const HeightMap& m, double edge_fraction = 0.1);

Spectrum fft2(const HeightMap& m);
/// Inverse of fft2 including the 1/(W·H) factor; returns the real part.
std::vector<double> ifft2_real(const Spectrum& s);
/// Complex-to-complex inverse, for callers that build spectra directly.
std::vector<Complex> ifft2(const std::vector<Complex>& coeffs, std::size_t width, std::size_t height);
std::vector<Complex> fft2(const std::vector<Complex>& grid, std::size_t width, std::size_t height);

// Correlation ------------------------------------------------------------------

/// Normalized real inner product of the two spectra over the band's bins,
/// i.e. the Pearson correlation of the band-pass filtered images.
BandCorrelation band_correlation(const Spectrum& a, const Spectrum& b, Band band);
BandCorrelation band_correlation(const BandedCoefficients& a, const BandedCoefficients& b,
                                 const BandLayout& layout, std::size_t band);

constexpr double kFisherClamp = 1e-7;
double fisher_z(double r);

/// 3x3 uniform blur of the coefficient grid with periodic wrap.
Spectrum blur_spectrum(const Spectrum& s);

// Height-height statistic ---------------------------------------------------

struct SaturationPoint {
  double window_um;
  double statistic;  // RMS height difference normalized by its value at the largest window
};

struct SaturationCurve {
  std::vector<SaturationPoint> points;
  /// Smallest window where the log-log slope falls below 0.1.
  std::optional<double> saturation_um;
  bool flat = false;  // surface had no height variation
};

SaturationCurve height_height_saturation(const HeightMap& m, const std::vector<double>& window_sizes_um);

}  // namespace fracmatch
