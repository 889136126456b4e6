#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fracmatch/heightmap.hpp"

namespace testutil {

inline fracmatch::HeightMap random_map(std::size_t w, std::size_t h, double pitch, std::uint64_t seed,
                                       double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(w * h);
  for (auto& x : v) x = n(rng);
  return fracmatch::HeightMap(w, h, pitch, std::move(v));
}

template <class F>
fracmatch::HeightMap map_from(std::size_t w, std::size_t h, double pitch, F&& f) {
  std::vector<double> v(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = f(static_cast<double>(x), static_cast<double>(y));
  }
  return fracmatch::HeightMap(w, h, pitch, std::move(v));
}

/// Direct O(N⁴) DFT, FFT ordering, e^{-2πi(kx·x/W + ky·y/H)}.
inline std::vector<std::complex<double>> naive_dft(const fracmatch::HeightMap& m) {
  const std::size_t w = m.width(), h = m.height();
  std::vector<std::complex<double>> out(w * h);
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double ph = -2.0 * std::numbers::pi *
                            (static_cast<double>(kx * x % w) / static_cast<double>(w) +
                             static_cast<double>(ky * y % h) / static_cast<double>(h));
          acc += m.at(x, y) * std::complex<double>(std::cos(ph), std::sin(ph));
        }
      }
      out[ky * w + kx] = acc;
    }
  }
  return out;
}

inline double signed_freq(std::size_t k, std::size_t n, double res) {
  const double s = k <= (n - 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  return s * res;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("fracmatch_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testutil
