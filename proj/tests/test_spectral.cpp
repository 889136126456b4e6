#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fracmatch/error.hpp"
#include "fracmatch/spectral.hpp"
#include "fracmatch/synth.hpp"
#include "test_util.hpp"

using namespace fracmatch;
using testutil::map_from;
using testutil::random_map;

namespace {

// 64 px at 10 µm pitch: a 640 µm field of view on a small grid.
constexpr double kPitch = 10.0;

double radial(std::size_t kx, std::size_t ky, std::size_t w, std::size_t h, double rx, double ry) {
  const double fx = testutil::signed_freq(kx, w, rx), fy = testutil::signed_freq(ky, h, ry);
  return std::sqrt(fx * fx + fy * fy);
}

double oracle_band_r(const HeightMap& a, const HeightMap& b, Band band) {
  const auto A = testutil::naive_dft(a), B = testutil::naive_dft(b);
  double cross = 0, ea = 0, eb = 0;
  for (std::size_t ky = 0; ky < a.height(); ++ky) {
    for (std::size_t kx = 0; kx < a.width(); ++kx) {
      const double f = radial(kx, ky, a.width(), a.height(), a.freq_resolution_x(), a.freq_resolution_y());
      if (f < band.lo || f >= band.hi) continue;
      const auto& x = A[ky * a.width() + kx];
      const auto& y = B[ky * a.width() + kx];
      cross += (x * std::conj(y)).real();
      ea += std::norm(x);
      eb += std::norm(y);
    }
  }
  return cross / std::sqrt(ea * eb);
}

std::vector<double> bandpass(const Spectrum& s, Band band) {
  Spectrum f = s;
  for (std::size_t ky = 0; ky < s.height; ++ky) {
    for (std::size_t kx = 0; kx < s.width; ++kx) {
      const double r = radial(kx, ky, s.width, s.height, s.freq_res_x, s.freq_res_y);
      if (r < band.lo || r >= band.hi) f.coeffs[ky * s.width + kx] = 0.0;
    }
  }
  return ifft2_real(f);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
  ma /= n; mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> log_grid(double from, double to, double ratio) {
  std::vector<double> L;
  for (double l = from; l <= to; l *= ratio) L.push_back(l);
  return L;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("band set parsing and validation") {
  const BandSet s = BandSet::parse("5,10,20");
  CHECK(s.count() == 2);
  CHECK(s == BandSet::classification());
  CHECK(BandSet::sweep().count() == 10);
  CHECK(BandSet::parse(BandSet::sweep().to_string()) == BandSet::sweep());
  CHECK_THROWS_AS(BandSet({10, 5}), Error);
  CHECK_THROWS_AS(BandSet({0, 5}), Error);
  CHECK_THROWS_AS(BandSet({5}), Error);
  CHECK_THROWS_AS(BandSet::parse("5,x"), Error);
}

TEST_CASE("tukey taper: corners, plateau and the Hann limit") {
  const HeightMap ones(101, 101, 1.0, std::vector<double>(101 * 101, 1.0));
  const HeightMap t = taper_window(ones);
  CHECK(t.at(0, 0) == 0.0);
  CHECK(t.at(100, 100) == 0.0);
  CHECK(t.at(0, 100) == 0.0);
  CHECK(t.at(50, 50) == 1.0);
  CHECK(t.at(30, 70) == 1.0);

  const auto hann = tukey_weights(101, 0.5);
  CHECK(hann[0] == 0.0);
  CHECK(hann[50] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(hann[25] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hann[75] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(tukey_weights(16, 0.0), Error);
  CHECK_THROWS_AS(tukey_weights(16, 0.6), Error);
}

TEST_CASE("fft2 of a constant grid is DC only") {
  const HeightMap c(32, 32, 1.0, std::vector<double>(32 * 32, 2.5));
  const Spectrum s = fft2(c);
  CHECK(s.at(0, 0).real() == doctest::Approx(2.5 * 32 * 32).epsilon(1e-12));
  for (std::size_t i = 1; i < s.coeffs.size(); ++i) CHECK(std::abs(s.coeffs[i]) < 1e-9 * 2.5 * 1024);
  CHECK(s.freq_resolution() == doctest::Approx(1000.0 / 32.0));
}

TEST_CASE("fft2 agrees with a direct DFT and concentrates a cosine") {
  // wavelength 64 px along x
  const HeightMap m = map_from(64, 64, 1.0, [](double x, double) { return std::cos(2.0 * std::numbers::pi * x / 64.0); });
  const Spectrum s = fft2(m);
  const auto oracle = testutil::naive_dft(m);
  double total = 0, peak = 0;
  for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
    CHECK(std::abs(s.coeffs[i] - oracle[i]) < 1e-8);
    total += std::norm(s.coeffs[i]);
  }
  peak = std::norm(s.at(1, 0)) + std::norm(s.at(63, 0));
  CHECK(peak / total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.at(1, 0).real() == doctest::Approx(64.0 * 64.0 / 2.0));

  const HeightMap r = random_map(24, 20, 1.0, 4);
  const Spectrum sr = fft2(r);
  const auto orr = testutil::naive_dft(r);
  for (std::size_t i = 0; i < sr.coeffs.size(); ++i) CHECK(std::abs(sr.coeffs[i] - orr[i]) < 1e-9);
}

TEST_CASE("Parseval and inverse round trip") {
  const HeightMap m = random_map(64, 48, 1.0, 8);
  const Spectrum s = fft2(m);
  double e_space = 0, e_freq = 0;
  for (double v : m.values()) e_space += v * v;
  for (const auto& c : s.coeffs) e_freq += std::norm(c);
  CHECK(e_freq / static_cast<double>(m.size()) == doctest::Approx(e_space).epsilon(1e-9));
  const auto back = ifft2_real(s);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == doctest::Approx(m.values()[i]).epsilon(1e-12));
}

TEST_CASE("band correlation: self, sign flip, symmetry, bounds") {
  const HeightMap a = random_map(64, 64, kPitch, 1);
  const HeightMap b = random_map(64, 64, kPitch, 2);
  const Spectrum sa = fft2(a), sb = fft2(b);
  std::vector<double> neg(a.values().begin(), a.values().end());
  for (auto& v : neg) v = -v;
  const Spectrum sn = fft2(a.with_values(neg));
  for (const Band band : {Band{5, 10}, Band{10, 20}, Band{20, 50}}) {
    CHECK(band_correlation(sa, sa, band).r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(band_correlation(sa, sn, band).r == doctest::Approx(-1.0).epsilon(1e-12));
    const double ab = band_correlation(sa, sb, band).r;
    CHECK(ab == band_correlation(sb, sa, band).r);
    CHECK(std::fabs(ab) <= 1.0);
  }
}

TEST_CASE("independent surfaces against a brute-force annulus oracle") {
  const HeightMap a = random_map(64, 64, kPitch, 101);
  const HeightMap b = random_map(64, 64, kPitch, 202);
  const Band band{5, 10};
  const auto bc = band_correlation(fft2(a), fft2(b), band);
  const double oracle = oracle_band_r(a, b, band);
  MESSAGE("r(5-10) = " << bc.r);
  CHECK(std::fabs(bc.r) < 0.3);
  CHECK(bc.r == doctest::Approx(oracle).epsilon(1e-10));
  const auto wide = band_correlation(fft2(a), fft2(b), Band{20, 40});
  CHECK(wide.r == doctest::Approx(oracle_band_r(a, b, Band{20, 40})).epsilon(1e-10));
}

TEST_CASE("frequency-space correlation equals real-space Pearson of band-passed images") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const HeightMap a = random_map(64, 64, kPitch, 10 + seed);
    std::vector<double> mix(a.values().begin(), a.values().end());
    const HeightMap n = random_map(64, 64, kPitch, 50 + seed);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.6 * mix[i] + n.values()[i];
    const HeightMap b = a.with_values(mix);
    const Spectrum sa = fft2(a), sb = fft2(b);
    for (const Band band : {Band{5, 10}, Band{10, 20}, Band{30, 45}}) {
      const double r = band_correlation(sa, sb, band).r;
      const double real_space = pearson(bandpass(sa, band), bandpass(sb, band));
      CHECK(std::fabs(r - real_space) < 1e-6);
    }
  }
}

TEST_CASE("zero-energy and empty bands") {
  const HeightMap z(64, 64, kPitch, std::vector<double>(64 * 64, 0.0));
  const HeightMap a = random_map(64, 64, kPitch, 3);
  const auto r = band_correlation(fft2(z), fft2(a), Band{5, 10});
  CHECK(r.r == 0.0);
  CHECK(r.zero_energy);
  CHECK_THROWS_AS(band_correlation(fft2(a), fft2(a), Band{0.1, 0.2}), Error);
  const HeightMap other = random_map(32, 32, kPitch, 3);
  CHECK_THROWS_AS(band_correlation(fft2(a), fft2(other), Band{5, 10}), Error);
}

TEST_CASE("scale invariance of band correlations") {
  const HeightMap a = random_map(64, 64, kPitch, 5);
  const HeightMap b = random_map(64, 64, kPitch, 6);
  std::vector<double> va(a.values().begin(), a.values().end()), vb(b.values().begin(), b.values().end());
  for (auto& v : va) v *= 37.5;
  for (auto& v : vb) v *= 37.5;
  for (const Band band : {Band{5, 10}, Band{10, 20}}) {
    const double r0 = band_correlation(fft2(a), fft2(b), band).r;
    const double r1 = band_correlation(fft2(a.with_values(va)), fft2(b.with_values(vb)), band).r;
    CHECK(std::fabs(r0 - r1) < 1e-12);
  }
}

TEST_CASE("banded path agrees with the direct path") {
  const HeightMap a = random_map(80, 64, 2.0, 7), b = random_map(80, 64, 2.0, 8);
  const Spectrum sa = fft2(a), sb = fft2(b);
  const BandSet bands({10, 20, 50, 100, 200});
  const BandLayout layout = BandLayout::for_spectrum(sa, bands);
  const auto ba = extract_bands(sa, layout), bb = extract_bands(sb, layout);
  for (std::size_t i = 0; i < bands.count(); ++i) {
    const auto direct = band_correlation(sa, sb, bands.band(i));
    const auto banded = band_correlation(ba, bb, layout, i);
    CHECK(banded.bins == direct.bins);
    CHECK(banded.r == doctest::Approx(direct.r).epsilon(1e-12));
  }
}

TEST_CASE("band partition: every bin in range lands in exactly one band") {
  const std::size_t w = 96, h = 64;
  const HeightMap m(w, h, 0.625 * 8, std::vector<double>(w * h, 0.0));
  const BandSet bands = BandSet::sweep();
  const BandLayout layout(w, h, m.freq_resolution_x(), m.freq_resolution_y(), bands);
  std::vector<int> hits(w * h, 0);
  std::size_t total = 0;
  for (std::size_t b = 0; b < layout.band_count(); ++b) {
    for (const auto& run : layout.runs(b)) {
      for (std::size_t i = run.offset; i < run.offset + run.length; ++i) ++hits[i];
    }
    total += layout.bins(b);
  }
  std::size_t expected = 0;
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      const double f = radial(kx, ky, w, h, m.freq_resolution_x(), m.freq_resolution_y());
      const bool inside = f >= 3.0 && f < 200.0;
      expected += inside;
      CHECK(hits[ky * w + kx] == (inside ? 1 : 0));
    }
  }
  CHECK(total == expected);
}

TEST_CASE("low-resolution flag at a 640 µm field of view") {
  const BandLayout layout(1024, 1024, 1.5625, 1.5625, BandSet::sweep());
  CHECK(layout.low_resolution(0));
  CHECK(layout.frequency_lines(0) > 4.0);
  for (std::size_t b = 1; b < layout.band_count(); ++b) CHECK_FALSE(layout.low_resolution(b));
}

TEST_CASE("fisher_z") {
  CHECK(fisher_z(0.0) == 0.0);
  CHECK(fisher_z(0.5) == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-15));
  CHECK(fisher_z(1.0) == doctest::Approx(8.40562).epsilon(1e-6));
  CHECK(fisher_z(1.0) == std::atanh(1.0 - 1e-7));
  CHECK(fisher_z(-1.0) == -fisher_z(1.0));
  CHECK(std::isfinite(fisher_z(1.0)));
  double prev = fisher_z(-1.0 + 1e-7);
  for (double r = -0.999; r < 1.0; r += 0.001) {
    const double z = fisher_z(r);
    CHECK(z > prev);
    CHECK(fisher_z(-r) == -z);
    prev = z;
  }
}

TEST_CASE("blur: impulse, constant, and total sum") {
  Spectrum imp;
  imp.width = 8;
  imp.height = 6;
  imp.freq_res_x = imp.freq_res_y = 1.0;
  imp.coeffs.assign(48, Complex{});
  imp.coeffs[0] = 1.0;  // corner bin: the neighbourhood wraps on both axes
  const Spectrum bi = blur_spectrum(imp);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      const bool near = (x == 0 || x == 1 || x == 7) && (y == 0 || y == 1 || y == 5);
      CHECK(std::abs(bi.at(x, y) - Complex(near ? 1.0 / 9.0 : 0.0)) < 1e-15);
    }
  }
  Spectrum c = imp;
  std::fill(c.coeffs.begin(), c.coeffs.end(), Complex(2.0, -1.0));
  const Spectrum bc = blur_spectrum(c);
  for (const auto& v : bc.coeffs) CHECK(std::abs(v - Complex(2.0, -1.0)) < 1e-15);

  const Spectrum s = fft2(random_map(37, 29, 1.0, 9));
  const Spectrum bs = blur_spectrum(s);
  Complex s0 = 0, s1 = 0;
  for (const auto& v : s.coeffs) s0 += v;
  for (const auto& v : bs.coeffs) s1 += v;
  CHECK(std::abs(s1 - s0) <= 1e-9 * std::abs(s0));
}

TEST_CASE("height-height statistic on a flat surface is flagged") {
  const HeightMap z(64, 64, 0.625, std::vector<double>(64 * 64, 0.0));
  const auto c = height_height_saturation(z, {2.5, 5.0, 10.0});
  CHECK(c.flat);
  CHECK_FALSE(c.saturation_um.has_value());
  for (const auto& p : c.points) CHECK(p.statistic == 0.0);
  CHECK_THROWS_AS(height_height_saturation(z, {5.0}), Error);
}

TEST_CASE("saturation scale tracks the generator roll-off") {
  SynthConfig cfg;
  cfg.strip_width = 1024;
  cfg.strip_height = 1024;
  cfg.rolloff_wavelength_um = 64.0;
  const auto L = log_grid(2.5, 400.0, 1.25);
  for (std::uint64_t seed : {1u, 2u}) {
    cfg.seed = seed;
    const auto pair = generate_pair(cfg);
    const auto curve = height_height_saturation(pair.base, L);
    REQUIRE(curve.saturation_um.has_value());
    MESSAGE("seed " << seed << " lambda " << *curve.saturation_um);
    CHECK(*curve.saturation_um >= 32.0);
    CHECK(*curve.saturation_um <= 128.0);
    CHECK(curve.points.back().statistic == doctest::Approx(1.0));
  }
}

TEST_CASE("a smooth bubble on the replica shifts the saturation scale upward") {
  SynthConfig cfg;
  cfg.strip_width = 1024;
  cfg.strip_height = 1024;
  cfg.rolloff_wavelength_um = 64.0;
  const auto L = log_grid(2.5, 400.0, 1.1);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    cfg.seed = seed;
    cfg.bubble.reset();
    const auto pair = generate_pair(cfg);
    const auto plain = height_height_saturation(make_replica(pair.tip, cfg, 5), L);
    cfg.bubble = BubbleConfig{1, 150.0, 150.0, 40.0};
    const auto bubbled = height_height_saturation(make_replica(pair.tip, cfg, 5), L);
    REQUIRE(plain.saturation_um.has_value());
    REQUIRE(bubbled.saturation_um.has_value());
    MESSAGE("seed " << seed << ": " << *plain.saturation_um << " -> " << *bubbled.saturation_um);
    CHECK(*bubbled.saturation_um > *plain.saturation_um);
  }
}

}  // TEST_SUITE
