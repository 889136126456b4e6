#include <doctest.h>

#include <chrono>
#include <cmath>

#include "fracmatch/error.hpp"
#include "fracmatch/features.hpp"
#include "fracmatch/synth.hpp"
#include "test_util.hpp"

using namespace fracmatch;

namespace {

SynthConfig square(std::size_t side, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.strip_width = side;
  cfg.strip_height = side;
  cfg.seed = seed;
  return cfg;
}

Spectrum prepared(const HeightMap& m) {
  return fft2(taper_window(remove_spikes(remove_tilt(m)).map));
}

double band_r(const HeightMap& a, const HeightMap& b, Band band) {
  return band_correlation(prepared(a), prepared(b), band).r;
}

double max_abs_diff(const HeightMap& a, const HeightMap& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a.values()[i] - b.values()[i]));
  return d;
}

bool identical(const HeightMap& a, const HeightMap& b) {
  return a.width() == b.width() && a.height() == b.height() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.hurst = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.split_frequency = c.nyquist();
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.bubble = BubbleConfig{1, 50.0, 150.0, 10.0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.replica_cutoff_wavelength_um = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.pitch_um = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("config JSON round trip") {
  SynthConfig c;
  c.seed = 99;
  c.hurst = 0.6;
  c.bubble = BubbleConfig{2, 80.0, 190.0, 25.0};
  const SynthConfig back = synth_config_from_json(to_json(c));
  CHECK(back.seed == 99);
  CHECK(back.hurst == 0.6);
  REQUIRE(back.bubble.has_value());
  CHECK(back.bubble->count == 2);
  CHECK(back.bubble->max_diameter_um == 190.0);
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("base and tip share low bands and decorrelate above the split") {
  const auto pair = generate_pair(square(512, 1));
  const HeightMap tip = mirror(pair.tip);
  CHECK(max_abs_diff(pair.base, tip) > 1.0);
  CHECK(band_r(pair.base, tip, {5, 10}) > 0.9);
  CHECK(band_r(pair.base, tip, {10, 20}) > 0.9);
  CHECK(std::fabs(band_r(pair.base, tip, {60, 120})) < 0.3);
  CHECK(std::fabs(band_r(pair.base, tip, {120, 300})) < 0.3);

  const auto other = generate_pair(square(512, 2));
  CHECK(std::fabs(band_r(pair.base, mirror(other.tip), {5, 10})) < 0.3);
  CHECK(std::fabs(band_r(pair.base, other.base, {10, 20})) < 0.3);

  double s = 0.0;
  for (double v : pair.base.values()) s += v * v;
  CHECK(std::sqrt(s / static_cast<double>(pair.base.size())) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("generated surfaces are self-affine over a decade of scales") {
  for (double hurst : {0.5, 0.8}) {
    SynthConfig cfg = square(1024, 3);
    cfg.hurst = hurst;
    // push the roll-off well past the decade being measured
    cfg.rolloff_wavelength_um = 2000.0;
    const auto pair = generate_pair(cfg);
    const auto curve = height_height_saturation(pair.base, {2.5, 25.0, 320.0});
    const double slope = std::log(curve.points[1].statistic / curve.points[0].statistic) / std::log(10.0);
    MESSAGE("H = " << hurst << " slope " << slope);
    CHECK(std::fabs(slope - hurst) < 0.15);
  }
}

TEST_CASE("replica keeps content above the cutoff wavelength and loses it below") {
  const SynthConfig cfg = square(512, 4);
  const auto pair = generate_pair(cfg);
  const HeightMap replica = make_replica(pair.tip, cfg);
  // the replica has base parity
  const HeightMap tip = mirror(pair.tip);
  CHECK(band_r(replica, tip, {5, 10}) > 0.9);
  CHECK(band_r(replica, tip, {20, 33}) > 0.9);
  CHECK(band_r(replica, pair.base, {10, 20}) > 0.9);
  CHECK(std::fabs(band_r(replica, tip, {110, 200})) < 0.3);
}

TEST_CASE("replica pass-through at the Nyquist cutoff") {
  SynthConfig cfg = square(256, 5);
  cfg.replica_cutoff_wavelength_um = 2.0 * cfg.pitch_um;
  const auto pair = generate_pair(cfg);
  const HeightMap replica = make_replica(pair.tip, cfg);
  CHECK(max_abs_diff(replica, mirror(pair.tip)) < 1e-6);
  cfg.replica_cutoff_wavelength_um = 1.0;
  CHECK_THROWS_AS(make_replica(pair.tip, cfg), Error);
}

TEST_CASE("replica operator is linear and deterministic") {
  const SynthConfig cfg = square(128, 6);
  const HeightMap a = testutil::random_map(128, 128, cfg.pitch_um, 1);
  const HeightMap b = testutil::random_map(128, 128, cfg.pitch_um, 2);
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = 2.0 * a.values()[i] - b.values()[i];
  const HeightMap ra = make_replica(a, cfg), rb = make_replica(b, cfg), rs = make_replica(a.with_values(sum), cfg);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(rs.values()[i] == doctest::Approx(2.0 * ra.values()[i] - rb.values()[i]).epsilon(1e-9).scale(1.0));
  }
  CHECK(identical(make_replica(a, cfg), ra));

  SynthConfig bubbly = cfg;
  bubbly.bubble = BubbleConfig{1, 70.0, 70.0, 20.0};
  const HeightMap b1 = make_replica(a, bubbly, 3), b2 = make_replica(a, bubbly, 3);
  CHECK(identical(b1, b2));
  // a bubble is a smooth depression
  double deepest = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) deepest = std::min(deepest, b1.values()[i] - ra.values()[i]);
  CHECK(deepest < -15.0);
  CHECK(deepest >= -20.0);
}

TEST_CASE("instrument artifact is fixed, mirror symmetric and scaled") {
  const SynthConfig cfg;
  const auto art = instrument_artifact(64, 48, cfg);
  CHECK(art == instrument_artifact(64, 48, cfg));
  double sq = 0.0;
  for (std::size_t y = 0; y < 48; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      const double v = art[y * 64 + x];
      sq += v * v;
      CHECK(v == doctest::Approx(art[y * 64 + 63 - x]).epsilon(1e-12).scale(1.0));
      CHECK(v == doctest::Approx(art[(47 - y) * 64 + x]).epsilon(1e-12).scale(1.0));
    }
  }
  CHECK(std::sqrt(sq / (64.0 * 48.0)) == doctest::Approx(cfg.artifact_rms_um).epsilon(1e-12));
  SynthConfig quiet;
  quiet.artifact_rms_um = 0.0;
  for (double v : instrument_artifact(64, 48, quiet)) CHECK(v == 0.0);
}

TEST_CASE("corpus layout and enumeration counts") {
  SynthConfig cfg;
  cfg.strip_height = 64;
  cfg.strip_width = required_strip_width(64, 6, 0.5);
  cfg.pitch_um = 2.5;
  cfg.seed = 10;
  const Corpus c = generate_corpus(cfg, 10, 6);
  CHECK(c.rods.size() == 10);
  CHECK(c.window == 64);
  for (const auto& rod : c.rods) {
    for (SurfaceRole role : {SurfaceRole::base, SurfaceRole::tip, SurfaceRole::replica}) {
      CHECK(rod.sequence(role).count() == 6);
      CHECK(rod.sequence(role).role == role);
    }
  }
  for (PairKind kind : {PairKind::base_tip, PairKind::replica_base, PairKind::replica_tip}) {
    const auto pairs = c.pairs(kind);
    std::size_t match = 0, nonmatch = 0, mi = 0, ni = 0;
    for (const auto& p : pairs) {
      (p.truth == Truth::match ? match : nonmatch) += 1;
      (p.truth == Truth::match ? mi : ni) += p.left->count();
    }
    CHECK(match == 10);
    CHECK(nonmatch == 90);
    CHECK(mi == 60);
    CHECK(ni == 540);
  }
  cfg.strip_width -= 1;
  CHECK_THROWS_AS(generate_corpus(cfg, 2, 6), Error);
}

TEST_CASE("corpus determinism, seeds and smoke timing") {
  SynthConfig cfg;
  cfg.strip_height = 256;
  cfg.strip_width = required_strip_width(256, 6, 0.5);
  cfg.seed = 8;
  const auto t0 = std::chrono::steady_clock::now();
  const Corpus a = generate_corpus(cfg, 2, 6);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("n=2 corpus at 256 px: " << seconds << " s");
  CHECK(seconds < 5.0);
  const Corpus b = generate_corpus(cfg, 2, 6);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(a.rods[r].seed == rod_seed(8, r));
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(identical(a.rods[r].base.images[k], b.rods[r].base.images[k]));
      CHECK(identical(a.rods[r].replica.images[k], b.rods[r].replica.images[k]));
    }
  }
  cfg.seed = 9;
  const Corpus c = generate_corpus(cfg, 2, 6);
  CHECK_FALSE(identical(a.rods[0].base.images[0], c.rods[0].base.images[0]));
  // rods in one corpus are independent draws
  CHECK(std::fabs(band_r(a.rods[0].base.images[0], a.rods[1].base.images[0], {10, 50})) < 0.3);
}

TEST_CASE("corpus write and read") {
  testutil::TempDir dir("corpus");
  SynthConfig cfg;
  cfg.strip_height = 32;
  cfg.strip_width = required_strip_width(32, 3, 0.5);
  cfg.pitch_um = 5.0;
  cfg.replica_cutoff_wavelength_um = 20.0;
  cfg.split_frequency = 40.0;
  cfg.seed = 12;
  const Corpus c = generate_corpus(cfg, 2, 3);
  write_corpus(c, dir.path);
  CHECK(std::filesystem::exists(dir.path / "manifest.json"));
  const Corpus back = read_corpus(dir.path);
  CHECK(back.rods.size() == 2);
  CHECK(back.images == 3);
  CHECK(back.window == 32);
  CHECK(back.config.seed == 12);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(back.rods[r].label == c.rods[r].label);
    for (std::size_t k = 0; k < 3; ++k) {
      // images are stored as f32
      CHECK(max_abs_diff(back.rods[r].tip.images[k], c.rods[r].tip.images[k]) < 1e-4);
    }
  }
  std::filesystem::remove(dir.path / "rod01" / "tip_2.hmap");
  CHECK_THROWS_AS(read_corpus(dir.path), Error);
}

}  // TEST_SUITE
