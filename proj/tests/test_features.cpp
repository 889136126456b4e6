#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fracmatch/error.hpp"
#include "fracmatch/features.hpp"
#include "fracmatch/synth.hpp"
#include "test_util.hpp"

using namespace fracmatch;

namespace {

std::shared_ptr<const ImageSequence> random_sequence(std::size_t k, std::uint64_t seed, SurfaceRole role,
                                                     std::size_t side = 32, double pitch = 10.0) {
  auto s = std::make_shared<ImageSequence>();
  s->role = role;
  for (std::size_t i = 0; i < k; ++i) s->images.push_back(testutil::random_map(side, side, pitch, seed * 100 + i));
  return s;
}

std::vector<LabeledSequence> labeled(std::size_t n, std::size_t k, SurfaceRole role, std::uint64_t seed) {
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"rod" + std::to_string(i), random_sequence(k, seed + i, role)});
  }
  return out;
}

// A small two-rod corpus at 512 px windows, shared across cases.
const Corpus& small_corpus() {
  static const Corpus corpus = [] {
    SynthConfig cfg;
    cfg.strip_height = 512;
    cfg.strip_width = required_strip_width(512, 6, 0.5);
    cfg.seed = 77;
    return generate_corpus(cfg, 2, 6);
  }();
  return corpus;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("enumeration counts at N = 10, K = 6") {
  const auto base = labeled(10, 6, SurfaceRole::base, 1);
  const auto tip = labeled(10, 6, SurfaceRole::tip, 50);
  const auto pairs = enumerate_pairs(base, tip, SurfaceRole::base, SurfaceRole::tip);
  std::size_t match = 0, nonmatch = 0, match_images = 0, nonmatch_images = 0;
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    CHECK(ids.insert(p.pair_id).second);
    CHECK(p.kind == PairKind::base_tip);
    CHECK(p.mirror_right);
    if (p.truth == Truth::match) {
      ++match;
      match_images += p.left->count();
      // a match always joins the same rod
      CHECK(p.pair_id.find("rod") != std::string::npos);
    } else {
      ++nonmatch;
      nonmatch_images += p.left->count();
    }
  }
  CHECK(match == 10);
  CHECK(nonmatch == 90);
  CHECK(match_images == 60);
  CHECK(nonmatch_images == 540);
  for (const auto& p : pairs) {
    const auto sep = p.pair_id.find('~');
    const auto colon = p.pair_id.find(':');
    const bool same_rod = p.pair_id.substr(colon + 1, sep - colon - 1) == p.pair_id.substr(sep + 1);
    CHECK(same_rod == (p.truth == Truth::match));
  }
}

TEST_CASE("enumeration: smallest case and errors") {
  const auto a = labeled(2, 3, SurfaceRole::replica, 1);
  const auto b = labeled(2, 3, SurfaceRole::base, 9);
  const auto pairs = enumerate_pairs(a, b, SurfaceRole::replica, SurfaceRole::base);
  CHECK(pairs.size() == 4);
  CHECK(std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.truth == Truth::match; }) == 2);
  // replica and base share handedness
  CHECK_FALSE(pairs.front().mirror_right);
  CHECK(enumerate_pairs(a, labeled(2, 3, SurfaceRole::tip, 9), SurfaceRole::replica, SurfaceRole::tip)
            .front()
            .mirror_right);

  auto renamed = b;
  renamed[1].label = "other";
  CHECK_THROWS_AS(enumerate_pairs(a, renamed, SurfaceRole::replica, SurfaceRole::base), Error);
  CHECK_THROWS_AS(enumerate_pairs({a[0]}, {b[0]}, SurfaceRole::replica, SurfaceRole::base), Error);
}

TEST_CASE("identical sequences give the clamped maximum everywhere") {
  SurfacePair p;
  p.pair_id = "self";
  p.left = random_sequence(3, 4, SurfaceRole::base, 64);
  p.right = p.left;
  PreprocessOptions opts;
  opts.mirror_axis = MirrorAxis::off;
  const auto f = build_feature(p, BandSet::classification(), opts, false);
  CHECK(f.band_count == 2);
  CHECK(f.image_count == 3);
  for (double v : f.values) CHECK(v == doctest::Approx(8.40562).epsilon(1e-5));
}

TEST_CASE("pair validation rejects mismatched sequences") {
  SurfacePair p;
  p.pair_id = "bad";
  p.left = random_sequence(3, 1, SurfaceRole::base);
  p.right = random_sequence(2, 2, SurfaceRole::tip);
  CHECK_THROWS_AS(p.validate(), Error);
  p.right = random_sequence(3, 2, SurfaceRole::tip, 40);
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("synthetic match and non-match pairs separate in the classification bands") {
  const Corpus& c = small_corpus();
  const auto pairs = c.pairs(PairKind::base_tip);
  REQUIRE(pairs.size() == 4);
  const auto features = build_features(pairs, BandSet::classification(), PreprocessOptions{}, false);
  for (const auto& f : features) {
    for (std::size_t b = 0; b < 2; ++b) {
      MESSAGE(f.pair_id << " band " << b << " mean r " << f.mean_raw(b));
      if (f.truth == Truth::match) {
        CHECK(f.mean_raw(b) > 0.8);
      } else {
        CHECK(std::fabs(f.mean_raw(b)) < 0.3);
      }
    }
  }
}

TEST_CASE("features compose the individual preprocessing steps") {
  const Corpus& c = small_corpus();
  const auto pairs = c.pairs(PairKind::base_tip);
  const SurfacePair& p = pairs.front();
  const PreprocessOptions opts;
  const auto f = build_feature(p, BandSet::classification(), opts, false);
  auto prep = [&](const HeightMap& m, bool flip) {
    HeightMap x = flip ? mirror(m, MirrorAxis::horizontal) : m;
    x = remove_spikes(remove_tilt(x), 7, 1.0).map;
    return fft2(taper_window(x, 0.1));
  };
  for (std::size_t k = 0; k < f.image_count; ++k) {
    const Spectrum a = prep(p.left->images[k], false);
    const Spectrum b = prep(p.right->images[k], true);
    for (std::size_t band = 0; band < 2; ++band) {
      const double r = band_correlation(a, b, BandSet::classification().band(band)).r;
      CHECK(f.raw_at(band, k) == doctest::Approx(r).epsilon(1e-12));
      CHECK(f.at(band, k) == doctest::Approx(fisher_z(r)).epsilon(1e-12));
    }
  }
}

TEST_CASE("blur changes values only, and scaling changes nothing") {
  SurfacePair p;
  p.pair_id = "x";
  p.truth = Truth::non_match;
  p.left = random_sequence(2, 3, SurfaceRole::base, 64);
  p.right = random_sequence(2, 5, SurfaceRole::tip, 64);
  p.mirror_right = true;
  const BandSet bands({5, 10, 20, 40});
  const auto off = build_feature(p, bands, {}, false);
  const auto on = build_feature(p, bands, {}, true);
  CHECK(on.band_count == off.band_count);
  CHECK(on.image_count == off.image_count);
  CHECK(on.pair_id == off.pair_id);
  CHECK(on.truth == off.truth);
  CHECK(on.values != off.values);

  auto scaled = [](const ImageSequence& s, double k) {
    auto out = std::make_shared<ImageSequence>(s);
    for (auto& m : out->images) {
      std::vector<double> v(m.values().begin(), m.values().end());
      for (auto& x : v) x *= k;
      m = m.with_values(std::move(v));
    }
    return out;
  };
  SurfacePair q = p;
  q.left = scaled(*p.left, 12.5);
  q.right = scaled(*p.right, 12.5);
  const auto sc = build_feature(q, bands, {}, false);
  for (std::size_t i = 0; i < sc.raw.size(); ++i) CHECK(std::fabs(sc.raw[i] - off.raw[i]) < 1e-9);
}

TEST_CASE("feature CSV round trip") {
  testutil::TempDir dir("features_csv");
  const auto base = labeled(2, 3, SurfaceRole::base, 1);
  const auto tip = labeled(2, 3, SurfaceRole::tip, 7);
  const auto pairs = enumerate_pairs(base, tip, SurfaceRole::base, SurfaceRole::tip);
  const BandSet bands({10, 20, 40});
  const auto features = build_features(pairs, bands, {}, false);
  write_features_csv(features, bands, dir.path / "f.csv");
  const auto back = read_features_csv(dir.path / "f.csv", bands);
  REQUIRE(back.size() == features.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].pair_id == features[i].pair_id);
    CHECK(back[i].truth == features[i].truth);
    CHECK(back[i].band_count == 2);
    CHECK(back[i].image_count == 3);
    for (std::size_t j = 0; j < back[i].values.size(); ++j) {
      CHECK(back[i].values[j] == doctest::Approx(features[i].values[j]).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(read_features_csv(dir.path / "f.csv", BandSet::sweep()), Error);
}

TEST_CASE("preprocess fingerprint") {
  const PreprocessOptions a;
  PreprocessOptions b;
  CHECK(preprocess_fingerprint(a, BandSet::classification(), false) ==
        preprocess_fingerprint(b, BandSet::classification(), false));
  CHECK(preprocess_fingerprint(a, BandSet::classification(), false) !=
        preprocess_fingerprint(a, BandSet::classification(), true));
  CHECK(preprocess_fingerprint(a, BandSet::classification(), false) !=
        preprocess_fingerprint(a, BandSet::sweep(), false));
  b.mirror_axis = MirrorAxis::vertical;
  CHECK(preprocess_fingerprint(a, BandSet::classification(), false) !=
        preprocess_fingerprint(b, BandSet::classification(), false));
  CHECK(preprocess_fingerprint(a, BandSet::classification(), false).size() == 16);
}

}  // TEST_SUITE
