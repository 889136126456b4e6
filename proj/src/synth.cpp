#include "fracmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "fracmatch/error.hpp"
#include "fracmatch/parallel.hpp"
#include "fracmatch/spectral.hpp"

namespace fracmatch {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

double signed_index(std::size_t k, std::size_t n) {
  return k <= (n - 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

// Radial frequency (mm⁻¹) of every bin of a w×h grid, in FFT order.
template <class Fn>
void for_each_bin(std::size_t w, std::size_t h, double pitch_um, Fn&& fn) {
  const double rx = 1000.0 / (static_cast<double>(w) * pitch_um);
  const double ry = 1000.0 / (static_cast<double>(h) * pitch_um);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = signed_index(y, h) * ry;
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = signed_index(x, w) * rx;
      fn(y * w + x, std::sqrt(fx * fx + fy * fy));
    }
  }
}

std::vector<Complex> white_spectrum(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> grid(w * h);
  for (auto& v : grid) v = normal(rng);
  return fft2(grid, w, h);
}

std::vector<double> real_part(const std::vector<Complex>& c) {
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

const char* const kRoleFiles[] = {"base", "tip", "replica"};

}  // namespace

void SynthConfig::validate() const {
  if (strip_width < HeightMap::kMinSide || strip_height < HeightMap::kMinSide) {
    throw Error(ErrorCode::invalid_argument, "strip is smaller than the minimum height map size");
  }
  if (!(pitch_um > 0.0) || !std::isfinite(pitch_um)) throw Error(ErrorCode::bad_pitch, "pitch must be positive");
  if (!(hurst > 0.0 && hurst < 1.0)) throw Error(ErrorCode::invalid_argument, "hurst exponent must lie in (0, 1)");
  if (!(split_frequency > 0.0 && split_frequency < nyquist())) {
    throw Error(ErrorCode::invalid_argument, "split frequency must lie between 0 and the Nyquist frequency");
  }
  if (!(rms_height_um > 0.0)) throw Error(ErrorCode::invalid_argument, "rms height must be positive");
  if (!(replica_cutoff_wavelength_um >= 2.0 * pitch_um)) {
    throw Error(ErrorCode::invalid_argument, "replica cutoff lies above the Nyquist frequency");
  }
  if (!(rolloff_wavelength_um > 0.0)) throw Error(ErrorCode::invalid_argument, "roll-off wavelength must be positive");
  if (!(noise_rms_um >= 0.0) || !(artifact_rms_um >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "acquisition noise levels must be non-negative");
  }
  if (!(artifact_edge_fraction > 0.0 && artifact_edge_fraction < 0.5)) {
    throw Error(ErrorCode::invalid_argument, "artifact edge fraction must lie in (0, 0.5)");
  }
  if (!(artifact_low_frequency >= 0.0 && artifact_low_frequency < artifact_high_frequency)) {
    throw Error(ErrorCode::invalid_argument, "artifact band is empty");
  }
  if (bubble) {
    const auto& b = *bubble;
    if (!(b.min_diameter_um >= 70.0 && b.max_diameter_um <= 200.0 && b.min_diameter_um <= b.max_diameter_um)) {
      throw Error(ErrorCode::invalid_argument, "bubble diameters must lie within 70-200 um");
    }
    if (!(b.depth_um >= 0.0)) throw Error(ErrorCode::invalid_argument, "bubble depth must be non-negative");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j = {{"strip_width", c.strip_width},
                      {"strip_height", c.strip_height},
                      {"pitch_um", c.pitch_um},
                      {"hurst", c.hurst},
                      {"split_frequency", c.split_frequency},
                      {"rms_height_um", c.rms_height_um},
                      {"replica_cutoff_wavelength_um", c.replica_cutoff_wavelength_um},
                      {"rolloff_wavelength_um", c.rolloff_wavelength_um},
                      {"seed", c.seed},
                      {"noise_rms_um", c.noise_rms_um},
                      {"artifact_rms_um", c.artifact_rms_um},
                      {"artifact_edge_fraction", c.artifact_edge_fraction},
                      {"artifact_low_frequency", c.artifact_low_frequency},
                      {"artifact_high_frequency", c.artifact_high_frequency},
                      {"instrument_seed", c.instrument_seed}};
  if (c.bubble) {
    j["bubble"] = {{"count", c.bubble->count},
                   {"min_diameter_um", c.bubble->min_diameter_um},
                   {"max_diameter_um", c.bubble->max_diameter_um},
                   {"depth_um", c.bubble->depth_um}};
  } else {
    j["bubble"] = nullptr;
  }
  return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("strip_width", c.strip_width);
    take("strip_height", c.strip_height);
    take("pitch_um", c.pitch_um);
    take("hurst", c.hurst);
    take("split_frequency", c.split_frequency);
    take("rms_height_um", c.rms_height_um);
    take("replica_cutoff_wavelength_um", c.replica_cutoff_wavelength_um);
    take("rolloff_wavelength_um", c.rolloff_wavelength_um);
    take("seed", c.seed);
    take("noise_rms_um", c.noise_rms_um);
    take("artifact_rms_um", c.artifact_rms_um);
    take("artifact_edge_fraction", c.artifact_edge_fraction);
    take("artifact_low_frequency", c.artifact_low_frequency);
    take("artifact_high_frequency", c.artifact_high_frequency);
    take("instrument_seed", c.instrument_seed);
    if (j.contains("bubble") && !j.at("bubble").is_null()) {
      const auto& b = j.at("bubble");
      BubbleConfig bc;
      if (b.contains("count")) bc.count = b.at("count").get<std::size_t>();
      if (b.contains("min_diameter_um")) bc.min_diameter_um = b.at("min_diameter_um").get<double>();
      if (b.contains("max_diameter_um")) bc.max_diameter_um = b.at("max_diameter_um").get<double>();
      if (b.contains("depth_um")) bc.depth_um = b.at("depth_um").get<double>();
      c.bubble = bc;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad synth config: ") + e.what());
  }
  c.validate();
  return c;
}

SurfacePairStrips generate_pair(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t w = cfg.strip_width, h = cfg.strip_height;
  const std::vector<Complex> shared = white_spectrum(w, h, derive(cfg.seed, 1));
  std::vector<Complex> base = white_spectrum(w, h, derive(cfg.seed, 2));
  std::vector<Complex> tip = white_spectrum(w, h, derive(cfg.seed, 3));

  const double f_roll = 1000.0 / cfg.rolloff_wavelength_um;
  const double f_half = 0.5 * cfg.split_frequency;
  const double exponent = -0.5 * (1.0 + cfg.hurst);
  for_each_bin(w, h, cfg.pitch_um, [&](std::size_t i, double f) {
    if (f == 0.0) {
      base[i] = tip[i] = 0.0;
      return;
    }
    const double amp = std::pow(1.0 + (f / f_roll) * (f / f_roll), exponent);
    double c = 1.0, s = 0.0;
    if (f >= cfg.split_frequency) {
      c = 0.0;
      s = 1.0;
    } else if (f > f_half) {
      const double phase = 0.5 * std::numbers::pi * (f - f_half) / f_half;
      c = std::cos(phase);
      s = std::sin(phase);
    }
    base[i] = amp * (c * shared[i] + s * base[i]);
    tip[i] = amp * (c * shared[i] + s * tip[i]);
  });

  std::vector<double> hb = real_part(ifft2(base, w, h));
  std::vector<double> ht = real_part(ifft2(tip, w, h));
  const double scale = cfg.rms_height_um / rms(hb);
  for (auto& v : hb) v *= scale;
  for (auto& v : ht) v *= scale;
  HeightMap b(w, h, cfg.pitch_um, std::move(hb), "base");
  HeightMap t(w, h, cfg.pitch_um, std::move(ht), "tip");
  return {std::move(b), mirror(t, MirrorAxis::horizontal)};
}

HeightMap make_replica(const HeightMap& tip, const SynthConfig& cfg, std::uint64_t bubble_seed) {
  if (!(cfg.replica_cutoff_wavelength_um >= 2.0 * tip.pitch_um())) {
    throw Error(ErrorCode::invalid_argument, "replica cutoff lies above the Nyquist frequency");
  }
  const std::size_t w = tip.width(), h = tip.height();
  std::vector<double> out;
  if (cfg.replica_cutoff_wavelength_um == 2.0 * tip.pitch_um()) {
    out.assign(tip.values().begin(), tip.values().end());
  } else {
    std::vector<Complex> spec = fft2(std::vector<Complex>(tip.values().begin(), tip.values().end()), w, h);
    const double fc = 1000.0 / cfg.replica_cutoff_wavelength_um;
    for_each_bin(w, h, tip.pitch_um(), [&](std::size_t i, double f) {
      if (f <= fc) return;
      const double g = f >= 2.0 * fc ? 0.0 : 0.5 * (1.0 + std::cos(std::numbers::pi * (f - fc) / fc));
      spec[i] *= g;
    });
    out = real_part(ifft2(spec, w, h));
  }

  if (cfg.bubble && cfg.bubble->count > 0) {
    const auto& b = *cfg.bubble;
    std::mt19937_64 rng(bubble_seed);
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w));
    std::uniform_real_distribution<double> uy(0.0, static_cast<double>(h));
    std::uniform_real_distribution<double> ud(b.min_diameter_um, b.max_diameter_um);
    for (std::size_t n = 0; n < b.count; ++n) {
      const double cx = ux(rng), cy = uy(rng);
      const double radius_px = 0.5 * ud(rng) / tip.pitch_um();
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - radius_px));
      const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - radius_px));
      const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + radius_px));
      const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + radius_px));
      for (auto y = std::max<std::ptrdiff_t>(0, y0); y <= std::min<std::ptrdiff_t>(y1, h - 1); ++y) {
        for (auto x = std::max<std::ptrdiff_t>(0, x0); x <= std::min<std::ptrdiff_t>(x1, w - 1); ++x) {
          const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
          const double u = (dx * dx + dy * dy) / (radius_px * radius_px);
          if (u < 1.0) out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] -= b.depth_um * (1.0 - u) * (1.0 - u);
        }
      }
    }
  }
  return mirror(HeightMap(w, h, tip.pitch_um(), std::move(out), "replica"), MirrorAxis::horizontal);
}

std::vector<double> instrument_artifact(std::size_t w, std::size_t h, const SynthConfig& cfg) {
  std::vector<double> out(w * h, 0.0);
  if (cfg.artifact_rms_um == 0.0) return out;
  std::mt19937_64 rng(cfg.instrument_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> grid(w * h);
  for (auto& v : grid) v = normal(rng);
  grid = fft2(grid, w, h);
  for_each_bin(w, h, cfg.pitch_um, [&](std::size_t i, double f) {
    if (f < cfg.artifact_low_frequency || f > cfg.artifact_high_frequency) grid[i] = 0.0;
  });
  const std::vector<double> raw = real_part(ifft2(grid, w, h));
  // Fixed pattern in a frame just inside the border, symmetric under both
  // mirror axes so image parity never matters.
  const double side = static_cast<double>(std::min(w, h));
  const double d0 = cfg.artifact_edge_fraction * side;
  const double s = d0 / 3.0;
  double sq = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t mx = w - 1 - x, my = h - 1 - y;
      const double d = static_cast<double>(std::min({x, mx, y, my}));
      const double env = std::exp(-(d - d0) * (d - d0) / (2.0 * s * s));
      const double v = 0.25 * env * (raw[y * w + x] + raw[y * w + mx] + raw[my * w + x] + raw[my * w + mx]);
      out[y * w + x] = v;
      sq += v * v;
    }
  }
  const double norm = cfg.artifact_rms_um / std::sqrt(sq / static_cast<double>(w * h));
  for (auto& v : out) v *= norm;
  return out;
}

HeightMap acquire(const HeightMap& window, const SynthConfig& cfg, const std::vector<double>& artifact,
                  std::uint64_t noise_seed) {
  if (artifact.size() != window.size()) throw Error(ErrorCode::shape_mismatch, "artifact does not match the image");
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(window.values().begin(), window.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += artifact[i] + cfg.noise_rms_um * normal(rng);
  return window.with_values(std::move(v));
}

// Corpus -------------------------------------------------------------------------

const ImageSequence& RodRecord::sequence(SurfaceRole role) const {
  switch (role) {
    case SurfaceRole::base: return base;
    case SurfaceRole::tip: return tip;
    case SurfaceRole::replica: return replica;
  }
  return base;
}

std::vector<LabeledSequence> Corpus::sequences(SurfaceRole role) const {
  std::vector<LabeledSequence> out;
  out.reserve(rods.size());
  for (const auto& r : rods) out.push_back({r.label, std::make_shared<const ImageSequence>(r.sequence(role))});
  return out;
}

std::vector<SurfacePair> Corpus::pairs(PairKind kind, MirrorAxis axis) const {
  const auto [l, r] = roles_of(kind);
  return enumerate_pairs(sequences(l), sequences(r), l, r, axis);
}

std::uint64_t rod_seed(std::uint64_t corpus_seed, std::size_t rod) { return derive(corpus_seed, 1000 + rod); }

Corpus generate_corpus(const SynthConfig& cfg, std::size_t n_rods, std::size_t k_images) {
  cfg.validate();
  if (n_rods == 0) throw Error(ErrorCode::invalid_argument, "rod count must be >= 1");
  if (k_images == 0) throw Error(ErrorCode::invalid_argument, "image count must be >= 1");
  const std::size_t window = cfg.strip_height;
  const double overlap = 0.5;
  if (required_strip_width(window, k_images, overlap) > cfg.strip_width) {
    throw Error(ErrorCode::strip_too_narrow,
                "strip width " + std::to_string(cfg.strip_width) + " cannot hold " + std::to_string(k_images) +
                    " windows of " + std::to_string(window) + " px at 50% overlap");
  }

  Corpus corpus;
  corpus.config = cfg;
  corpus.window = window;
  corpus.images = k_images;
  corpus.rods.resize(n_rods);
  const std::vector<double> artifact = instrument_artifact(window, window, cfg);

  parallel_for(n_rods, [&](std::size_t i) {
    RodRecord& rod = corpus.rods[i];
    char label[32];
    std::snprintf(label, sizeof label, "rod%02zu", i + 1);
    rod.label = label;
    rod.seed = rod_seed(cfg.seed, i);

    SynthConfig rc = cfg;
    rc.seed = rod.seed;
    const SurfacePairStrips strips = generate_pair(rc);
    const HeightMap replica = make_replica(strips.tip, rc, derive(rod.seed, 7));

    // Tip windows are cut in base orientation so position k lines up across roles.
    const ImageSequence tip_aligned =
        extract_windows(mirror(strips.tip, MirrorAxis::horizontal), window, k_images, overlap, SurfaceRole::tip);
    rod.base = extract_windows(strips.base, window, k_images, overlap, SurfaceRole::base);
    rod.replica = extract_windows(replica, window, k_images, overlap, SurfaceRole::replica);
    rod.tip = tip_aligned;
    for (auto& img : rod.tip.images) img = mirror(img, MirrorAxis::horizontal);

    for (std::size_t role = 0; role < 3; ++role) {
      ImageSequence& seq = role == 0 ? rod.base : role == 1 ? rod.tip : rod.replica;
      for (std::size_t k = 0; k < k_images; ++k) {
        seq.images[k] = acquire(seq.images[k], cfg, artifact, derive(rod.seed, 100 + 10 * k + role))
                            .with_label(rod.label + "/" + kRoleFiles[role] + "_" + std::to_string(k));
      }
    }
  });
  return corpus;
}

}  // namespace fracmatch
