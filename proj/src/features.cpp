#include "fracmatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fracmatch/error.hpp"
#include "fracmatch/parallel.hpp"

namespace fracmatch {

const char* to_string(PairKind kind) noexcept {
  switch (kind) {
    case PairKind::base_tip: return "base-tip";
    case PairKind::replica_base: return "replica-base";
    case PairKind::replica_tip: return "replica-tip";
  }
  return "unknown";
}

PairKind parse_pair_kind(const std::string& s) {
  if (s == "base-tip") return PairKind::base_tip;
  if (s == "replica-base") return PairKind::replica_base;
  if (s == "replica-tip") return PairKind::replica_tip;
  throw Error(ErrorCode::invalid_argument, "unknown pair kind: " + s);
}

const char* to_string(Truth truth) noexcept {
  switch (truth) {
    case Truth::match: return "match";
    case Truth::non_match: return "non-match";
    case Truth::unknown: return "unknown";
  }
  return "unknown";
}

Truth parse_truth(const std::string& s) {
  if (s == "match") return Truth::match;
  if (s == "non-match") return Truth::non_match;
  if (s == "unknown") return Truth::unknown;
  throw Error(ErrorCode::invalid_argument, "unknown truth label: " + s);
}

std::pair<SurfaceRole, SurfaceRole> roles_of(PairKind kind) noexcept {
  switch (kind) {
    case PairKind::base_tip: return {SurfaceRole::base, SurfaceRole::tip};
    case PairKind::replica_base: return {SurfaceRole::replica, SurfaceRole::base};
    case PairKind::replica_tip: return {SurfaceRole::replica, SurfaceRole::tip};
  }
  return {SurfaceRole::base, SurfaceRole::tip};
}

std::string preprocess_fingerprint(const PreprocessOptions& opts, const BandSet& bands, bool blur) {
  const nlohmann::json j = {
      {"remove_tilt", opts.remove_tilt},     {"remove_spikes", opts.remove_spikes},
      {"spike_radius", opts.spike_radius},   {"spike_k", opts.spike_k},
      {"taper_fraction", opts.taper_fraction}, {"mirror_axis", to_string(opts.mirror_axis)},
      {"bands", bands.edges()},              {"blur", blur},
  };
  // nlohmann::json objects keep keys sorted, so the dump is canonical.
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void SurfacePair::validate() const {
  if (!left || !right) throw Error(ErrorCode::invalid_argument, pair_id + ": missing sequence");
  left->validate();
  right->validate();
  if (left->count() != right->count()) {
    throw Error(ErrorCode::shape_mismatch, pair_id + ": sequences differ in image count");
  }
  const HeightMap& a = left->images.front();
  const HeightMap& b = right->images.front();
  if (a.width() != b.width() || a.height() != b.height() || a.pitch_um() != b.pitch_um()) {
    throw Error(ErrorCode::shape_mismatch, pair_id + ": sequences differ in image size or pitch");
  }
}

double FeatureMatrix::mean_raw(std::size_t band) const {
  double s = 0.0;
  for (std::size_t k = 0; k < image_count; ++k) s += raw_at(band, k);
  return s / static_cast<double>(image_count);
}

Spectrum prepare_spectrum(const HeightMap& image, bool mirror_image, const PreprocessOptions& opts) {
  HeightMap m = mirror_image ? mirror(image, opts.mirror_axis) : image;
  if (opts.remove_tilt) m = remove_tilt(m);
  if (opts.remove_spikes) m = remove_spikes(m, opts.spike_radius, opts.spike_k).map;
  m = taper_window(m, opts.taper_fraction);
  return fft2(m);
}

BandLayout layout_for(const ImageSequence& seq, const BandSet& bands) {
  seq.validate();
  const HeightMap& m = seq.images.front();
  return BandLayout(m.width(), m.height(), m.freq_resolution_x(), m.freq_resolution_y(), bands);
}

PreparedSequence prepare_sequence(const ImageSequence& seq, bool mirror_images,
                                  const PreprocessOptions& opts, const BandLayout& layout, bool blur) {
  PreparedSequence out;
  out.images.reserve(seq.count());
  for (const HeightMap& img : seq.images) {
    Spectrum s = prepare_spectrum(img, mirror_images, opts);
    if (blur) s = blur_spectrum(s);
    out.images.push_back(extract_bands(s, layout));
  }
  return out;
}

FeatureMatrix correlate_sequences(const PreparedSequence& left, const PreparedSequence& right,
                                  const BandLayout& layout, std::string pair_id, Truth truth) {
  if (left.images.size() != right.images.size() || left.images.empty()) {
    throw Error(ErrorCode::shape_mismatch, pair_id + ": sequences differ in image count");
  }
  FeatureMatrix f;
  f.band_count = layout.band_count();
  f.image_count = left.images.size();
  f.bands = layout.bands();
  f.pair_id = std::move(pair_id);
  f.truth = truth;
  f.values.resize(f.band_count * f.image_count);
  f.raw.resize(f.values.size());
  for (std::size_t k = 0; k < f.image_count; ++k) {
    for (std::size_t b = 0; b < f.band_count; ++b) {
      BandCorrelation c;
      try {
        c = band_correlation(left.images[k], right.images[k], layout, b);
      } catch (const Error& e) {
        throw Error(e.code(), f.pair_id + " image " + std::to_string(k) + ": " + e.what());
      }
      f.raw[b * f.image_count + k] = c.r;
      f.values[b * f.image_count + k] = fisher_z(c.r);
    }
  }
  return f;
}

FeatureMatrix build_feature(const SurfacePair& pair, const BandSet& bands,
                            const PreprocessOptions& opts, bool blur) {
  pair.validate();
  const BandLayout layout = layout_for(*pair.left, bands);
  const auto left = prepare_sequence(*pair.left, false, opts, layout, blur);
  const auto right = prepare_sequence(*pair.right, pair.mirror_right, opts, layout, blur);
  return correlate_sequences(left, right, layout, pair.pair_id, pair.truth);
}

namespace {

// Base and replica share one handedness; the tip is its mirror image.
bool mirrored_parity(SurfaceRole role) { return role == SurfaceRole::tip; }

}  // namespace

std::vector<SurfacePair> enumerate_pairs(const std::vector<LabeledSequence>& left,
                                         const std::vector<LabeledSequence>& right,
                                         SurfaceRole left_role, SurfaceRole right_role,
                                         MirrorAxis mirror_axis) {
  if (left.size() < 2) throw Error(ErrorCode::invalid_argument, "need at least two surfaces per set");
  if (left.size() != right.size()) {
    throw Error(ErrorCode::invalid_argument, "surface sets differ in size");
  }
  std::map<std::string, std::size_t> right_index;
  for (std::size_t j = 0; j < right.size(); ++j) {
    if (!right_index.emplace(right[j].label, j).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate surface label " + right[j].label);
    }
  }
  for (const auto& l : left) {
    if (!right_index.contains(l.label)) {
      throw Error(ErrorCode::invalid_argument, "label " + l.label + " has no counterpart");
    }
  }

  PairKind kind;
  if (left_role == SurfaceRole::base && right_role == SurfaceRole::tip) {
    kind = PairKind::base_tip;
  } else if (left_role == SurfaceRole::replica && right_role == SurfaceRole::base) {
    kind = PairKind::replica_base;
  } else if (left_role == SurfaceRole::replica && right_role == SurfaceRole::tip) {
    kind = PairKind::replica_tip;
  } else {
    throw Error(ErrorCode::invalid_argument, std::string("unsupported role pairing ") +
                                                 to_string(left_role) + "/" + to_string(right_role));
  }
  const bool mirror_right =
      mirror_axis != MirrorAxis::off && mirrored_parity(left_role) != mirrored_parity(right_role);

  std::vector<SurfacePair> pairs;
  pairs.reserve(left.size() * left.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    for (std::size_t jj = 0; jj < left.size(); ++jj) {
      const auto& r = right[right_index.at(left[jj].label)];
      SurfacePair p;
      p.left = left[i].sequence;
      p.right = r.sequence;
      p.kind = kind;
      p.mirror_right = mirror_right;
      p.truth = i == jj ? Truth::match : Truth::non_match;
      p.pair_id = std::string(to_string(kind)) + ":" + left[i].label + "~" + r.label;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<FeatureMatrix> build_features(const std::vector<SurfacePair>& pairs, const BandSet& bands,
                                          const PreprocessOptions& opts, bool blur) {
  if (pairs.empty()) return {};
  for (const auto& p : pairs) p.validate();

  // Distinct (sequence, mirror) combinations, prepared once each.
  std::map<std::pair<const ImageSequence*, bool>, std::size_t> slot;
  std::vector<std::pair<const ImageSequence*, bool>> jobs;
  auto intern = [&](const ImageSequence* s, bool m) {
    auto [it, inserted] = slot.emplace(std::make_pair(s, m), jobs.size());
    if (inserted) jobs.emplace_back(s, m);
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> refs;
  refs.reserve(pairs.size());
  for (const auto& p : pairs) {
    refs.emplace_back(intern(p.left.get(), false), intern(p.right.get(), p.mirror_right));
  }

  const BandLayout layout = layout_for(*pairs.front().left, bands);
  std::vector<PreparedSequence> prepared(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    prepared[i] = prepare_sequence(*jobs[i].first, jobs[i].second, opts, layout, blur);
  });

  std::vector<FeatureMatrix> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    out[i] = correlate_sequences(prepared[refs[i].first], prepared[refs[i].second], layout,
                                 pairs[i].pair_id, pairs[i].truth);
  });
  return out;
}

void write_features_csv(const std::vector<FeatureMatrix>& features, const BandSet& bands,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  const std::size_t B = bands.count();
  const std::size_t K = features.empty() ? 0 : features.front().image_count;
  out << "pair_id,truth";
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t b = 0; b < B; ++b) out << ",z_b" << b << "_k" << k;
  }
  out << '\n' << std::setprecision(17);
  for (const auto& f : features) {
    if (f.band_count != B || f.image_count != K) {
      throw Error(ErrorCode::shape_mismatch, f.pair_id + ": feature shape differs within batch");
    }
    out << f.pair_id << ',' << to_string(f.truth);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t b = 0; b < B; ++b) out << ',' << f.at(b, k);
    }
    out << '\n';
  }
}

std::vector<FeatureMatrix> read_features_csv(const std::filesystem::path& path, const BandSet& bands) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse_error, path.string() + ": empty file");
  const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  const std::size_t B = bands.count();
  if (columns < 3 || (columns - 2) % B != 0) {
    throw Error(ErrorCode::parse_error, path.string() + ": header does not match the band set");
  }
  const std::size_t K = (columns - 2) / B;
  std::vector<FeatureMatrix> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw Error(ErrorCode::non_rectangular, path.string() + ": row has " +
                                                  std::to_string(cells.size()) + " cells");
    }
    FeatureMatrix f;
    f.band_count = B;
    f.image_count = K;
    f.bands = bands;
    f.pair_id = cells[0];
    f.truth = parse_truth(cells[1]);
    f.values.resize(B * K);
    f.raw.resize(B * K);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t b = 0; b < B; ++b) {
        double v = 0.0;
        try {
          v = std::stod(cells[2 + k * B + b]);
        } catch (const std::exception&) {
          throw Error(ErrorCode::parse_error, path.string() + ": bad value in " + f.pair_id);
        }
        if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, path.string() + ": non-finite value");
        f.values[b * K + k] = v;
        f.raw[b * K + k] = std::tanh(v);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace fracmatch
