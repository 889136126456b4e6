#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fracmatch/heightmap.hpp"
#include "fracmatch/spectral.hpp"

namespace fracmatch {

enum class PairKind { base_tip, replica_base, replica_tip };
enum class Truth { match, non_match, unknown };

const char* to_string(PairKind kind) noexcept;
PairKind parse_pair_kind(const std::string& s);
const char* to_string(Truth truth) noexcept;
Truth parse_truth(const std::string& s);

/// Roles (left, right) compared by a pair kind.
std::pair<SurfaceRole, SurfaceRole> roles_of(PairKind kind) noexcept;

struct PreprocessOptions {
  bool remove_tilt = true;
  bool remove_spikes = true;
  int spike_radius = 7;
  double spike_k = 1.0;
  double taper_fraction = 0.1;
  MirrorAxis mirror_axis = MirrorAxis::horizontal;

  bool operator==(const PreprocessOptions&) const = default;
};

/// Stable hex digest of the options, band set and blur flag. Independent of
/// field order.
std::string preprocess_fingerprint(const PreprocessOptions& opts, const BandSet& bands, bool blur);

struct SurfacePair {
  std::string pair_id;
  std::shared_ptr<const ImageSequence> left;
  std::shared_ptr<const ImageSequence> right;
  bool mirror_right = false;
  PairKind kind = PairKind::base_tip;
  Truth truth = Truth::unknown;

  /// Throws unless both sequences are valid, equally long and share pitch
  /// and image size.
  void validate() const;
};

/// B×K Fisher-Z band correlations of one surface pair: row b is band b,
/// column k is image position k.
struct FeatureMatrix {
  std::size_t band_count = 0;
  std::size_t image_count = 0;
  std::vector<double> values;  // row-major, Fisher-Z scale
  std::vector<double> raw;     // row-major, raw correlations
  BandSet bands;
  std::string pair_id;
  Truth truth = Truth::unknown;

  double at(std::size_t band, std::size_t image) const { return values[band * image_count + image]; }
  double raw_at(std::size_t band, std::size_t image) const { return raw[band * image_count + image]; }
  /// Mean raw correlation of one band over the image positions.
  double mean_raw(std::size_t band) const;
};

// Image preparation ---------------------------------------------------------

/// Mirror (optional), tilt removal, spike removal and taper, then FFT.
Spectrum prepare_spectrum(const HeightMap& image, bool mirror_image, const PreprocessOptions& opts);

/// Banded coefficients of every image of a sequence, ready for correlation.
struct PreparedSequence {
  std::vector<BandedCoefficients> images;
};

PreparedSequence prepare_sequence(const ImageSequence& seq, bool mirror_images,
                                  const PreprocessOptions& opts, const BandLayout& layout, bool blur);

/// Layout for the sequence's image geometry.
BandLayout layout_for(const ImageSequence& seq, const BandSet& bands);

FeatureMatrix correlate_sequences(const PreparedSequence& left, const PreparedSequence& right,
                                  const BandLayout& layout, std::string pair_id, Truth truth);

FeatureMatrix build_feature(const SurfacePair& pair, const BandSet& bands,
                            const PreprocessOptions& opts, bool blur);

// Pair enumeration ----------------------------------------------------------

struct LabeledSequence {
  std::string label;  // physical rod identity
  std::shared_ptr<const ImageSequence> sequence;
};

/// One match pair per label and every ordered cross pair (i != j) as a
/// non-match. Both sets must carry the same labels.
std::vector<SurfacePair> enumerate_pairs(const std::vector<LabeledSequence>& left,
                                         const std::vector<LabeledSequence>& right,
                                         SurfaceRole left_role, SurfaceRole right_role,
                                         MirrorAxis mirror_axis = MirrorAxis::horizontal);

/// Features for many pairs, preparing each distinct sequence once.
std::vector<FeatureMatrix> build_features(const std::vector<SurfacePair>& pairs, const BandSet& bands,
                                          const PreprocessOptions& opts, bool blur);

// CSV ---------------------------------------------------------------------------

/// Header `pair_id,truth,z_b0_k0,z_b1_k0,...`; values column-major.
void write_features_csv(const std::vector<FeatureMatrix>& features, const BandSet& bands,
                        const std::filesystem::path& path);
std::vector<FeatureMatrix> read_features_csv(const std::filesystem::path& path, const BandSet& bands);

}  // namespace fracmatch
