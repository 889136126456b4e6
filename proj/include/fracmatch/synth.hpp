#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fracmatch/features.hpp"
#include "fracmatch/heightmap.hpp"

namespace fracmatch {

struct BubbleConfig {
  std::size_t count = 1;
  double min_diameter_um = 70.0;
  double max_diameter_um = 200.0;
  double depth_um = 40.0;
};

struct SynthConfig {
  std::size_t strip_width = 3584;
  std::size_t strip_height = 1024;
  double pitch_um = 0.625;
  double hurst = 0.8;
  /// Radial frequency (mm⁻¹) above which the halves of one rod are independent.
  double split_frequency = 50.0;
  double rms_height_um = 10.0;
  double replica_cutoff_wavelength_um = 20.0;
  /// Wavelength below which the spectrum follows the power law; longer
  /// wavelengths flatten out.
  double rolloff_wavelength_um = 200.0;
  std::optional<BubbleConfig> bubble;
  std::uint64_t seed = 0;

  // Acquisition model, applied to every corpus image.
  double noise_rms_um = 7.0;
  double artifact_rms_um = 2.0;
  /// Distance of the fixed instrument artifact's frame from the image
  /// border, as a fraction of the image side.
  double artifact_edge_fraction = 0.11;
  /// Radial frequency band (mm⁻¹) of the artifact pattern.
  double artifact_low_frequency = 40.0;
  double artifact_high_frequency = 250.0;
  std::uint64_t instrument_seed = 0x5eedf00dULL;

  void validate() const;
  double nyquist() const noexcept { return 1000.0 / (2.0 * pitch_um); }
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SurfacePairStrips {
  HeightMap base;
  HeightMap tip;  // mirrored relative to base
};

/// Base and tip strips of one rod: shared Fourier content below half the
/// split frequency, independent content above it, cosine cross-fade between.
SurfacePairStrips generate_pair(const SynthConfig& cfg);

/// Low-passed, optionally bubbled copy of the tip in base orientation.
/// `bubble_seed` drives bubble placement only.
HeightMap make_replica(const HeightMap& tip, const SynthConfig& cfg, std::uint64_t bubble_seed = 0);

/// Mirror-symmetric fixed pattern near the image border, added to every
/// acquired image.
std::vector<double> instrument_artifact(std::size_t width, std::size_t height, const SynthConfig& cfg);

/// Adds the instrument artifact and independent white noise.
HeightMap acquire(const HeightMap& window, const SynthConfig& cfg, const std::vector<double>& artifact,
                  std::uint64_t noise_seed);

struct RodRecord {
  std::string label;
  std::uint64_t seed = 0;
  ImageSequence base;
  ImageSequence tip;
  ImageSequence replica;

  const ImageSequence& sequence(SurfaceRole role) const;
};

struct Corpus {
  SynthConfig config;
  std::size_t window = 0;
  std::size_t images = 0;
  std::vector<RodRecord> rods;

  std::vector<LabeledSequence> sequences(SurfaceRole role) const;
  /// Match and non-match pairs for one kind, in canonical order.
  std::vector<SurfacePair> pairs(PairKind kind, MirrorAxis axis = MirrorAxis::horizontal) const;
};

std::uint64_t rod_seed(std::uint64_t corpus_seed, std::size_t rod);

/// `n_rods` independent rods, each cut into `k_images` square windows of the
/// strip height at 50% overlap. Rods are generated in parallel from derived
/// seeds, so the corpus does not depend on scheduling.
Corpus generate_corpus(const SynthConfig& cfg, std::size_t n_rods, std::size_t k_images);

/// Directory of hmap files plus manifest.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace fracmatch
