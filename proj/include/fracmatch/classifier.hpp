#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fracmatch/features.hpp"
#include "fracmatch/mvt.hpp"

namespace fracmatch {

struct TrainedClassifier {
  mvt::MatrixTParams f_match;
  mvt::MatrixTParams f_nonmatch;
  mvt::FitInfo match_info;
  mvt::FitInfo nonmatch_info;
  double prior_match = 0.5;
  BandSet bands;
  std::string fingerprint;

  std::size_t band_count() const noexcept { return f_match.p(); }
  std::size_t image_count() const noexcept { return f_match.q; }
  /// Throws unless both fits share (p, q, ν) and the prior is inside (0, 1).
  void validate() const;
};

enum class Decision { match, non_match };
const char* to_string(Decision d) noexcept;

struct MatchReport {
  std::string pair_id;
  double posterior = 0.5;
  double log_odds = 0.0;
  double log_f_match = 0.0;
  double log_f_nonmatch = 0.0;
  Decision decision = Decision::non_match;
  std::vector<double> band_mean_r;  // mean raw correlation per band
  Truth truth = Truth::unknown;

  bool correct() const noexcept;
};

struct Posterior {
  double match = 0.5;
  double non_match = 0.5;
  double log_odds = 0.0;
};

/// p₁f₁ / (p₁f₁ + (1-p₁)f₂) from log densities, without exponentiating
/// either density.
Posterior posterior_from_log_densities(double log_f_match, double log_f_nonmatch, double prior_match);

/// B×K matrix view of a feature on the Fisher-Z scale.
Eigen::MatrixXd to_matrix(const FeatureMatrix& f);

struct TrainOptions {
  double prior_match = 0.5;
  double dof = 5.0;
  double tol = 1e-8;
  int max_iter = 500;
  bool ridge = false;
  std::string fingerprint;
};

TrainedClassifier train(const std::vector<FeatureMatrix>& match_features,
                        const std::vector<FeatureMatrix>& nonmatch_features, const TrainOptions& options = {});

/// Splits by truth label and trains. Features with unknown truth are an error.
TrainedClassifier train(const std::vector<FeatureMatrix>& labeled, const TrainOptions& options = {});

MatchReport classify(const TrainedClassifier& c, const FeatureMatrix& x, double threshold = 0.5);
std::vector<MatchReport> classify_all(const TrainedClassifier& c, const std::vector<FeatureMatrix>& xs,
                                      double threshold = 0.5);

struct ConfusionCounts {
  std::size_t true_match = 0;
  std::size_t false_nonmatch = 0;  // false negatives
  std::size_t true_nonmatch = 0;
  std::size_t false_match = 0;  // false positives
  std::size_t unknown = 0;

  std::size_t errors() const noexcept { return false_match + false_nonmatch; }
};
ConfusionCounts tally(const std::vector<MatchReport>& reports);

// Persistence ------------------------------------------------------------------

constexpr int kModelVersion = 1;

nlohmann::json to_json(const TrainedClassifier& c);
TrainedClassifier classifier_from_json(const nlohmann::json& j);
void save_model(const TrainedClassifier& c, const std::filesystem::path& path);
TrainedClassifier load_model(const std::filesystem::path& path);

nlohmann::json to_json(const MatchReport& r);
/// Reports sorted by pair id.
void write_reports_json(std::vector<MatchReport> reports, const BandSet& bands, const std::string& fingerprint,
                        const std::filesystem::path& path);
void write_reports_csv(std::vector<MatchReport> reports, const BandSet& bands,
                       const std::filesystem::path& path);

// Band sweep -------------------------------------------------------------------

struct SweepOptions {
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 0;
  double dof = 5.0;
  double tol = 1e-8;
  /// Looser tolerance for the warm-started bootstrap refits.
  double bootstrap_tol = 1e-6;
  int max_iter = 500;
  double confidence = 0.95;
};

struct SweepRow {
  Band band;
  Truth group = Truth::match;
  bool blur = false;
  double mean_r = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool low_resolution = false;
};

struct GroupSummary {
  std::vector<double> mean_r;  // tanh of the fitted mean Fisher-Z per band
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
};

/// Fits the matrix-t model to one group and bootstraps the per-band mean
/// correlation by resampling whole surface pairs.
GroupSummary summarize_group(const std::vector<FeatureMatrix>& group, const SweepOptions& options);

/// Rows for every band of both groups, match rows first.
std::vector<SweepRow> band_sweep(const std::vector<FeatureMatrix>& features, bool blur, const BandLayout& layout,
                                 const SweepOptions& options);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace fracmatch
