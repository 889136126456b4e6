#include "fracmatch/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "fracmatch/error.hpp"

namespace fracmatch {
namespace {

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

void check_features(const std::vector<FeatureMatrix>& fs, const char* what) {
  if (fs.empty()) throw Error(ErrorCode::invalid_argument, std::string("no ") + what + " features");
  for (const auto& f : fs) {
    if (f.band_count != fs.front().band_count || f.image_count != fs.front().image_count ||
        !(f.bands == fs.front().bands)) {
      throw Error(ErrorCode::shape_mismatch, std::string(what) + " features differ in shape: " + f.pair_id);
    }
  }
}

std::vector<Eigen::MatrixXd> to_matrices(const std::vector<FeatureMatrix>& fs) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(fs.size());
  for (const auto& f : fs) out.push_back(to_matrix(f));
  return out;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

}  // namespace

void TrainedClassifier::validate() const {
  f_match.validate();
  f_nonmatch.validate();
  if (f_match.p() != f_nonmatch.p() || f_match.q != f_nonmatch.q || f_match.dof != f_nonmatch.dof) {
    throw Error(ErrorCode::shape_mismatch, "match and non-match models differ in shape or dof");
  }
  if (!(prior_match > 0.0 && prior_match < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "prior must lie strictly inside (0, 1)");
  }
  if (bands.count() != f_match.p()) throw Error(ErrorCode::shape_mismatch, "band set does not match the model");
}

const char* to_string(Decision d) noexcept { return d == Decision::match ? "match" : "non-match"; }

bool MatchReport::correct() const noexcept {
  return (truth == Truth::match && decision == Decision::match) ||
         (truth == Truth::non_match && decision == Decision::non_match);
}

Posterior posterior_from_log_densities(double log_f_match, double log_f_nonmatch, double prior_match) {
  if (!(prior_match > 0.0 && prior_match < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "prior must lie strictly inside (0, 1)");
  }
  Posterior p;
  p.log_odds = std::log(prior_match) - std::log1p(-prior_match) + (log_f_match - log_f_nonmatch);
  p.match = std::exp(log_sigmoid(p.log_odds));
  p.non_match = std::exp(log_sigmoid(-p.log_odds));
  return p;
}

Eigen::MatrixXd to_matrix(const FeatureMatrix& f) {
  Eigen::MatrixXd m(f.band_count, f.image_count);
  for (std::size_t b = 0; b < f.band_count; ++b) {
    for (std::size_t k = 0; k < f.image_count; ++k) m(b, k) = f.at(b, k);
  }
  return m;
}

TrainedClassifier train(const std::vector<FeatureMatrix>& match_features,
                        const std::vector<FeatureMatrix>& nonmatch_features, const TrainOptions& options) {
  check_features(match_features, "match");
  check_features(nonmatch_features, "non-match");
  const auto& a = match_features.front();
  const auto& b = nonmatch_features.front();
  if (a.band_count != b.band_count || a.image_count != b.image_count || !(a.bands == b.bands)) {
    throw Error(ErrorCode::shape_mismatch, "match and non-match features differ in shape or bands");
  }
  for (const auto& f : match_features) {
    if (f.truth == Truth::non_match) throw Error(ErrorCode::invalid_argument, f.pair_id + " is labeled non-match");
  }
  for (const auto& f : nonmatch_features) {
    if (f.truth == Truth::match) throw Error(ErrorCode::invalid_argument, f.pair_id + " is labeled match");
  }

  mvt::FitOptions fo;
  fo.dof = options.dof;
  fo.tol = options.tol;
  fo.max_iter = options.max_iter;
  fo.ridge = options.ridge;

  TrainedClassifier c;
  c.prior_match = options.prior_match;
  c.bands = a.bands;
  c.fingerprint = options.fingerprint;
  auto fit_class = [&](const std::vector<FeatureMatrix>& fs, const char* name, mvt::MatrixTParams& params,
                       mvt::FitInfo& info) {
    try {
      auto r = mvt::fit(to_matrices(fs), fo);
      params = r.params;
      info = r.info;
    } catch (const Error& e) {
      throw Error(e.code(), std::string(name) + " class: " + e.what());
    }
  };
  fit_class(match_features, "match", c.f_match, c.match_info);
  fit_class(nonmatch_features, "non-match", c.f_nonmatch, c.nonmatch_info);
  c.validate();
  return c;
}

TrainedClassifier train(const std::vector<FeatureMatrix>& labeled, const TrainOptions& options) {
  std::vector<FeatureMatrix> m, n;
  for (const auto& f : labeled) {
    if (f.truth == Truth::match) {
      m.push_back(f);
    } else if (f.truth == Truth::non_match) {
      n.push_back(f);
    } else {
      throw Error(ErrorCode::invalid_argument, f.pair_id + " has no truth label");
    }
  }
  return train(m, n, options);
}

MatchReport classify(const TrainedClassifier& c, const FeatureMatrix& x, double threshold) {
  if (!(x.bands == c.bands)) {
    throw Error(ErrorCode::fingerprint_mismatch,
                x.pair_id + ": band set " + x.bands.to_string() + " differs from the model's " + c.bands.to_string());
  }
  if (x.band_count != c.band_count() || x.image_count != c.image_count()) {
    throw Error(ErrorCode::shape_mismatch, x.pair_id + ": feature shape differs from the model");
  }
  const Eigen::MatrixXd m = to_matrix(x);
  MatchReport r;
  r.pair_id = x.pair_id;
  r.truth = x.truth;
  r.log_f_match = mvt::log_density(c.f_match, m);
  r.log_f_nonmatch = mvt::log_density(c.f_nonmatch, m);
  const Posterior p = posterior_from_log_densities(r.log_f_match, r.log_f_nonmatch, c.prior_match);
  r.posterior = p.match;
  r.log_odds = p.log_odds;
  r.decision = r.posterior > threshold ? Decision::match : Decision::non_match;
  for (std::size_t b = 0; b < x.band_count; ++b) r.band_mean_r.push_back(x.mean_raw(b));
  return r;
}

std::vector<MatchReport> classify_all(const TrainedClassifier& c, const std::vector<FeatureMatrix>& xs,
                                      double threshold) {
  std::vector<MatchReport> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(classify(c, x, threshold));
  return out;
}

ConfusionCounts tally(const std::vector<MatchReport>& reports) {
  ConfusionCounts c;
  for (const auto& r : reports) {
    const bool said_match = r.decision == Decision::match;
    switch (r.truth) {
      case Truth::match: ++(said_match ? c.true_match : c.false_nonmatch); break;
      case Truth::non_match: ++(said_match ? c.false_match : c.true_nonmatch); break;
      case Truth::unknown: ++c.unknown; break;
    }
  }
  return c;
}

// Persistence ------------------------------------------------------------------

nlohmann::json to_json(const TrainedClassifier& c) {
  nlohmann::json j;
  j["format"] = "fracmatch-classifier";
  j["version"] = kModelVersion;
  j["prior_match"] = c.prior_match;
  j["bands"] = c.bands.edges();
  j["fingerprint"] = c.fingerprint;
  j["match"] = mvt::to_json(c.f_match, c.match_info);
  j["non_match"] = mvt::to_json(c.f_nonmatch, c.nonmatch_info);
  return j;
}

TrainedClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "fracmatch-classifier") {
      throw Error(ErrorCode::bad_magic, "not a classifier model");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelVersion) {
      throw Error(ErrorCode::bad_version, "unsupported model version " + std::to_string(version));
    }
    TrainedClassifier c;
    c.prior_match = j.at("prior_match").get<double>();
    c.bands = BandSet(j.at("bands").get<std::vector<double>>());
    c.fingerprint = j.at("fingerprint").get<std::string>();
    c.f_match = mvt::params_from_json(j.at("match"), &c.match_info);
    c.f_nonmatch = mvt::params_from_json(j.at("non_match"), &c.nonmatch_info);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad model file: ") + e.what());
  }
}

void save_model(const TrainedClassifier& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

TrainedClassifier load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  return classifier_from_json(j);
}

nlohmann::json to_json(const MatchReport& r) {
  return {{"pair_id", r.pair_id},
          {"posterior", r.posterior},
          {"log_odds", r.log_odds},
          {"log_f_match", r.log_f_match},
          {"log_f_nonmatch", r.log_f_nonmatch},
          {"decision", to_string(r.decision)},
          {"band_mean_r", r.band_mean_r},
          {"truth", to_string(r.truth)}};
}

void write_reports_json(std::vector<MatchReport> reports, const BandSet& bands, const std::string& fingerprint,
                        const std::filesystem::path& path) {
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  nlohmann::json j;
  j["bands"] = bands.edges();
  j["fingerprint"] = fingerprint;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) j["reports"].push_back(to_json(r));
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_reports_csv(std::vector<MatchReport> reports, const BandSet& bands, const std::filesystem::path& path) {
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << "pair_id,truth,decision,posterior,log_odds";
  for (std::size_t b = 0; b < bands.count(); ++b) {
    out << ",r_" << bands.band(b).lo << '_' << bands.band(b).hi;
  }
  out << '\n' << std::setprecision(17);
  for (const auto& r : reports) {
    out << r.pair_id << ',' << to_string(r.truth) << ',' << to_string(r.decision) << ',' << r.posterior << ','
        << r.log_odds;
    for (double v : r.band_mean_r) out << ',' << v;
    out << '\n';
  }
}

// Band sweep -------------------------------------------------------------------

GroupSummary summarize_group(const std::vector<FeatureMatrix>& group, const SweepOptions& options) {
  check_features(group, "sweep");
  if (group.size() < 2) throw Error(ErrorCode::invalid_argument, "band sweep needs at least two pairs per group");
  const auto xs = to_matrices(group);
  const std::size_t p = group.front().band_count;

  mvt::FitOptions fo;
  fo.dof = options.dof;
  fo.tol = options.tol;
  fo.max_iter = options.max_iter;
  const auto full = mvt::fit(xs, fo);

  GroupSummary s;
  for (std::size_t b = 0; b < p; ++b) s.mean_r.push_back(std::tanh(full.params.mean_col(static_cast<Eigen::Index>(b))));

  std::vector<std::vector<double>> draws(p);
  if (options.bootstrap > 0) {
    mvt::FitOptions bo = fo;
    bo.tol = options.bootstrap_tol;
    bo.ridge = true;
    bo.init = full.params;
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    std::vector<Eigen::MatrixXd> resample(xs.size());
    for (std::size_t it = 0; it < options.bootstrap; ++it) {
      for (auto& x : resample) x = xs[pick(rng)];
      const auto r = mvt::fit(resample, bo);
      for (std::size_t b = 0; b < p; ++b) draws[b].push_back(std::tanh(r.params.mean_col(static_cast<Eigen::Index>(b))));
    }
  }
  const double alpha = 0.5 * (1.0 - options.confidence);
  for (std::size_t b = 0; b < p; ++b) {
    if (draws[b].empty()) {
      s.ci_lo.push_back(s.mean_r[b]);
      s.ci_hi.push_back(s.mean_r[b]);
      continue;
    }
    // Percentile interval, widened to cover the point estimate.
    s.ci_lo.push_back(std::min(percentile(draws[b], alpha), s.mean_r[b]));
    s.ci_hi.push_back(std::max(percentile(draws[b], 1.0 - alpha), s.mean_r[b]));
  }
  return s;
}

std::vector<SweepRow> band_sweep(const std::vector<FeatureMatrix>& features, bool blur, const BandLayout& layout,
                                 const SweepOptions& options) {
  std::vector<FeatureMatrix> match, nonmatch;
  for (const auto& f : features) {
    if (f.truth == Truth::match) match.push_back(f);
    if (f.truth == Truth::non_match) nonmatch.push_back(f);
  }
  if (match.size() < 2 || nonmatch.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "band sweep needs at least two match and two non-match pairs");
  }
  if (!(match.front().bands == layout.bands())) {
    throw Error(ErrorCode::shape_mismatch, "features were computed on a different band set");
  }
  std::vector<SweepRow> rows;
  auto emit = [&](const std::vector<FeatureMatrix>& group, Truth label, std::uint64_t seed) {
    SweepOptions o = options;
    o.seed = seed;
    const GroupSummary s = summarize_group(group, o);
    for (std::size_t b = 0; b < s.mean_r.size(); ++b) {
      rows.push_back({layout.bands().band(b), label, blur, s.mean_r[b], s.ci_lo[b], s.ci_hi[b],
                      layout.low_resolution(b)});
    }
  };
  emit(match, Truth::match, options.seed);
  emit(nonmatch, Truth::non_match, options.seed ^ 0x9e3779b97f4a7c15ULL);
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << "band_lo,band_hi,group,blur,mean_r,ci_lo,ci_hi\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.band.lo << ',' << r.band.hi << ',' << to_string(r.group) << ',' << (r.blur ? "on" : "off") << ','
        << r.mean_r << ',' << r.ci_lo << ',' << r.ci_hi << '\n';
  }
}

}  // namespace fracmatch
