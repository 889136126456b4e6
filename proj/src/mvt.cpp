#include "fracmatch/mvt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "fracmatch/error.hpp"

namespace fracmatch::mvt {
namespace {

constexpr double kRhoBound = 1.0 - 1e-6;

double log_det_spd(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::degenerate_scatter, std::string(what) + " is not positive definite");
  }
  return llt;
}

// Normalizing constant of the density, excluding the |Σ| and |Ψ| terms.
double log_norm_const(std::size_t p, std::size_t q, double dof) {
  const double pd = static_cast<double>(p), qd = static_cast<double>(q);
  return log_multivariate_gamma(p, 0.5 * (dof + pd + qd - 1.0)) -
         log_multivariate_gamma(p, 0.5 * (dof + pd - 1.0)) -
         0.5 * pd * qd * std::log(std::numbers::pi);
}

}  // namespace

Eigen::MatrixXd MatrixTParams::mean() const {
  return mean_col * Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(q));
}

Eigen::MatrixXd MatrixTParams::column_corr() const { return ar1_correlation(q, ar1_rho); }

void MatrixTParams::validate() const {
  const auto pp = static_cast<Eigen::Index>(p());
  if (pp == 0 || q == 0) throw Error(ErrorCode::invalid_argument, "matrix-t dimensions must be positive");
  if (row_cov.rows() != pp || row_cov.cols() != pp) {
    throw Error(ErrorCode::shape_mismatch, "row covariance does not match the mean vector");
  }
  if (!(row_cov - row_cov.transpose()).isZero(1e-12 * std::max(1.0, row_cov.cwiseAbs().maxCoeff()))) {
    throw Error(ErrorCode::invalid_argument, "row covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(row_cov, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorCode::degenerate_scatter, "row covariance is not positive definite");
  }
  if (!(std::fabs(ar1_rho) < 1.0)) throw Error(ErrorCode::invalid_argument, "AR(1) rho must lie in (-1, 1)");
  if (!(dof > 0.0)) throw Error(ErrorCode::invalid_argument, "degrees of freedom must be positive");
}

Eigen::MatrixXd ar1_correlation(std::size_t q, double rho) {
  const auto n = static_cast<Eigen::Index>(q);
  Eigen::MatrixXd psi(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) psi(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  }
  return psi;
}

Eigen::MatrixXd ar1_inverse(std::size_t q, double rho) {
  const auto n = static_cast<Eigen::Index>(q);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  if (n == 1) {
    inv(0, 0) = 1.0;
    return inv;
  }
  const double s = 1.0 / (1.0 - rho * rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv(i, i) = (i == 0 || i == n - 1) ? s : (1.0 + rho * rho) * s;
    if (i + 1 < n) inv(i, i + 1) = inv(i + 1, i) = -rho * s;
  }
  return inv;
}

double ar1_log_det(std::size_t q, double rho) {
  return q <= 1 ? 0.0 : static_cast<double>(q - 1) * std::log1p(-rho * rho);
}

double log_multivariate_gamma(std::size_t p, double a) {
  const double pd = static_cast<double>(p);
  double s = 0.25 * pd * (pd - 1.0) * std::log(std::numbers::pi);
  for (std::size_t j = 1; j <= p; ++j) s += std::lgamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  return s;
}

double log_density(const MatrixTParams& params, const Eigen::MatrixXd& x) {
  params.validate();
  const std::size_t p = params.p(), q = params.q;
  if (static_cast<std::size_t>(x.rows()) != p || static_cast<std::size_t>(x.cols()) != q) {
    throw Error(ErrorCode::shape_mismatch, "observation is " + std::to_string(x.rows()) + "x" +
                                               std::to_string(x.cols()) + ", model expects " +
                                               std::to_string(p) + "x" + std::to_string(q));
  }
  const auto sigma_llt = checked_llt(params.row_cov, "row covariance");
  const double log_det_sigma = log_det_spd(sigma_llt);
  const Eigen::MatrixXd resid = x - params.mean();
  const Eigen::MatrixXd c = params.row_cov + resid * ar1_inverse(q, params.ar1_rho) * resid.transpose();
  const double log_det_c = log_det_spd(checked_llt(c, "scale matrix"));
  const double pd = static_cast<double>(p), qd = static_cast<double>(q);
  return log_norm_const(p, q, params.dof) - 0.5 * qd * log_det_sigma -
         0.5 * pd * ar1_log_det(q, params.ar1_rho) -
         0.5 * (params.dof + pd + qd - 1.0) * (log_det_c - log_det_sigma);
}

double total_log_likelihood(const MatrixTParams& params, const std::vector<Eigen::MatrixXd>& samples) {
  double s = 0.0;
  for (const auto& x : samples) s += log_density(params, x);
  return s;
}

std::vector<Eigen::MatrixXd> sample(const MatrixTParams& params, std::size_t n, std::uint64_t seed) {
  params.validate();
  const auto p = static_cast<Eigen::Index>(params.p());
  const auto q = static_cast<Eigen::Index>(params.q);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::MatrixXd sigma_inv = params.row_cov.inverse();
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(0.5 * (sigma_inv + sigma_inv.transpose())).matrixL();
  const Eigen::MatrixXd psi_root = Eigen::LLT<Eigen::MatrixXd>(params.column_corr()).matrixL();
  const Eigen::MatrixXd m = params.mean();
  const double wishart_dof = params.dof + static_cast<double>(p) - 1.0;

  std::vector<Eigen::MatrixXd> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    // Bartlett factor A: S = (L A)(L A)ᵀ ~ Wishart(ν+p-1, Σ⁻¹)
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      std::chi_squared_distribution<double> chi2(wishart_dof - static_cast<double>(i));
      a(i, i) = std::sqrt(chi2(rng));
      for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
    }
    Eigen::MatrixXd z(p, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) z(i, j) = normal(rng);
    }
    const Eigen::MatrixXd g = l * a;
    // (L A)⁻ᵀ Z has row covariance S⁻¹
    const Eigen::MatrixXd y = g.transpose().triangularView<Eigen::Upper>().solve(z);
    out.push_back(m + y * psi_root.transpose());
  }
  return out;
}

// Fitting ------------------------------------------------------------------------

namespace {

struct EStep {
  double loglik = 0.0;
  std::vector<Eigen::MatrixXd> weights;  // E[S | X_i]
};

EStep expectation(const MatrixTParams& th, const std::vector<Eigen::MatrixXd>& xs) {
  const std::size_t p = th.p(), q = th.q;
  const double pd = static_cast<double>(p), qd = static_cast<double>(q);
  const double post_dof = th.dof + pd + qd - 1.0;
  const auto sigma_llt = checked_llt(th.row_cov, "row covariance");
  const double log_det_sigma = log_det_spd(sigma_llt);
  const Eigen::MatrixXd psi_inv = ar1_inverse(q, th.ar1_rho);
  const Eigen::MatrixXd m = th.mean();
  const auto pp = static_cast<Eigen::Index>(p);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(pp, pp);

  EStep e;
  e.weights.reserve(xs.size());
  const double per_sample = log_norm_const(p, q, th.dof) - 0.5 * qd * log_det_sigma -
                            0.5 * pd * ar1_log_det(q, th.ar1_rho);
  for (const auto& x : xs) {
    const Eigen::MatrixXd resid = x - m;
    Eigen::MatrixXd c = th.row_cov;
    c.noalias() += resid * psi_inv * resid.transpose();
    const auto llt = checked_llt(c, "posterior scale");
    e.loglik += per_sample - 0.5 * post_dof * (log_det_spd(llt) - log_det_sigma);
    e.weights.push_back(post_dof * llt.solve(eye));
  }
  return e;
}

// ρ part of the expected complete-data log-likelihood:
//   -(N p / 2) log|Ψ(ρ)| - ½ tr(Ψ(ρ)⁻¹ A)
// with tr(Ψ⁻¹A) = (tr A + ρ² Σ_inner A_jj - 2ρ Σ A_{j,j+1}) / (1 - ρ²).
struct RhoObjective {
  double np_half;
  std::size_t q;
  double trace_all, trace_inner, off_diag;

  double operator()(double rho) const {
    const double one_m = 1.0 - rho * rho;
    const double tr = (trace_all + rho * rho * trace_inner - 2.0 * rho * off_diag) / one_m;
    return -np_half * static_cast<double>(q - 1) * std::log(one_m) - 0.5 * tr;
  }
};

double maximize_rho(const RhoObjective& g, double current) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = -kRhoBound, hi = kRhoBound;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = g(x1), f2 = g(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = g(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = g(x1);
    }
  }
  const double best = 0.5 * (lo + hi);
  return g(best) >= g(current) ? best : current;
}

MatrixTParams initial_guess(const std::vector<Eigen::MatrixXd>& xs, double dof,
                            const Eigen::MatrixXd& scatter, std::size_t total_cols) {
  const auto p = xs.front().rows();
  const auto q = xs.front().cols();
  MatrixTParams th;
  th.q = static_cast<std::size_t>(q);
  th.dof = dof;
  th.mean_col = Eigen::VectorXd::Zero(p);
  for (const auto& x : xs) th.mean_col += x.rowwise().sum();
  th.mean_col /= static_cast<double>(total_cols);
  // Cov of each column is Σ/(ν-2) for ν > 2.
  const double scale = dof > 2.0 ? dof - 2.0 : 1.0;
  th.row_cov = scale * scatter / static_cast<double>(total_cols);

  double num = 0.0, den = 0.0;
  for (const auto& x : xs) {
    const Eigen::MatrixXd r = x.colwise() - th.mean_col;
    for (Eigen::Index j = 0; j < q; ++j) {
      den += r.col(j).squaredNorm();
      if (j + 1 < q) num += r.col(j).dot(r.col(j + 1));
    }
  }
  th.ar1_rho = den > 0.0 && q > 1 ? std::clamp(num / den * static_cast<double>(q) / static_cast<double>(q - 1), -0.9, 0.9) : 0.0;
  return th;
}

}  // namespace

FitResult fit(const std::vector<Eigen::MatrixXd>& samples, const FitOptions& options) {
  if (samples.empty()) throw Error(ErrorCode::invalid_argument, "no samples to fit");
  const auto p = samples.front().rows();
  const auto q = samples.front().cols();
  for (const auto& x : samples) {
    if (x.rows() != p || x.cols() != q) throw Error(ErrorCode::shape_mismatch, "samples differ in shape");
    if (!x.allFinite()) throw Error(ErrorCode::non_finite, "sample contains non-finite values");
  }
  const std::size_t n = samples.size();
  if (n < 2 || n * static_cast<std::size_t>(q) < static_cast<std::size_t>(p) + 1) {
    throw Error(ErrorCode::invalid_argument,
                "too few samples: " + std::to_string(n) + " of shape " + std::to_string(p) + "x" +
                    std::to_string(q));
  }
  if (!(options.dof > 0.0)) throw Error(ErrorCode::invalid_argument, "degrees of freedom must be positive");

  // Row scatter about the pooled row means decides identifiability.
  const std::size_t total_cols = n * static_cast<std::size_t>(q);
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(p);
  for (const auto& x : samples) pooled += x.rowwise().sum();
  pooled /= static_cast<double>(total_cols);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(p, p);
  for (const auto& x : samples) {
    const Eigen::MatrixXd r = x.colwise() - pooled;
    scatter.noalias() += r * r.transpose();
  }
  const double trace = scatter.trace();
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(scatter, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .minCoeff();
  double ridge = 0.0;
  if (!(trace > 0.0) || min_eig <= 1e-12 * trace) {
    if (!options.ridge || !(trace > 0.0)) {
      throw Error(ErrorCode::degenerate_scatter,
                  "sample scatter is rank deficient; supply more samples or enable the ridge");
    }
    ridge = 1e-8 * trace;
    scatter += ridge * Eigen::MatrixXd::Identity(p, p);
  }

  MatrixTParams th;
  if (options.init) {
    th = *options.init;
    th.dof = options.dof;
    if (th.p() != static_cast<std::size_t>(p) || th.q != static_cast<std::size_t>(q)) {
      throw Error(ErrorCode::shape_mismatch, "warm start does not match the sample shape");
    }
  } else {
    th = initial_guess(samples, options.dof, scatter, total_cols);
  }

  const double pd = static_cast<double>(p);
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(q);

  FitResult result;
  EStep e = expectation(th, samples);
  result.params = th;
  result.info.n = n;
  result.info.final_loglik = e.loglik;
  if (options.keep_trace) result.trace.push_back(e.loglik);

  for (int it = 1; it <= options.max_iter; ++it) {
    // m given Ψ: m = (s ΣW_i)⁻¹ ΣW_i X_i c, c = Ψ⁻¹1, s = 1ᵀc
    const Eigen::MatrixXd psi_inv = ar1_inverse(static_cast<std::size_t>(q), th.ar1_rho);
    const Eigen::VectorXd c = psi_inv * ones;
    const double s = ones.dot(c);
    Eigen::MatrixXd sum_w = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 0; i < n; ++i) {
      sum_w += e.weights[i];
      rhs.noalias() += e.weights[i] * (samples[i] * c);
    }
    const auto sum_w_llt = checked_llt(0.5 * (sum_w + sum_w.transpose()), "summed weights");
    th.mean_col = sum_w_llt.solve(rhs) / s;

    // Σ = N(ν+p-1) (ΣW_i)⁻¹
    Eigen::MatrixXd sigma = (nd * (th.dof + pd - 1.0)) * sum_w_llt.solve(Eigen::MatrixXd::Identity(p, p));
    sigma = 0.5 * (sigma + sigma.transpose());
    if (ridge > 0.0) sigma += ridge * Eigen::MatrixXd::Identity(p, p);
    th.row_cov = sigma;

    // ρ given m
    if (q > 1) {
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::MatrixXd r = samples[i].colwise() - th.mean_col;
        a.noalias() += r.transpose() * e.weights[i] * r;
      }
      RhoObjective g{0.5 * nd * pd, static_cast<std::size_t>(q), a.trace(),
                     a.diagonal().segment(1, q - 2 > 0 ? q - 2 : 0).sum(), 0.0};
      for (Eigen::Index j = 0; j + 1 < q; ++j) g.off_diag += a(j, j + 1);
      th.ar1_rho = maximize_rho(g, th.ar1_rho);
    }

    const double prev = e.loglik;
    e = expectation(th, samples);
    if (options.keep_trace) result.trace.push_back(e.loglik);
    result.max_decrease = std::max(result.max_decrease, prev - e.loglik);
    result.info.iterations = it;
    if (e.loglik >= result.info.final_loglik) {
      result.params = th;
      result.info.final_loglik = e.loglik;
    }
    if (std::fabs(e.loglik - prev) <= options.tol * std::max(1.0, std::fabs(e.loglik))) {
      result.info.converged = true;
      break;
    }
  }
  return result;
}

// Persistence --------------------------------------------------------------------

nlohmann::json to_json(const MatrixTParams& params, const FitInfo& info) {
  nlohmann::json j;
  j["p"] = params.p();
  j["q"] = params.q;
  j["dof"] = params.dof;
  j["mean_col"] = std::vector<double>(params.mean_col.data(), params.mean_col.data() + params.mean_col.size());
  std::vector<double> cov;
  for (Eigen::Index r = 0; r < params.row_cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.row_cov.cols(); ++c) cov.push_back(params.row_cov(r, c));
  }
  j["row_cov"] = cov;
  j["ar1_rho"] = params.ar1_rho;
  j["fit"] = {{"n", info.n},
              {"final_loglik", info.final_loglik},
              {"iterations", info.iterations},
              {"converged", info.converged}};
  return j;
}

MatrixTParams params_from_json(const nlohmann::json& j, FitInfo* info) {
  try {
    MatrixTParams th;
    const auto p = j.at("p").get<std::size_t>();
    th.q = j.at("q").get<std::size_t>();
    th.dof = j.at("dof").get<double>();
    const auto mean = j.at("mean_col").get<std::vector<double>>();
    const auto cov = j.at("row_cov").get<std::vector<double>>();
    if (mean.size() != p || cov.size() != p * p) {
      throw Error(ErrorCode::parse_error, "parameter arrays do not match p");
    }
    th.mean_col = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(p));
    th.row_cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cov.data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    th.ar1_rho = j.at("ar1_rho").get<double>();
    if (info != nullptr && j.contains("fit")) {
      const auto& f = j.at("fit");
      info->n = f.at("n").get<std::size_t>();
      info->final_loglik = f.at("final_loglik").get<double>();
      info->iterations = f.at("iterations").get<int>();
      info->converged = f.at("converged").get<bool>();
    }
    th.validate();
    return th;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad matrix-t parameters: ") + e.what());
  }
}

}  // namespace fracmatch::mvt
