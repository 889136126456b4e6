#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fracmatch::mvt {

/// Matrix-variate t with mean M = m·1ᵀ (identical columns), row scale Σ,
/// AR(1) column correlation Ψ_jk = ρ^|j-k| and ν degrees of freedom, in the
/// Gupta–Nagar parameterization:
///
///   f(X) = Γ_p((ν+p+q-1)/2) / (π^{pq/2} Γ_p((ν+p-1)/2)) |Σ|^{-q/2} |Ψ|^{-p/2}
///          |I_p + Σ⁻¹(X-M)Ψ⁻¹(X-M)ᵀ|^{-(ν+p+q-1)/2}
///
/// Ψ has unit diagonal, which fixes the scale split between Σ and Ψ.
struct MatrixTParams {
  std::size_t q = 1;  // columns; rows come from mean_col
  Eigen::VectorXd mean_col;
  Eigen::MatrixXd row_cov;
  double ar1_rho = 0.0;
  double dof = 5.0;

  std::size_t p() const noexcept { return static_cast<std::size_t>(mean_col.size()); }

  Eigen::MatrixXd mean() const;
  Eigen::MatrixXd column_corr() const;
  /// Throws unless Σ is symmetric positive definite, |ρ| < 1 and ν > 0.
  void validate() const;
};

struct FitInfo {
  std::size_t n = 0;
  double final_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

// AR(1) helpers -----------------------------------------------------------------

Eigen::MatrixXd ar1_correlation(std::size_t q, double rho);
/// Closed-form tridiagonal inverse of the AR(1) correlation matrix.
Eigen::MatrixXd ar1_inverse(std::size_t q, double rho);
double ar1_log_det(std::size_t q, double rho);

double log_multivariate_gamma(std::size_t p, double a);

// Density -------------------------------------------------------------------------

double log_density(const MatrixTParams& params, const Eigen::MatrixXd& x);

/// Draws X = M + S^{-1/2} Z Ψ^{1/2} with Z standard normal and
/// S ~ Wishart_p(ν+p-1, Σ⁻¹), which is the mixture behind the density.
std::vector<Eigen::MatrixXd> sample(const MatrixTParams& params, std::size_t n, std::uint64_t seed);

// Fitting -------------------------------------------------------------------------

struct FitOptions {
  double dof = 5.0;
  double tol = 1e-8;
  int max_iter = 500;
  /// Adds 1e-8·trace(scatter)·I to Σ when the scatter is rank deficient.
  bool ridge = false;
  /// Warm start; must match the sample shape.
  std::optional<MatrixTParams> init;
  /// Keep the log-likelihood after every iteration.
  bool keep_trace = false;
};

struct FitResult {
  MatrixTParams params;
  FitInfo info;
  std::vector<double> trace;
  /// Largest drop of the log-likelihood between consecutive iterations
  /// (0 when the sequence never decreased).
  double max_decrease = 0.0;
};

/// Maximum-likelihood fit under the identical-column mean and AR(1)
/// constraints by expectation–conditional-maximization. The E-step uses
/// E[S | X] = (ν+p+q-1)(Σ + QΨ⁻¹Qᵀ)⁻¹; the M-steps update m and Σ in closed
/// form and ρ by bounded golden-section search.
FitResult fit(const std::vector<Eigen::MatrixXd>& samples, const FitOptions& options = {});

double total_log_likelihood(const MatrixTParams& params, const std::vector<Eigen::MatrixXd>& samples);

// Persistence ---------------------------------------------------------------------

nlohmann::json to_json(const MatrixTParams& params, const FitInfo& info);
MatrixTParams params_from_json(const nlohmann::json& j, FitInfo* info = nullptr);

}  // namespace fracmatch::mvt
