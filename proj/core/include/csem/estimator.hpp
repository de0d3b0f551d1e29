#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csem/fit_metrics.hpp"
#include "csem/ram.hpp"

namespace csem {

/// Sample covariance matrix with the unbiased (n-1) divisor, plus sample
/// size. `order` must match the model's observed_order at fit time.
struct SampleMoments {
  Eigen::MatrixXd s;
  long n = 0;
  std::vector<std::string> order;
};

struct EstimationSettings {
  int max_iterations = 10000;
  double f_tol = 1e-10;    // relative objective change
  double grad_tol = 1e-6;  // max |dF/dtheta|
  Divisor divisor = Divisor::n;
  std::map<std::string, double> start_override;
  int jitter_retries = 3;
  std::uint64_t seed = 8139;
  bool record_trace = false;
};

struct DerivedEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

struct FitResult {
  std::map<std::string, double> theta_hat;  // by free label
  std::map<std::string, double> se;
  Eigen::MatrixXd vcov;  // covariance of the reduced parameter vector
  std::vector<std::string> vcov_labels;
  std::map<std::string, DerivedEstimate> derived;
  bool converged = false;
  int iterations = 0;
  int retries_used = 0;
  double objective = 0.0;  // minimized F_ML
  FitStatistics fit;
  std::map<std::string, DerivedEstimate> standardized;
  Eigen::VectorXd theta_reduced;
  Eigen::VectorXd theta_full;
  std::vector<double> objective_trace;  // populated when settings.record_trace
};

/// ML discrepancy F = ln|Sigma(theta)| + tr(S Sigma^-1) - ln|S| - p.
/// Throws NonPDImplied when Sigma(theta) is not positive definite.
double fml(const RamModel& model, const Eigen::VectorXd& theta_full,
           const SampleMoments& moments);

/// Deterministic starts: loadings/effects 1.0, structural paths and
/// covariances 0.0, variances half the matching observed variance (helper
/// latents: half the mean observed variance). Returns a full-label vector.
Eigen::VectorXd starting_values(const RamModel& model, const SampleMoments& moments);

/// Quasi-Newton (BFGS) minimization of fml over the reduced
/// parameterization, with jittered restarts on non-convergence. Standard
/// errors come from the numerical Hessian of F: vcov = 2 H^-1 / d.
FitResult estimate(const RamModel& model, const SampleMoments& moments,
                   const EstimationSettings& settings = {});

/// Delta-method estimate and SE of a derived quantity at the optimum.
DerivedEstimate delta_method(const FitResult& result, const RamModel& model,
                             const DerivedQuantity& quantity);

/// Delta method for an arbitrary smooth function of the reduced parameter
/// vector.
DerivedEstimate delta_method_fn(const FitResult& result,
                                const std::function<double(const Eigen::VectorXd&)>& fn);

/// The covariance matrix actually fitted: rescaled to the ML divisor.
Eigen::MatrixXd fitting_covariance(const SampleMoments& moments, Divisor divisor);

/// The divisor count d used for chisq, loglik and vcov.
double divisor_count(const SampleMoments& moments, Divisor divisor);

}  // namespace csem
