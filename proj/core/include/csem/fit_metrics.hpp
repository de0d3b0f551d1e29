#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <utility>

#include "csem/ram.hpp"

namespace csem {

enum class Divisor { n, n_minus_1 };

struct FitStatistics {
  double chisq = 0.0;
  int df = 0;
  double rmsea = 0.0;
  double srmr = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::map<std::string, double> r_squared;
  double loglik = 0.0;
  int n_params = 0;
  bool saturated = false;  // df == 0; rmsea reported as 0 by convention
};

struct FitResult;
struct SampleMoments;
struct EstimationSettings;

/// chisq = d * F_min with d per the divisor convention. Throws NegativeDF for
/// over-parameterized models.
std::pair<double, int> chi_square(double f_min, long n, Divisor divisor, int df);

/// sqrt(max(chisq - df, 0) / (df * d)); 0 when df == 0 by convention.
double rmsea(double chisq, int df, double d);

/// Root mean square of correlation-metric residuals over the lower triangle
/// plus diagonal.
double srmr(const Eigen::MatrixXd& s, const Eigen::MatrixXd& sigma_hat);

/// (aic, bic) from the Gaussian log-likelihood and parameter count.
std::pair<double, double> information_criteria(double loglik, int n_params, long n);

/// l = -(d/2) [p ln(2 pi) + ln|Sigma| + tr(S Sigma^-1)]
double gaussian_loglik(const Eigen::MatrixXd& s_fit, const Eigen::MatrixXd& sigma_hat, double d);

/// 1 - var(zeta)/var_implied(endogenous), both from the fitted model.
double r_squared(const RamModel& model, const Eigen::VectorXd& theta_full,
                 const std::string& endogenous);

/// Rescales every coefficient by model-implied standard deviations and turns
/// covariances into correlations; SEs via the delta method. Fills
/// result.standardized.
void standardize(FitResult& result, const RamModel& model);

/// Fills result.fit (chisq, df, rmsea, srmr, aic, bic, loglik, n_params)
/// from the converged result. r_squared entries are added by the caller,
/// which knows the endogenous composites.
void compute_fit(FitResult& result, const RamModel& model, const SampleMoments& moments,
                 const EstimationSettings& settings);

}  // namespace csem
