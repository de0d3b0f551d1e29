#include "csem/fit_metrics.hpp"

#include <cmath>
#include <numbers>

#include "csem/estimator.hpp"

namespace csem {

std::pair<double, int> chi_square(double f_min, long n, Divisor divisor, int df) {
  if (df < 0)
    throw NegativeDF("model has more free parameters than sample moments");
  double d = divisor == Divisor::n ? static_cast<double>(n) : static_cast<double>(n - 1);
  return {d * std::max(0.0, f_min), df};
}

double rmsea(double chisq, int df, double d) {
  if (df == 0) return 0.0;
  return std::sqrt(std::max(chisq - df, 0.0) / (static_cast<double>(df) * d));
}

double srmr(const Eigen::MatrixXd& s, const Eigen::MatrixXd& sigma_hat) {
  const int p = static_cast<int>(s.rows());
  double sum = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) {
      double resid = (s(i, j) - sigma_hat(i, j)) / std::sqrt(s(i, i) * s(j, j));
      sum += resid * resid;
    }
  double cells = p * (p + 1) / 2.0;
  return std::sqrt(sum / cells);
}

std::pair<double, double> information_criteria(double loglik, int n_params, long n) {
  double aic = -2.0 * loglik + 2.0 * n_params;
  double bic = -2.0 * loglik + n_params * std::log(static_cast<double>(n));
  return {aic, bic};
}

double gaussian_loglik(const Eigen::MatrixXd& s_fit, const Eigen::MatrixXd& sigma_hat,
                       double d) {
  const int p = static_cast<int>(s_fit.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_hat);
  if (llt.info() != Eigen::Success)
    throw NonPDImplied("implied covariance is not positive definite");
  double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double trace = llt.solve(s_fit).trace();
  return -(d / 2.0) * (p * std::log(2.0 * std::numbers::pi) + log_det + trace);
}

double r_squared(const RamModel& model, const Eigen::VectorXd& theta_full,
                 const std::string& endogenous) {
  int idx = model.var_index(endogenous);
  if (idx < 0) throw Error("unknown variable: " + endogenous);
  Eigen::MatrixXd s = model.s_matrix(theta_full);
  Eigen::MatrixXd full = implied_covariance_full(model, theta_full);
  double total = full(idx, idx);
  if (total <= 0.0) throw ZeroVariance("implied variance of " + endogenous + " is not positive");
  return 1.0 - s(idx, idx) / total;
}

void standardize(FitResult& result, const RamModel& model) {
  const ParameterMap& pm = model.parameter_map();

  auto implied_sds = [&](const Eigen::VectorXd& full) {
    Eigen::MatrixXd sigma = implied_covariance_full(model, full);
    Eigen::VectorXd sds = sigma.diagonal();
    for (int i = 0; i < sds.size(); ++i) {
      if (!(sds[i] > 0.0))
        throw ZeroVariance("implied variance of " + model.variable(i).name +
                           " is not positive");
      sds[i] = std::sqrt(sds[i]);
    }
    return sds;
  };

  for (const auto& label : model.free_labels()) {
    const ParameterCell* cell = model.cell_for_label(label);
    int li = model.label_index(label);
    auto fn = [&, cell, li](const Eigen::VectorXd& reduced) {
      Eigen::VectorXd full = pm.expand(reduced);
      Eigen::VectorXd sds = implied_sds(full);
      double value = full[li];
      if (cell->matrix == MatrixId::A)
        return value * sds[cell->col] / sds[cell->row];
      if (cell->row == cell->col) return value / (sds[cell->row] * sds[cell->row]);
      return value / (sds[cell->row] * sds[cell->col]);
    };
    result.standardized[label] = delta_method_fn(result, fn);
  }
}

void compute_fit(FitResult& result, const RamModel& model, const SampleMoments& moments,
                 const EstimationSettings& settings) {
  const int p = static_cast<int>(model.observed_order().size());
  const int q = model.parameter_map().reduced_dim();
  const int df = p * (p + 1) / 2 - q;
  const double d = divisor_count(moments, settings.divisor);

  auto [chisq, df_out] = chi_square(result.objective, moments.n, settings.divisor, df);
  Eigen::MatrixXd s_fit = fitting_covariance(moments, settings.divisor);
  Eigen::MatrixXd sigma_hat = implied_covariance(model, result.theta_full);

  result.fit.chisq = chisq;
  result.fit.df = df_out;
  result.fit.saturated = (df_out == 0);
  result.fit.rmsea = rmsea(chisq, df_out, d);
  result.fit.srmr = srmr(s_fit, sigma_hat);
  result.fit.loglik = gaussian_loglik(s_fit, sigma_hat, d);
  result.fit.n_params = q;
  auto [aic, bic] = information_criteria(result.fit.loglik, q, moments.n);
  result.fit.aic = aic;
  result.fit.bic = bic;
}

}  // namespace csem
