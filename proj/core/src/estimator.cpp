#include "csem/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace csem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_det_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double fml_on(const RamModel& model, const Eigen::VectorXd& theta_full,
              const Eigen::MatrixXd& s, double log_det_s) {
  Eigen::MatrixXd sigma = implied_covariance(model, theta_full);
  const int p = static_cast<int>(sigma.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NonPDImplied("implied covariance is not positive definite");
  double log_det_sigma = log_det_llt(llt);
  double trace = llt.solve(s).trace();
  return log_det_sigma + trace - log_det_s - p;
}

// Objective over the reduced vector; +inf signals an inadmissible point so
// the line search backs off.
class Objective {
 public:
  Objective(const RamModel& model, const Eigen::MatrixXd& s_fit)
      : model_(model), s_(s_fit) {
    Eigen::LLT<Eigen::MatrixXd> llt(s_);
    if (llt.info() != Eigen::Success)
      throw Error("sample covariance matrix is not positive definite");
    log_det_s_ = log_det_llt(llt);
  }

  double operator()(const Eigen::VectorXd& theta_reduced) const {
    try {
      Eigen::VectorXd full = model_.parameter_map().expand(theta_reduced);
      double f = fml_on(model_, full, s_, log_det_s_);
      return std::isfinite(f) ? f : kInf;
    } catch (const NonPDImplied&) {
      return kInf;
    } catch (const SingularStructure&) {
      return kInf;
    }
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double rel_step = 1e-6) const {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x;
    for (int i = 0; i < n; ++i) {
      double h = rel_step * std::max(1.0, std::abs(x[i]));
      xp[i] = x[i] + h;
      double fp = (*this)(xp);
      xp[i] = x[i] - h;
      double fm = (*this)(xp);
      xp[i] = x[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd xp = x;
    for (int j = 0; j < n; ++j) {
      double step = 1e-4 * std::max(1.0, std::abs(x[j]));
      xp[j] = x[j] + step;
      Eigen::VectorXd gp = gradient(xp);
      xp[j] = x[j] - step;
      Eigen::VectorXd gm = gradient(xp);
      xp[j] = x[j];
      h.col(j) = (gp - gm) / (2.0 * step);
    }
    return (h + h.transpose()) / 2.0;
  }

 private:
  const RamModel& model_;
  Eigen::MatrixXd s_;
  double log_det_s_;
};

struct BfgsOutcome {
  Eigen::VectorXd x;
  double f = kInf;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

BfgsOutcome bfgs_minimize(const Objective& obj, Eigen::VectorXd x,
                          const EstimationSettings& settings) {
  const int n = static_cast<int>(x.size());
  BfgsOutcome out;
  double f = obj(x);
  if (!std::isfinite(f)) {
    out.x = x;
    out.f = f;
    return out;
  }
  Eigen::VectorXd g = obj.gradient(x);
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  if (settings.record_trace) out.trace.push_back(f);

  int stall = 0;
  int iter = 0;
  for (; iter < settings.max_iterations; ++iter) {
    if (g.cwiseAbs().maxCoeff() < settings.grad_tol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd dir = -(hinv * g);
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      dir = -g;
      slope = dir.dot(g);
    }
    // backtracking Armijo line search
    double alpha = 1.0;
    const double c1 = 1e-4;
    double f_new = kInf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + alpha * dir;
      f_new = obj(x_new);
      if (std::isfinite(f_new) && f_new <= f + c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd g_new = obj.gradient(x_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      double rho = 1.0 / sy;
      Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      Eigen::MatrixXd left = eye - rho * s * y.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    } else {
      hinv.setIdentity();
    }
    double rel_drop = (f - f_new) / std::max(1.0, std::abs(f));
    x = x_new;
    f = f_new;
    g = g_new;
    if (settings.record_trace) out.trace.push_back(f);
    if (rel_drop < settings.f_tol) {
      ++stall;
      if (stall == 3) hinv.setIdentity();  // curvature model went bad; restart it
      if (stall >= 6) break;
    } else {
      stall = 0;
    }
  }
  // the objective has stopped moving; accept a gradient within two orders of
  // the tolerance, which is the finite-difference noise floor near a minimum
  if (g.cwiseAbs().maxCoeff() < settings.grad_tol ||
      (stall >= 6 && g.cwiseAbs().maxCoeff() < 100.0 * settings.grad_tol))
    out.converged = true;
  out.x = std::move(x);
  out.f = f;
  out.iterations = iter;
  return out;
}

}  // namespace

Eigen::MatrixXd fitting_covariance(const SampleMoments& moments, Divisor divisor) {
  if (divisor == Divisor::n)
    return moments.s * (static_cast<double>(moments.n - 1) / static_cast<double>(moments.n));
  return moments.s;
}

double divisor_count(const SampleMoments& moments, Divisor divisor) {
  return divisor == Divisor::n ? static_cast<double>(moments.n)
                               : static_cast<double>(moments.n - 1);
}

double fml(const RamModel& model, const Eigen::VectorXd& theta_full,
           const SampleMoments& moments) {
  Eigen::LLT<Eigen::MatrixXd> llt(moments.s);
  if (llt.info() != Eigen::Success)
    throw Error("sample covariance matrix is not positive definite");
  return fml_on(model, theta_full, moments.s, log_det_llt(llt));
}

Eigen::VectorXd starting_values(const RamModel& model, const SampleMoments& moments) {
  std::map<std::string, int> obs_pos;
  for (size_t i = 0; i < moments.order.size(); ++i)
    obs_pos[moments.order[i]] = static_cast<int>(i);
  double mean_var = moments.s.rows() > 0 ? moments.s.diagonal().mean() : 1.0;

  const auto& labels = model.free_labels();
  Eigen::VectorXd theta(static_cast<int>(labels.size()));
  for (size_t k = 0; k < labels.size(); ++k) {
    const ParameterCell* cell = model.cell_for_label(labels[k]);
    double v = 0.0;
    if (cell->matrix == MatrixId::A) {
      if (!std::isnan(cell->value)) {
        v = cell->value;  // builder-provided hint
      } else {
        bool measurement = model.variable(cell->row).kind == VarKind::observed ||
                           model.variable(cell->col).kind == VarKind::observed;
        v = measurement ? 1.0 : 0.0;
      }
    } else if (cell->row == cell->col) {
      auto it = obs_pos.find(model.variable(cell->row).name);
      v = 0.5 * (it != obs_pos.end() ? moments.s(it->second, it->second) : mean_var);
    } else {
      v = 0.0;  // covariance
    }
    theta[static_cast<int>(k)] = v;
  }
  return theta;
}

FitResult estimate(const RamModel& model, const SampleMoments& moments,
                   const EstimationSettings& settings) {
  if (moments.order != model.observed_order())
    throw Error("sample moments order does not match the model's observed order");
  if (moments.n < static_cast<long>(moments.order.size()) + 1)
    throw TooFewRows("need at least p+1 observations");

  const ParameterMap& pm = model.parameter_map();
  const double d = divisor_count(moments, settings.divisor);
  Objective obj(model, fitting_covariance(moments, settings.divisor));

  Eigen::VectorXd start_full = starting_values(model, moments);
  for (const auto& [label, value] : settings.start_override) {
    int idx = model.label_index(label);
    if (idx >= 0) start_full[idx] = value;
  }
  Eigen::VectorXd x0 = pm.reduce(start_full);

  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> unif(-0.2, 0.2);

  BfgsOutcome best;
  int retries_used = 0;
  for (int attempt = 0; attempt <= settings.jitter_retries; ++attempt) {
    Eigen::VectorXd x = x0;
    if (attempt > 0) {
      // widen the perturbation with each retry so restarts can leave the
      // starting basin (sign flips included)
      double scale = static_cast<double>(attempt);
      for (int i = 0; i < x.size(); ++i) {
        double u = unif(rng) * scale;
        x[i] = (x[i] == 0.0) ? u : x[i] * (1.0 + u);
      }
    }
    BfgsOutcome run = bfgs_minimize(obj, std::move(x), settings);
    bool better = best.converged ? (run.converged && run.f < best.f)
                                 : (run.converged || run.f < best.f);
    if (better) {
      retries_used = attempt;
      best = std::move(run);
    }
    if (best.converged) break;
  }
  if (!std::isfinite(best.f))
    throw NotConverged("objective is not finite at any attempted start");

  FitResult result;
  result.converged = best.converged;
  result.iterations = best.iterations;
  result.retries_used = retries_used;
  result.objective = best.f;
  result.objective_trace = std::move(best.trace);
  result.theta_reduced = best.x;
  result.theta_full = pm.expand(best.x);
  result.vcov_labels = pm.reduced_labels();

  for (size_t k = 0; k < model.free_labels().size(); ++k)
    result.theta_hat[model.free_labels()[k]] = result.theta_full[static_cast<int>(k)];

  // standard errors from the numerical Hessian of F: vcov = 2 H^-1 / d
  const int r = pm.reduced_dim();
  if (r > 0) {
    Eigen::MatrixXd h = obj.hessian(best.x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    double max_eig = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (max_eig <= 0.0 || eig.eigenvalues().minCoeff() <= 1e-10 * max_eig)
      throw SingularInformation(
          "information matrix is singular at the solution (empirical under-identification)");
    Eigen::MatrixXd hinv = eig.eigenvectors() *
                           eig.eigenvalues().cwiseInverse().asDiagonal() *
                           eig.eigenvectors().transpose();
    result.vcov = (2.0 / d) * hinv;
  } else {
    result.vcov.resize(0, 0);
  }

  Eigen::MatrixXd vcov_full =
      pm.expansion_matrix() * result.vcov * pm.expansion_matrix().transpose();
  for (size_t k = 0; k < model.free_labels().size(); ++k) {
    double v = vcov_full(static_cast<int>(k), static_cast<int>(k));
    result.se[model.free_labels()[k]] = std::sqrt(std::max(0.0, v));
  }

  for (const auto& q : model.derived())
    result.derived[q.name] = delta_method(result, model, q);

  compute_fit(result, model, moments, settings);
  return result;
}

DerivedEstimate delta_method_fn(const FitResult& result,
                                const std::function<double(const Eigen::VectorXd&)>& fn) {
  DerivedEstimate out;
  out.estimate = fn(result.theta_reduced);
  const int r = static_cast<int>(result.theta_reduced.size());
  if (r == 0 || result.vcov.size() == 0) {
    out.se = 0.0;
    return out;
  }
  Eigen::VectorXd g(r);
  Eigen::VectorXd x = result.theta_reduced;
  for (int i = 0; i < r; ++i) {
    double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    double orig = x[i];
    x[i] = orig + h;
    double fp = fn(x);
    x[i] = orig - h;
    double fm = fn(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  double var = g.dot(result.vcov * g);
  out.se = std::sqrt(std::max(0.0, var));
  return out;
}

DerivedEstimate delta_method(const FitResult& result, const RamModel& model,
                             const DerivedQuantity& quantity) {
  const ParameterMap& pm = model.parameter_map();
  auto fn = [&](const Eigen::VectorXd& reduced) {
    return evaluate_derived(model, pm.expand(reduced), quantity);
  };
  try {
    return delta_method_fn(result, fn);
  } catch (const DivisionByZero& e) {
    throw UndefinedAtOptimum(std::string("derived quantity '") + quantity.name +
                             "' is undefined at the optimum: " + e.what());
  } catch (const SingularBlock& e) {
    throw UndefinedAtOptimum(std::string("derived quantity '") + quantity.name +
                             "' is undefined at the optimum: " + e.what());
  }
}

}  // namespace csem
