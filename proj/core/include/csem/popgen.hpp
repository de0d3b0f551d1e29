#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "csem/dataset.hpp"
#include "csem/dsl.hpp"

namespace csem {

/// One composite in a population: true weights plus the within-block
/// component covariance. The composite score is exactly w'x.
struct PopulationBlock {
  std::string name;
  std::vector<std::string> components;
  Eigen::VectorXd weights;
  Eigen::MatrixXd sigma_x;
};

/// outcome = sum of coefficient * predictor + residual. Predictors must be
/// exogenous composites or earlier outcomes (acyclic, in declaration order).
struct PopulationPath {
  std::string outcome;
  std::vector<std::pair<std::string, double>> terms;
};

struct PopulationSpec {
  std::vector<PopulationBlock> blocks;
  std::vector<PopulationPath> paths;
  /// covariances between exogenous composites (unlisted pairs are zero)
  std::vector<std::tuple<std::string, std::string, double>> exo_covariances;
  std::uint64_t seed = 1;
};

/// Covariance matrix of the composites (block order), with endogenous
/// residual variances chosen so var(eta) = w' Sigma_x w holds exactly.
Eigen::MatrixXd composite_sigma(const PopulationSpec& spec);

/// Full component-level covariance: within-block blocks are the given
/// Sigma_x, and every cross-block covariance is transmitted through the
/// composites (loading-proportional pattern).
Eigen::MatrixXd population_sigma(const PopulationSpec& spec);

/// n i.i.d. multivariate-normal rows with covariance population_sigma(spec),
/// deterministic under spec.seed. Columns are the components in block order.
Dataset sample(const PopulationSpec& spec, long n);

/// Random correlation matrix (PD, unit diagonal); the unconstrained
/// counterpart used for populations no composite model holds in.
Eigen::MatrixXd random_pd(int p, std::mt19937_64& rng);

/// Reads a population from a parsed program's options:
///   set population.<block>.weights = w1, w2, ...
///   set population.<block>.sigma = s11, s12; s21, s22
///   set population.path.<outcome> = Pred*coef + Pred*coef
///   set population.cov.<A>.<B> = value
///   set population.seed = k
/// Weights default to the block's resolved fixed weights, sigma to identity,
/// and paths fall back over the program's regressions (coefficients required).
PopulationSpec population_from_program(const ModelProgram& program);

}  // namespace csem
