#include <doctest.h>

#include <Eigen/Dense>

#include "csem/dsl.hpp"
#include "csem/popgen.hpp"
#include "support/oracles.hpp"

using namespace csem;

namespace {

PopulationSpec two_block_spec() {
  PopulationSpec pop;
  PopulationBlock a;
  a.name = "A";
  a.components = {"A1", "A2"};
  a.weights = Eigen::Vector2d(0.4, 0.8);
  a.sigma_x.resize(2, 2);
  a.sigma_x << 1.0, 0.3, 0.3, 1.0;
  pop.blocks.push_back(a);
  PopulationBlock y;
  y.name = "Y";
  y.components = {"Y1", "Y2"};
  y.weights = Eigen::Vector2d(0.6, 0.6);
  y.sigma_x.resize(2, 2);
  y.sigma_x << 1.0, 0.2, 0.2, 1.0;
  pop.blocks.push_back(y);
  pop.paths.push_back({"Y", {{"A", 0.5}}});
  pop.seed = 99;
  return pop;
}

}  // namespace

TEST_SUITE("popgen") {

TEST_CASE("composite variance is exactly the quadratic form") {
  PopulationSpec pop;
  PopulationBlock a;
  a.name = "A";
  a.components = {"x1", "x2"};
  a.weights = Eigen::Vector2d(1.0, 1.0);
  a.sigma_x = Eigen::MatrixXd::Identity(2, 2);
  pop.blocks.push_back(a);

  Eigen::MatrixXd c = composite_sigma(pop);
  REQUIRE(c.rows() == 1);
  CHECK(c(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("paths induce covariance and keep variances exact") {
  PopulationSpec pop = two_block_spec();
  Eigen::MatrixXd c = composite_sigma(pop);
  REQUIRE(c.rows() == 2);

  double var_a = oracles::quadratic_form(pop.blocks[0].weights, pop.blocks[0].sigma_x);
  double var_y = oracles::quadratic_form(pop.blocks[1].weights, pop.blocks[1].sigma_x);
  CHECK(c(0, 0) == doctest::Approx(var_a));
  CHECK(c(1, 1) == doctest::Approx(var_y));
  CHECK(c(1, 0) == doctest::Approx(0.5 * var_a));
}

TEST_CASE("exogenous covariances are honored") {
  PopulationSpec pop = two_block_spec();
  pop.paths.clear();
  pop.exo_covariances = {{"A", "Y", 0.21}};
  Eigen::MatrixXd c = composite_sigma(pop);
  CHECK(c(1, 0) == doctest::Approx(0.21));
}

TEST_CASE("an over-explained outcome is rejected") {
  PopulationSpec pop = two_block_spec();
  pop.paths[0].terms[0].second = 5.0;  // explained variance exceeds var(Y)
  CHECK_THROWS_AS(composite_sigma(pop), NotPositiveDefinite);
}

TEST_CASE("a non-PD within-block covariance is rejected") {
  PopulationSpec pop = two_block_spec();
  pop.blocks[0].sigma_x << 1.0, 1.2, 1.2, 1.0;
  CHECK_THROWS_AS(population_sigma(pop), NotPositiveDefinite);
}

TEST_CASE("component-level covariance transmits through the composites") {
  PopulationSpec pop = two_block_spec();
  Eigen::MatrixXd sigma = population_sigma(pop);
  REQUIRE(sigma.rows() == 4);

  // within-block parts are the prescribed sigma_x
  CHECK((sigma.topLeftCorner(2, 2) - pop.blocks[0].sigma_x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sigma.bottomRightCorner(2, 2) - pop.blocks[1].sigma_x).cwiseAbs().maxCoeff() < 1e-12);

  // weighting the cross-block cells recovers the composite covariance
  Eigen::MatrixXd cross = sigma.topRightCorner(2, 2);
  Eigen::MatrixXd c = composite_sigma(pop);
  double recovered = pop.blocks[0].weights.transpose() * cross * pop.blocks[1].weights;
  CHECK(recovered == doctest::Approx(c(1, 0)).epsilon(1e-12));

  // cross-block pattern is rank one (loading-proportional)
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  CHECK(svd.singularValues()[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sampling is deterministic and consistent with the population") {
  PopulationSpec pop = two_block_spec();
  Dataset a = sample(pop, 200);
  Dataset b = sample(pop, 200);
  CHECK(a.columns == std::vector<std::string>{"A1", "A2", "Y1", "Y2"});
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);

  pop.seed = 100;
  Dataset c = sample(pop, 200);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);

  Dataset big = sample(pop, 200000);
  Eigen::MatrixXd centered = big.values.rowwise() - big.values.colwise().mean();
  Eigen::MatrixXd s = centered.transpose() * centered / (big.values.rows() - 1.0);
  CHECK((s - population_sigma(pop)).cwiseAbs().maxCoeff() < 0.03);

  CHECK_THROWS_AS(sample(pop, 1), TooFewRows);
}

TEST_CASE("random_pd yields correlation matrices") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd m = random_pd(6, rng);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.diagonal().array() - 1.0).abs().maxCoeff() < 1e-12);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("populations can be declared inline in a model script") {
  const std::string src =
      "set population.A.weights = 0.4, 0.8\n"
      "set population.A.sigma = 1, 0.3; 0.3, 1\n"
      "set population.Y.sigma = 1, 0.2; 0.2, 1\n"
      "set population.path.Y = A*0.5\n"
      "set population.seed = 99\n"
      "composite A <~ fixed(A1=0.4, A2=0.8) (A1, A2) using phantom\n"
      "composite Y <~ sum (Y1, Y2) using refined\n"
      "Y ~ A\n";
  ParseResult parsed = parse(src);
  REQUIRE(parsed.ok());
  PopulationSpec pop = population_from_program(parsed.program);

  REQUIRE(pop.blocks.size() == 2);
  CHECK(pop.blocks[0].weights[0] == doctest::Approx(0.4));
  CHECK(pop.blocks[0].sigma_x(0, 1) == doctest::Approx(0.3));
  // Y weights default to the block's resolved fixed weights (sum -> 1, 1)
  CHECK(pop.blocks[1].weights[0] == doctest::Approx(1.0));
  REQUIRE(pop.paths.size() == 1);
  CHECK(pop.paths[0].outcome == "Y");
  CHECK(pop.paths[0].terms[0].first == "A");
  CHECK(pop.paths[0].terms[0].second == doctest::Approx(0.5));
  CHECK(pop.seed == 99);
}

TEST_CASE("inline populations validate their inputs") {
  SUBCASE("free weights need explicit population weights") {
    ParseResult parsed = parse(
        "composite A <~ free (A1, A2) using refined\n"
        "composite Y <~ sum (Y1, Y2) using refined\n"
        "set population.path.Y = A*0.5\n"
        "Y ~ A\n");
    REQUIRE(parsed.ok());
    CHECK_THROWS_AS(population_from_program(parsed.program), Error);
  }
  SUBCASE("paths require coefficients") {
    ParseResult parsed = parse(
        "composite A <~ sum (A1, A2) using refined\n"
        "composite Y <~ sum (Y1, Y2) using refined\n"
        "Y ~ A\n");
    REQUIRE(parsed.ok());
    CHECK_THROWS_AS(population_from_program(parsed.program), Error);
  }
}

}  // TEST_SUITE
