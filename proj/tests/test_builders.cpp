#include <doctest.h>

#include <Eigen/Dense>

#include <map>

#include "csem/builders.hpp"
#include "csem/data_io.hpp"
#include "csem/estimator.hpp"
#include "csem/popgen.hpp"
#include "support/oracles.hpp"

using namespace csem;

namespace {

std::vector<CompositeBlock> three_blocks(WeightMode mode, SpecKind spec,
                                         Transmission trans = Transmission::mimic_two_step) {
  std::vector<CompositeBlock> blocks;
  for (std::string name : {"A", "B", "Y"}) {
    CompositeBlock b;
    b.name = name;
    b.components = {name + "1", name + "2"};
    b.weight_mode = mode;
    b.spec = spec;
    b.transmission = trans;
    blocks.push_back(b);
  }
  return blocks;
}

StructuralSpec y_on_a_b() {
  StructuralSpec s;
  s.regressions.push_back({"Y", {"A", "B"}});
  return s;
}

SampleMoments random_moments(std::uint64_t seed, long n = 300) {
  std::mt19937_64 rng(seed);
  SampleMoments m;
  m.s = oracles::random_correlation(6, rng);
  m.n = n;
  m.order = {"A1", "A2", "B1", "B2", "Y1", "Y2"};
  return m;
}

PopulationSpec small_population() {
  PopulationSpec pop;
  double wts[3][2] = {{0.4, 0.8}, {0.7, 0.5}, {0.6, 0.6}};
  int i = 0;
  for (std::string name : {"A", "B", "Y"}) {
    PopulationBlock b;
    b.name = name;
    b.components = {name + "1", name + "2"};
    b.weights = Eigen::Vector2d(wts[i][0], wts[i][1]);
    ++i;
    b.sigma_x.resize(2, 2);
    b.sigma_x << 1.0, 0.35, 0.35, 1.0;
    pop.blocks.push_back(b);
  }
  pop.paths.push_back({"Y", {{"A", 0.4}, {"B", -0.3}}});
  pop.exo_covariances = {{"A", "B", 0.15}};
  pop.seed = 2024;
  return pop;
}

int free_param_count(const BuiltModel& built) {
  return built.model.parameter_map().reduced_dim();
}

}  // namespace

TEST_SUITE("builders") {

TEST_CASE("resolve_weights per mode") {
  CompositeBlock b;
  b.name = "A";
  b.components = {"x1", "x2", "x3"};

  b.weight_mode = WeightMode::unit_sum;
  CHECK(resolve_weights(b) == std::vector<double>{1.0, 1.0, 1.0});

  b.weight_mode = WeightMode::average;
  auto avg = resolve_weights(b);
  REQUIRE(avg.size() == 3);
  CHECK(avg[0] == doctest::Approx(1.0 / 3.0));

  b.weight_mode = WeightMode::fixed;
  b.fixed_values = {0.2, 0.3, 0.5};
  CHECK(resolve_weights(b) == b.fixed_values);

  b.weight_mode = WeightMode::free_;
  CHECK_THROWS_AS(resolve_weights(b), FreeWeightsUnsupported);
}

TEST_CASE("two-step scores are the exact weighted sums") {
  Dataset data;
  data.columns = {"A1", "A2", "B1", "B2", "Y1", "Y2"};
  data.values.resize(3, 6);
  data.values << 1, 2, 3, 4, 5, 6, 0.5, -1, 2, 0, 1, -2, -1, 1, 0, 2, -3, 4;

  auto blocks = three_blocks(WeightMode::average, SpecKind::two_step);
  TwoStepResult result = build_two_step(blocks, y_on_a_b(), data);

  int a = result.scores.column_index("A");
  REQUIRE(a >= 0);
  for (int r = 0; r < 3; ++r)
    CHECK(result.scores.values(r, a) ==
          doctest::Approx(0.5 * (data.values(r, 0) + data.values(r, 1))));
  CHECK(result.step2.model.observed_order() == std::vector<std::string>{"A", "B", "Y"});
}

TEST_CASE("two-step requires fixed weights and all columns") {
  Dataset data;
  data.columns = {"A1", "A2", "B1", "B2", "Y1"};  // Y2 missing
  data.values = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS_AS(build_two_step(three_blocks(WeightMode::average, SpecKind::two_step),
                                 y_on_a_b(), data),
                  MissingColumn);
  data.columns.push_back("Y2");
  data.values = Eigen::MatrixXd::Zero(3, 6);
  CHECK_THROWS_AS(build_two_step(three_blocks(WeightMode::free_, SpecKind::two_step),
                                 y_on_a_b(), data),
                  FreeWeightsUnsupported);
}

TEST_CASE("every composite must appear in the structural model") {
  auto blocks = three_blocks(WeightMode::average, SpecKind::ho_refined);
  StructuralSpec s;
  s.regressions.push_back({"Y", {"A"}});  // B is never referenced
  CHECK_THROWS_AS(build_component_model(blocks, s), IsolatedComposite);
}

TEST_CASE("builder preconditions") {
  auto structural = y_on_a_b();

  SUBCASE("pseudo indicator rejects a zero pseudo weight") {
    auto blocks = three_blocks(WeightMode::fixed, SpecKind::pseudo_indicator);
    for (auto& b : blocks) b.fixed_values = {0.5, 0.0};  // pseudo defaults to the last
    CHECK_THROWS_AS(build_pseudo_indicator(blocks, structural), ZeroPseudoWeight);
  }
  SUBCASE("blended rejects a zero pseudo weight") {
    auto blocks = three_blocks(WeightMode::fixed, SpecKind::ho_blended);
    for (auto& b : blocks) b.fixed_values = {0.5, 0.0};
    CHECK_THROWS_AS(build_ho_blended(blocks, structural), ZeroPseudoWeight);
  }
  SUBCASE("phantom rejects any zero weight") {
    auto blocks = three_blocks(WeightMode::fixed, SpecKind::ho_phantom);
    for (auto& b : blocks) b.fixed_values = {0.0, 1.0};
    CHECK_THROWS_AS(build_ho_phantom(blocks, structural), ZeroWeight);
  }
  SUBCASE("refined rejects explicit fixed values") {
    auto blocks = three_blocks(WeightMode::fixed, SpecKind::ho_refined);
    for (auto& b : blocks) b.fixed_values = {0.3, 0.7};
    CHECK_THROWS_AS(build_ho_refined(blocks, structural), UnsupportedFixedValues);
  }
  SUBCASE("original variant requires free weights") {
    auto blocks = three_blocks(WeightMode::average, SpecKind::ho_original);
    CHECK_THROWS_AS(build_ho_original(blocks, structural), UnsupportedFixedValues);
  }
  SUBCASE("one-step rejects free weights on the outcome block") {
    auto blocks = three_blocks(WeightMode::average, SpecKind::one_step_modified);
    blocks[2].weight_mode = WeightMode::free_;
    CHECK_THROWS_AS(build_one_step_modified(blocks, structural), FreeWeightsOnOutcome);
  }
  SUBCASE("one-step composite cannot be both outcome and predictor") {
    auto blocks = three_blocks(WeightMode::average, SpecKind::one_step_modified);
    StructuralSpec chain;
    chain.regressions.push_back({"B", {"A"}});
    chain.regressions.push_back({"Y", {"B"}});
    CHECK_THROWS_AS(build_one_step_modified(blocks, chain), Error);
  }
}

TEST_CASE("saturation plan follows each block's transmission") {
  auto structural = y_on_a_b();
  auto full = three_blocks(WeightMode::free_, SpecKind::ho_refined, Transmission::full);
  CHECK(saturation_plan(full, structural).empty());

  auto mimic = three_blocks(WeightMode::average, SpecKind::ho_refined);
  CHECK(!saturation_plan(mimic, structural).empty());
}

TEST_CASE("fixed-weight specifications are observationally equivalent") {
  SampleMoments m = random_moments(606);
  auto structural = y_on_a_b();

  std::map<std::string, FitResult> fits;
  std::map<std::string, BuiltModel> models;
  for (auto [name, spec] : std::vector<std::pair<std::string, SpecKind>>{
           {"pseudo", SpecKind::pseudo_indicator},
           {"refined", SpecKind::ho_refined},
           {"phantom", SpecKind::ho_phantom},
           {"blended", SpecKind::ho_blended}}) {
    BuiltModel built = build_component_model(three_blocks(WeightMode::average, spec), structural);
    FitResult fit = estimate(built.model, m);
    REQUIRE_MESSAGE(fit.converged, name);
    fits.emplace(name, std::move(fit));
    models.emplace(name, std::move(built));
  }

  const FitResult& ref = fits.at("pseudo");
  CHECK(ref.fit.df == 0);
  for (const auto& [name, fit] : fits) {
    CHECK_MESSAGE(fit.fit.chisq == doctest::Approx(ref.fit.chisq).epsilon(1e-6), name);
    for (const char* label : {"Y~A", "Y~B", "A~~B"}) {
      CHECK_MESSAGE(fit.theta_hat.at(label) ==
                        doctest::Approx(ref.theta_hat.at(label)).epsilon(1e-6),
                    label << " in " << name);
      CHECK_MESSAGE(fit.se.at(label) == doctest::Approx(ref.se.at(label)).epsilon(1e-4),
                    label << " se in " << name);
    }
  }

  // the one-step form carries the same composite effect as a derived quantity
  BuiltModel onestep =
      build_one_step_modified(three_blocks(WeightMode::average, SpecKind::one_step_modified),
                              structural);
  FitResult one_fit = estimate(onestep.model, m);
  REQUIRE(one_fit.converged);
  CHECK(one_fit.derived.at("Y~A").estimate ==
        doctest::Approx(ref.theta_hat.at("Y~A")).epsilon(1e-6));
  CHECK(one_fit.derived.at("Y~B").estimate ==
        doctest::Approx(ref.theta_hat.at("Y~B")).epsilon(1e-6));
  CHECK(one_fit.fit.df > 0);
  CHECK(!onestep.r2_available);
}

TEST_CASE("two-step reproduces the component-level fixed-weight solution") {
  PopulationSpec pop = small_population();
  Dataset data = sample(pop, 400);
  SampleMoments m = moments_from_data(data, data.columns);
  auto structural = y_on_a_b();

  BuiltModel pseudo = build_component_model(
      three_blocks(WeightMode::average, SpecKind::pseudo_indicator), structural);
  FitResult component_fit = estimate(pseudo.model, m);
  REQUIRE(component_fit.converged);

  TwoStepResult two =
      build_two_step(three_blocks(WeightMode::average, SpecKind::two_step), structural, data);
  SampleMoments score_m = moments_from_data(two.scores, two.scores.columns);
  FitResult score_fit = estimate(two.step2.model, score_m);
  REQUIRE(score_fit.converged);

  CHECK(score_fit.theta_hat.at("Y~A") ==
        doctest::Approx(component_fit.theta_hat.at("Y~A")).epsilon(1e-6));
  CHECK(score_fit.theta_hat.at("Y~B") ==
        doctest::Approx(component_fit.theta_hat.at("Y~B")).epsilon(1e-6));
}

TEST_CASE("free-weight specifications agree on composite-structured data") {
  PopulationSpec pop = small_population();
  Dataset data = sample(pop, 500);
  SampleMoments m = moments_from_data(data, data.columns);
  auto structural = y_on_a_b();

  BuiltModel refined =
      build_component_model(three_blocks(WeightMode::free_, SpecKind::ho_refined,
                                         Transmission::full),
                            structural);
  BuiltModel blended =
      build_component_model(three_blocks(WeightMode::free_, SpecKind::ho_blended,
                                         Transmission::full),
                            structural);
  FitResult rf = estimate(refined.model, m);
  FitResult bf = estimate(blended.model, m);
  REQUIRE(rf.converged);
  REQUIRE(bf.converged);
  CHECK(rf.fit.df == bf.fit.df);
  CHECK(rf.fit.chisq == doctest::Approx(bf.fit.chisq).epsilon(1e-6));

  // weight ratios within a block identify the same composite up to scale
  for (std::string b : {"A", "B", "Y"}) {
    double r1 = rf.derived.at("w_" + b + "1").estimate / rf.derived.at("w_" + b + "2").estimate;
    double r2 = bf.derived.at("w_" + b + "1").estimate / bf.derived.at("w_" + b + "2").estimate;
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-5));
  }
}

TEST_CASE("free weights recover the population weights from the exact covariance") {
  PopulationSpec pop = small_population();
  SampleMoments m;
  m.s = population_sigma(pop);
  m.n = 100000;
  for (const auto& b : pop.blocks)
    m.order.insert(m.order.end(), b.components.begin(), b.components.end());

  BuiltModel built = build_component_model(
      three_blocks(WeightMode::free_, SpecKind::ho_refined, Transmission::full), y_on_a_b());
  FitResult fit = estimate(built.model, m);
  REQUIRE(fit.converged);
  CHECK(fit.objective == doctest::Approx(0.0).epsilon(1e-9));
  for (size_t i = 0; i < pop.blocks.size(); ++i) {
    const auto& b = pop.blocks[i];
    double truth = b.weights[0] / b.weights[1];
    double est = fit.derived.at("w_" + b.name + "1").estimate /
                 fit.derived.at("w_" + b.name + "2").estimate;
    CHECK_MESSAGE(est == doctest::Approx(truth).epsilon(1e-6), b.name);
  }
}

TEST_CASE("derived weights invert the estimated loadings") {
  PopulationSpec pop = small_population();
  Dataset data = sample(pop, 400);
  SampleMoments m = moments_from_data(data, data.columns);

  BuiltModel built = build_component_model(
      three_blocks(WeightMode::free_, SpecKind::ho_refined, Transmission::full), y_on_a_b());
  FitResult fit = estimate(built.model, m);
  REQUIRE(fit.converged);

  Eigen::MatrixXd a = built.model.a_matrix(fit.theta_full);
  Eigen::MatrixXd inv =
      (Eigen::MatrixXd::Identity(a.rows(), a.cols()) - a).partialPivLu().inverse();
  for (const auto& block : built.blocks) {
    const int k = static_cast<int>(block.components.size());
    Eigen::MatrixXd lambda(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        lambda(i, j) = inv(block.component_indices[i], block.composite_indices[j]);
    Eigen::MatrixXd w(k, k);
    for (int i = 0; i < k; ++i) w(0, i) = fit.derived.at(block.weight_names[i]).estimate;
    // only the composite row of the inverse is exported; check lambda row products
    for (int i = 0; i < k; ++i) {
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += w(0, j) * lambda(j, i);
      CHECK(dot == doctest::Approx(i == 0 ? 1.0 : 0.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("parameter counts for the four-block benchmark shape") {
  std::vector<CompositeBlock> blocks;
  const char* comps[4][2] = {{"o1", "o2"}, {"e1", "e2"}, {"r1", "r2"}, {"g1", "g2"}};
  const char* names[4] = {"W", "P", "R", "G"};
  for (int i = 0; i < 4; ++i) {
    CompositeBlock b;
    b.name = names[i];
    b.components = {comps[i][0], comps[i][1]};
    blocks.push_back(b);
  }
  StructuralSpec s;
  s.regressions.push_back({"G", {"W", "P", "R"}});

  const int moments_count = 8 * 9 / 2;

  auto fixed = blocks;
  for (auto& b : fixed) {
    b.weight_mode = WeightMode::average;
    b.spec = SpecKind::ho_refined;
    b.transmission = Transmission::mimic_two_step;
  }
  CHECK(moments_count - free_param_count(build_component_model(fixed, s)) == 0);

  auto free_w = blocks;
  for (auto& b : free_w) {
    b.weight_mode = WeightMode::free_;
    b.spec = SpecKind::ho_refined;
    b.transmission = Transmission::full;
  }
  CHECK(moments_count - free_param_count(build_component_model(free_w, s)) == 14);

  auto onestep = blocks;
  for (auto& b : onestep) {
    b.weight_mode = WeightMode::average;
    b.spec = SpecKind::one_step_modified;
  }
  CHECK(moments_count - free_param_count(build_one_step_modified(onestep, s)) == 7);
}

TEST_CASE("original variant with three components estimates cleanly") {
  PopulationSpec pop;
  PopulationBlock a;
  a.name = "A";
  a.components = {"A1", "A2", "A3"};
  a.weights = Eigen::Vector3d(0.5, 0.3, 0.8);
  a.sigma_x.resize(3, 3);
  a.sigma_x << 1.0, 0.3, 0.2, 0.3, 1.0, 0.25, 0.2, 0.25, 1.0;
  pop.blocks.push_back(a);
  PopulationBlock y;
  y.name = "Y";
  y.components = {"Y1", "Y2"};
  y.weights = Eigen::Vector2d(0.6, 0.7);
  y.sigma_x.resize(2, 2);
  y.sigma_x << 1.0, 0.4, 0.4, 1.0;
  pop.blocks.push_back(y);
  pop.paths.push_back({"Y", {{"A", 0.5}}});
  pop.seed = 5;

  SampleMoments m;
  m.s = population_sigma(pop);
  m.n = 50000;
  m.order = {"A1", "A2", "A3", "Y1", "Y2"};

  std::vector<CompositeBlock> blocks(2);
  blocks[0] = {"A", {"A1", "A2", "A3"}, WeightMode::free_, {}, SpecKind::ho_original,
               Transmission::full, ""};
  blocks[1] = {"Y", {"Y1", "Y2"}, WeightMode::free_, {}, SpecKind::ho_original,
               Transmission::full, ""};
  StructuralSpec s;
  s.regressions.push_back({"Y", {"A"}});

  BuiltModel built = build_component_model(blocks, s);
  FitResult fit = estimate(built.model, m);
  REQUIRE(fit.converged);
  CHECK(fit.objective == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(fit.derived.at("w_A1").estimate / fit.derived.at("w_A3").estimate ==
        doctest::Approx(0.5 / 0.8).epsilon(1e-6));
}

}  // TEST_SUITE
