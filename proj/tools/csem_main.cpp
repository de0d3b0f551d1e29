#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "csem/builders.hpp"
#include "csem/data_io.hpp"
#include "csem/dsl.hpp"
#include "csem/estimator.hpp"
#include "csem/fit_metrics.hpp"
#include "csem/popgen.hpp"
#include "csem/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitNotConverged = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw csem::Error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

csem::ModelProgram parse_or_fail(const std::string& path) {
  csem::ParseResult parsed = csem::parse(read_file(path));
  if (!parsed.ok()) {
    for (const auto& d : parsed.diagnostics)
      std::cerr << path << ":" << d.line << ":" << d.col << ": " << d.message << "\n";
    throw csem::Error("model file " + path + " has errors");
  }
  if (parsed.program.blocks.empty())
    throw csem::Error("model file " + path + " declares no composites");
  return parsed.program;
}

const std::map<std::string, csem::SpecKind> kSpecFlag = {
    {"twostep", csem::SpecKind::two_step},
    {"onestep", csem::SpecKind::one_step_modified},
    {"pseudo", csem::SpecKind::pseudo_indicator},
    {"original", csem::SpecKind::ho_original},
    {"refined", csem::SpecKind::ho_refined},
    {"phantom", csem::SpecKind::ho_phantom},
    {"blended", csem::SpecKind::ho_blended},
};

std::vector<std::string> modeled_columns(const csem::ModelProgram& program) {
  std::vector<std::string> cols;
  std::set<std::string> seen, declared;
  auto note = [&](const std::string& name) {
    if (declared.count(name)) return;  // composites are not data columns
    if (seen.insert(name).second) cols.push_back(name);
  };
  for (const auto& b : program.blocks) declared.insert(b.name);
  for (const auto& b : program.blocks)
    for (const auto& c : b.components) note(c);
  for (const auto& r : program.structural.regressions) {
    note(r.outcome);
    for (const auto& p : r.predictors) note(p);
  }
  for (const auto& [a, b] : program.structural.covariances) note(a), note(b);
  return cols;
}

void apply_weights_override(csem::ModelProgram& program, const std::string& mode) {
  csem::WeightMode wm;
  if (mode == "average")
    wm = csem::WeightMode::average;
  else if (mode == "sum")
    wm = csem::WeightMode::unit_sum;
  else if (mode == "free")
    wm = csem::WeightMode::free_;
  else
    throw csem::Error("--weights must be average, sum or free");
  for (auto& b : program.blocks) {
    b.weight_mode = wm;
    b.fixed_values.clear();
    b.transmission = wm == csem::WeightMode::free_ ? csem::Transmission::full
                                                   : csem::Transmission::mimic_two_step;
  }
}

struct FitInputs {
  csem::SampleMoments moments;  // for everything except two-step
  csem::Dataset data;           // complete rows, standardized if requested
  bool have_rows = false;
};

int run_fit(const std::string& model_path, const std::string& data_path,
            const std::string& cov_path, long cov_n, const std::string& spec_flag,
            const std::string& weights_flag, bool standardize_data, bool standardized_solution,
            const std::string& format, const std::string& out_path, std::uint64_t seed) {
  csem::ModelProgram program = parse_or_fail(model_path);
  if (!weights_flag.empty()) apply_weights_override(program, weights_flag);

  std::vector<std::string> columns = modeled_columns(program);
  FitInputs inputs;
  if (!data_path.empty()) {
    csem::Dataset raw = csem::load_csv(data_path);
    inputs.data = csem::listwise_complete(raw, columns);
    if (inputs.data.values.rows() < static_cast<long>(columns.size()) + 1)
      throw csem::TooFewRows("only " + std::to_string(inputs.data.values.rows()) +
                             " complete rows for " + std::to_string(columns.size()) +
                             " variables");
    if (standardize_data) inputs.data = csem::zscore(inputs.data);
    inputs.moments = csem::moments_from_data(inputs.data, columns);
    inputs.have_rows = true;
  } else if (!cov_path.empty()) {
    if (cov_n < 2) throw csem::Error("--cov requires --n (sample size)");
    inputs.moments = csem::load_covariance_csv(cov_path, cov_n);
    for (const auto& c : columns)
      if (std::find(inputs.moments.order.begin(), inputs.moments.order.end(), c) ==
          inputs.moments.order.end())
        throw csem::MissingColumn("covariance input has no column " + c);
  } else {
    throw csem::Error("give --data or --cov");
  }

  csem::EstimationSettings settings;
  settings.seed = seed;
  if (auto it = program.options.find("divisor"); it != program.options.end()) {
    if (it->second == "n")
      settings.divisor = csem::Divisor::n;
    else if (it->second == "n-1")
      settings.divisor = csem::Divisor::n_minus_1;
    else
      throw csem::Error("set divisor = n or n-1");
  }

  std::vector<std::pair<std::string, csem::SpecKind>> to_fit;
  if (spec_flag == "all") {
    for (const auto& [name, kind] : kSpecFlag) to_fit.push_back({name, kind});
  } else if (!spec_flag.empty()) {
    auto it = kSpecFlag.find(spec_flag);
    if (it == kSpecFlag.end())
      throw csem::Error("unknown --spec " + spec_flag +
                        "; expected twostep, onestep, pseudo, original, refined, phantom, "
                        "blended or all");
    to_fit.push_back({it->first, it->second});
  } else {
    to_fit.push_back({"as-declared", program.blocks.front().spec});
  }
  const bool fit_all = spec_flag == "all";

  csem::RunReport report;
  report.n = inputs.moments.n;
  report.seed = seed;
  report.weights_mode = weights_flag;
  bool any_not_converged = false;

  for (const auto& [name, kind] : to_fit) {
    std::vector<csem::CompositeBlock> blocks = program.blocks;
    if (name != "as-declared")
      for (auto& b : blocks) b.spec = kind;

    try {
      csem::BuiltModel built;
      csem::SampleMoments moments;
      if (kind == csem::SpecKind::two_step) {
        if (!inputs.have_rows)
          throw csem::Error("the two-step specification needs row data (--data)");
        csem::TwoStepResult two = csem::build_two_step(blocks, program.structural, inputs.data);
        built = std::move(two.step2);
        moments = csem::moments_from_data(two.scores, built.model.observed_order());
      } else if (kind == csem::SpecKind::one_step_modified) {
        built = csem::build_one_step_modified(blocks, program.structural);
        moments = inputs.moments;
      } else {
        built = csem::build_component_model(blocks, program.structural);
        moments = inputs.moments;
      }

      if (moments.order != built.model.observed_order()) {
        csem::SampleMoments reordered;
        reordered.n = moments.n;
        reordered.order = built.model.observed_order();
        const int p = static_cast<int>(reordered.order.size());
        std::vector<int> map(p);
        for (int i = 0; i < p; ++i) {
          auto it = std::find(moments.order.begin(), moments.order.end(), reordered.order[i]);
          if (it == moments.order.end())
            throw csem::MissingColumn("covariance input has no column " + reordered.order[i]);
          map[i] = static_cast<int>(it - moments.order.begin());
        }
        reordered.s.resize(p, p);
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) reordered.s(i, j) = moments.s(map[i], map[j]);
        moments = std::move(reordered);
      }

      csem::FitResult result = csem::estimate(built.model, moments, settings);
      if (standardized_solution) csem::standardize(result, built.model);
      if (!result.converged) any_not_converged = true;
      report.specs.push_back(csem::make_spec_report(name == "as-declared" ? "declared" : name,
                                                    built, result));
    } catch (const csem::Error& e) {
      if (!fit_all) throw;
      std::cerr << "skipping " << name << ": " << e.what() << "\n";
    }
  }

  if (report.specs.empty()) throw csem::Error("no specification could be fitted");

  std::string text = format == "json" ? csem::render_json(report) : csem::render_text(report);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) throw csem::Error("cannot write " + out_path);
    out << text;
  }
  return any_not_converged ? kExitNotConverged : kExitOk;
}

int run_simulate(const std::string& model_path, long n, std::uint64_t seed,
                 const std::string& out_path) {
  csem::ModelProgram program = parse_or_fail(model_path);
  csem::PopulationSpec spec = csem::population_from_program(program);
  if (seed != 0) spec.seed = seed;
  csem::Dataset data = csem::sample(spec, n);
  if (out_path.empty()) {
    std::cout.precision(17);
    for (size_t j = 0; j < data.columns.size(); ++j)
      std::cout << (j ? "," : "") << data.columns[j];
    std::cout << "\n";
    for (long i = 0; i < data.values.rows(); ++i) {
      for (long j = 0; j < data.values.cols(); ++j)
        std::cout << (j ? "," : "") << data.values(i, j);
      std::cout << "\n";
    }
  } else {
    csem::write_csv(data, out_path);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"composite structural equation models: build, fit and compare"};
  app.require_subcommand(1);

  std::string model_path, data_path, cov_path, spec_flag, weights_flag;
  std::string format = "text", out_path;
  long cov_n = 0, sim_n = 0;
  std::uint64_t seed = 8139, sim_seed = 0;
  bool standardize_data = false, standardized_solution = false;

  CLI::App* fit = app.add_subcommand("fit", "fit one or all composite specifications");
  fit->add_option("--model", model_path, "model script (.csem)")->required();
  fit->add_option("--data", data_path, "CSV with raw observations");
  fit->add_option("--cov", cov_path, "CSV with a sample covariance matrix");
  fit->add_option("--n", cov_n, "sample size for --cov input");
  fit->add_option("--spec", spec_flag,
                  "twostep|onestep|pseudo|original|refined|phantom|blended|all");
  fit->add_option("--weights", weights_flag, "override weight mode: average|sum|free");
  fit->add_flag("--standardize", standardize_data, "z-score the data before fitting");
  fit->add_flag("--standardized-solution", standardized_solution,
                "report standardized estimates with delta-method SEs");
  fit->add_option("--format", format, "text|json")->check(CLI::IsMember({"text", "json"}));
  fit->add_option("--out", out_path, "write the report here instead of stdout");
  fit->add_option("--seed", seed, "seed for jittered restarts");

  CLI::App* simulate =
      app.add_subcommand("simulate", "draw data from a population given in the model script");
  simulate->add_option("--model", model_path, "model script with population.* options")
      ->required();
  simulate->add_option("--n", sim_n, "number of rows")->required();
  simulate->add_option("--seed", sim_seed, "overrides population.seed");
  simulate->add_option("--out", out_path, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(fit))
      return run_fit(model_path, data_path, cov_path, cov_n, spec_flag, weights_flag,
                     standardize_data, standardized_solution, format, out_path, seed);
    return run_simulate(model_path, sim_n, sim_seed, out_path);
  } catch (const csem::NotConverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  }
}
