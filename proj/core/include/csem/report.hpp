#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csem/builders.hpp"
#include "csem/estimator.hpp"

namespace csem {

struct ParamRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  bool has_se = true;
  bool has_std = false;
  double std_estimate = 0.0;
  double std_se = 0.0;
};

struct SpecReport {
  std::string spec;
  bool converged = false;
  int iterations = 0;
  int retries = 0;
  std::vector<ParamRow> parameters;
  std::vector<ParamRow> weights;
  std::vector<ParamRow> effects;  // composite-level effects derived from components
  FitStatistics fit;
  bool r2_available = true;
  std::vector<std::pair<std::string, double>> r_squared;
};

struct RunReport {
  long n = 0;
  std::uint64_t seed = 0;
  std::string weights_mode;
  std::vector<SpecReport> specs;
};

/// Rounds half-to-even at the given number of decimals; non-finite -> "NA".
std::string format_number(double value, int decimals = 3);

SpecReport make_spec_report(const std::string& spec_name, const BuiltModel& built,
                            const FitResult& result);

std::string render_text(const RunReport& report);

/// Versioned JSON ("report_v1"), byte-deterministic for identical inputs.
std::string render_json(const RunReport& report);

}  // namespace csem
