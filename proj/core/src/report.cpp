#include "csem/report.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "csem/fit_metrics.hpp"

namespace csem {

std::string format_number(double value, int decimals) {
  if (!std::isfinite(value)) return "NA";
  double scale = std::pow(10.0, decimals);
  double rounded = std::nearbyint(value * scale);  // ties to even by default
  long long as_int = static_cast<long long>(rounded);
  bool negative = as_int < 0;
  unsigned long long magnitude =
      negative ? static_cast<unsigned long long>(-as_int) : static_cast<unsigned long long>(as_int);
  unsigned long long unit = static_cast<unsigned long long>(scale);
  std::ostringstream out;
  if (negative && magnitude != 0) out << '-';
  out << magnitude / unit;
  if (decimals > 0)
    out << '.' << std::setw(decimals) << std::setfill('0') << magnitude % unit;
  return out.str();
}

SpecReport make_spec_report(const std::string& spec_name, const BuiltModel& built,
                            const FitResult& result) {
  SpecReport rep;
  rep.spec = spec_name;
  rep.converged = result.converged;
  rep.iterations = result.iterations;
  rep.retries = result.retries_used;
  rep.fit = result.fit;
  rep.r2_available = built.r2_available;

  for (const auto& label : built.model.free_labels()) {
    ParamRow row;
    row.name = label;
    row.estimate = result.theta_hat.at(label);
    row.se = result.se.at(label);
    auto std_it = result.standardized.find(label);
    if (std_it != result.standardized.end()) {
      row.has_std = true;
      row.std_estimate = std_it->second.estimate;
      row.std_se = std_it->second.se;
    }
    rep.parameters.push_back(std::move(row));
  }

  std::set<std::string> weight_names;
  for (const auto& block : built.blocks)
    weight_names.insert(block.weight_names.begin(), block.weight_names.end());
  for (const auto& block : built.blocks)
    for (const auto& name : block.weight_names) {
      auto it = result.derived.find(name);
      if (it == result.derived.end()) continue;
      ParamRow row;
      row.name = name;
      row.estimate = it->second.estimate;
      row.se = it->second.se;
      row.has_se = it->second.se > 0.0;
      rep.weights.push_back(std::move(row));
    }
  for (const auto& [name, est] : result.derived) {
    if (weight_names.count(name)) continue;
    ParamRow row;
    row.name = name;
    row.estimate = est.estimate;
    row.se = est.se;
    rep.effects.push_back(std::move(row));
  }

  if (built.r2_available)
    for (const auto& endo : built.endogenous)
      rep.r_squared.push_back({endo, r_squared(built.model, result.theta_full, endo)});
  return rep;
}

namespace {

void print_rows(std::ostringstream& out, const std::string& title,
                const std::vector<ParamRow>& rows, bool with_std) {
  if (rows.empty()) return;
  out << title << "\n";
  out << "  " << std::left << std::setw(24) << "name" << std::right << std::setw(10)
      << "estimate" << std::setw(10) << "std.err";
  if (with_std) out << std::setw(10) << "std.est" << std::setw(10) << "std.err";
  out << "\n";
  for (const auto& row : rows) {
    out << "  " << std::left << std::setw(24) << row.name << std::right << std::setw(10)
        << format_number(row.estimate) << std::setw(10)
        << (row.has_se ? format_number(row.se) : std::string("NA"));
    if (with_std) {
      if (row.has_std)
        out << std::setw(10) << format_number(row.std_estimate) << std::setw(10)
            << format_number(row.std_se);
      else
        out << std::setw(10) << "NA" << std::setw(10) << "NA";
    }
    out << "\n";
  }
}

}  // namespace

std::string render_text(const RunReport& report) {
  std::ostringstream out;
  out << "n = " << report.n << ", seed = " << report.seed;
  if (!report.weights_mode.empty()) out << ", weights = " << report.weights_mode;
  out << "\n";

  for (const auto& spec : report.specs) {
    out << "\nspecification: " << spec.spec << "\n";
    out << "converged: " << (spec.converged ? "yes" : "no") << " (" << spec.iterations
        << " iterations";
    if (spec.retries > 0) out << ", " << spec.retries << " restarts";
    out << ")\n";

    bool with_std = false;
    for (const auto& row : spec.parameters) with_std = with_std || row.has_std;
    print_rows(out, "parameters", spec.parameters, with_std);
    print_rows(out, "weights", spec.weights, false);
    print_rows(out, "composite effects", spec.effects, false);

    out << "fit\n";
    out << "  chisq = " << format_number(spec.fit.chisq) << ", df = " << spec.fit.df
        << ", rmsea = " << format_number(spec.fit.rmsea)
        << ", srmr = " << format_number(spec.fit.srmr) << "\n";
    out << "  loglik = " << format_number(spec.fit.loglik)
        << ", aic = " << format_number(spec.fit.aic)
        << ", bic = " << format_number(spec.fit.bic) << ", free parameters = "
        << spec.fit.n_params << "\n";
    if (spec.r2_available) {
      for (const auto& [name, value] : spec.r_squared)
        out << "  r.squared(" << name << ") = " << format_number(value) << "\n";
    } else {
      out << "  r.squared = NA\n";
    }
  }
  return out.str();
}

std::string render_json(const RunReport& report) {
  using json = nlohmann::ordered_json;

  auto rows_to_json = [](const std::vector<ParamRow>& rows, bool with_std) {
    json out = json::array();
    for (const auto& row : rows) {
      json r;
      r["name"] = row.name;
      r["estimate"] = row.estimate;
      if (row.has_se)
        r["se"] = row.se;
      else
        r["se"] = nullptr;
      if (with_std) {
        if (row.has_std) {
          r["std_estimate"] = row.std_estimate;
          r["std_se"] = row.std_se;
        } else {
          r["std_estimate"] = nullptr;
          r["std_se"] = nullptr;
        }
      }
      out.push_back(std::move(r));
    }
    return out;
  };

  json doc;
  doc["schema"] = "report_v1";
  doc["n"] = report.n;
  doc["seed"] = report.seed;
  if (!report.weights_mode.empty()) doc["weights"] = report.weights_mode;
  doc["specs"] = json::array();
  for (const auto& spec : report.specs) {
    bool with_std = false;
    for (const auto& row : spec.parameters) with_std = with_std || row.has_std;
    json s;
    s["spec"] = spec.spec;
    s["converged"] = spec.converged;
    s["iterations"] = spec.iterations;
    s["retries"] = spec.retries;
    s["parameters"] = rows_to_json(spec.parameters, with_std);
    s["weights"] = rows_to_json(spec.weights, false);
    s["effects"] = rows_to_json(spec.effects, false);
    json fit;
    fit["chisq"] = spec.fit.chisq;
    fit["df"] = spec.fit.df;
    fit["rmsea"] = spec.fit.rmsea;
    fit["srmr"] = spec.fit.srmr;
    fit["loglik"] = spec.fit.loglik;
    fit["aic"] = spec.fit.aic;
    fit["bic"] = spec.fit.bic;
    fit["n_params"] = spec.fit.n_params;
    fit["saturated"] = spec.fit.saturated;
    s["fit"] = std::move(fit);
    if (spec.r2_available) {
      json r2;
      for (const auto& [name, value] : spec.r_squared) r2[name] = value;
      s["r_squared"] = std::move(r2);
    } else {
      s["r_squared"] = nullptr;
    }
    doc["specs"].push_back(std::move(s));
  }
  return doc.dump(2) + "\n";
}

}  // namespace csem
