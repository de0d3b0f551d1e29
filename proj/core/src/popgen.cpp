#include "csem/popgen.hpp"

#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "csem/builders.hpp"
#include "csem/errors.hpp"

namespace csem {

namespace {

void validate(const PopulationSpec& spec) {
  if (spec.blocks.empty()) throw Error("population has no composites");
  std::set<std::string> names;
  for (const auto& b : spec.blocks) {
    if (!names.insert(b.name).second) throw Error("duplicate composite name: " + b.name);
    const long k = static_cast<long>(b.components.size());
    if (k == 0) throw Error("composite " + b.name + " has no components");
    if (b.weights.size() != k || b.sigma_x.rows() != k || b.sigma_x.cols() != k)
      throw Error("composite " + b.name + ": weights/sigma dimensions do not match");
    Eigen::LLT<Eigen::MatrixXd> llt(b.sigma_x);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("composite " + b.name +
                                ": component covariance is not positive definite");
  }
}

}  // namespace

Eigen::MatrixXd composite_sigma(const PopulationSpec& spec) {
  validate(spec);
  const int nb = static_cast<int>(spec.blocks.size());
  std::map<std::string, int> idx;
  Eigen::VectorXd var(nb);
  for (int b = 0; b < nb; ++b) {
    idx[spec.blocks[b].name] = b;
    var[b] = spec.blocks[b].weights.dot(spec.blocks[b].sigma_x * spec.blocks[b].weights);
  }

  std::set<std::string> outcomes;
  for (const auto& p : spec.paths) {
    if (!idx.count(p.outcome)) throw Error("unknown composite in path: " + p.outcome);
    if (!outcomes.insert(p.outcome).second)
      throw Error("composite " + p.outcome + " has two path definitions");
  }

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nb, nb);
  std::set<int> defined;
  for (int b = 0; b < nb; ++b)
    if (!outcomes.count(spec.blocks[b].name)) {
      c(b, b) = var[b];
      defined.insert(b);
    }
  for (const auto& [a, bname, value] : spec.exo_covariances) {
    if (!idx.count(a) || !idx.count(bname))
      throw Error("unknown composite in covariance: " + a + "~~" + bname);
    if (outcomes.count(a) || outcomes.count(bname))
      throw Error("covariance " + a + "~~" + bname + " involves an endogenous composite");
    c(idx[a], idx[bname]) = value;
    c(idx[bname], idx[a]) = value;
  }

  for (const auto& p : spec.paths) {
    const int out = idx[p.outcome];
    for (const auto& [pred, coef] : p.terms) {
      (void)coef;
      if (!idx.count(pred)) throw Error("unknown composite in path: " + pred);
      if (!defined.count(idx[pred]))
        throw Error("path for " + p.outcome + " uses " + pred +
                    " before it is defined; order paths acyclically");
    }
    for (int z : defined) {
      double cov = 0.0;
      for (const auto& [pred, coef] : p.terms) cov += coef * c(idx[pred], z);
      c(out, z) = cov;
      c(z, out) = cov;
    }
    double explained = 0.0;
    for (const auto& [pa, ca] : p.terms)
      for (const auto& [pb, cb] : p.terms) explained += ca * cb * c(idx[pa], idx[pb]);
    if (explained > var[out] + 1e-12)
      throw NotPositiveDefinite("composite " + p.outcome +
                                ": structural paths explain more variance than "
                                "w' Sigma_x w allows");
    c(out, out) = var[out];
    defined.insert(out);
  }
  return c;
}

Eigen::MatrixXd population_sigma(const PopulationSpec& spec) {
  Eigen::MatrixXd c = composite_sigma(spec);
  const int nb = static_cast<int>(spec.blocks.size());

  int p = 0;
  std::vector<int> offset(nb);
  for (int b = 0; b < nb; ++b) {
    offset[b] = p;
    p += static_cast<int>(spec.blocks[b].components.size());
  }

  // lambda_b = Sigma_x w / (w' Sigma_x w): the components' regression
  // loadings on their own composite
  std::vector<Eigen::VectorXd> lambda(nb);
  for (int b = 0; b < nb; ++b) {
    Eigen::VectorXd sw = spec.blocks[b].sigma_x * spec.blocks[b].weights;
    lambda[b] = sw / spec.blocks[b].weights.dot(sw);
  }

  Eigen::MatrixXd sigma(p, p);
  for (int a = 0; a < nb; ++a) {
    const int ka = static_cast<int>(spec.blocks[a].components.size());
    sigma.block(offset[a], offset[a], ka, ka) = spec.blocks[a].sigma_x;
    for (int b = a + 1; b < nb; ++b) {
      const int kb = static_cast<int>(spec.blocks[b].components.size());
      Eigen::MatrixXd cross = lambda[a] * c(a, b) * lambda[b].transpose();
      sigma.block(offset[a], offset[b], ka, kb) = cross;
      sigma.block(offset[b], offset[a], kb, ka) = cross.transpose();
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("implied population covariance is not positive definite");
  return sigma;
}

Dataset sample(const PopulationSpec& spec, long n) {
  if (n < 2) throw TooFewRows("need at least 2 rows, got " + std::to_string(n));
  Eigen::MatrixXd sigma = population_sigma(spec);
  const int p = static_cast<int>(sigma.rows());
  Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset out;
  for (const auto& b : spec.blocks)
    out.columns.insert(out.columns.end(), b.components.begin(), b.components.end());
  out.values.resize(n, p);
  Eigen::VectorXd z(p);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[j] = normal(rng);
    out.values.row(i) = (l * z).transpose();
  }
  return out;
}

Eigen::MatrixXd random_pd(int p, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(p, 2 * p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < 2 * p; ++j) a(i, j) = normal(rng);
  Eigen::MatrixXd s = a * a.transpose() / (2.0 * p);
  Eigen::VectorXd d = s.diagonal().array().sqrt().inverse();
  return d.asDiagonal() * s * d.asDiagonal();
}

namespace {

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const char* start = item.c_str();
    char* stop = nullptr;
    double v = std::strtod(start, &stop);
    while (*stop == ' ' || *stop == '\t') ++stop;
    if (stop == start || *stop != '\0') throw Error(what + ": cannot read number from '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(what + ": no numbers given");
  return out;
}

}  // namespace

PopulationSpec population_from_program(const ModelProgram& program) {
  PopulationSpec spec;
  auto option = [&](const std::string& key) -> const std::string* {
    auto it = program.options.find(key);
    return it == program.options.end() ? nullptr : &it->second;
  };

  for (const auto& blk : program.blocks) {
    PopulationBlock pb;
    pb.name = blk.name;
    pb.components = blk.components;
    const int k = static_cast<int>(blk.components.size());

    if (const std::string* w = option("population." + blk.name + ".weights")) {
      std::vector<double> vals = parse_numbers(*w, "population." + blk.name + ".weights");
      if (static_cast<int>(vals.size()) != k)
        throw Error("population." + blk.name + ".weights: expected " + std::to_string(k) +
                    " values");
      pb.weights = Eigen::Map<Eigen::VectorXd>(vals.data(), k);
    } else if (blk.weight_mode != WeightMode::free_) {
      std::vector<double> vals = resolve_weights(blk);
      pb.weights = Eigen::Map<Eigen::VectorXd>(vals.data(), k);
    } else {
      throw Error("composite " + blk.name +
                  " has free weights; set population." + blk.name + ".weights");
    }

    if (const std::string* s = option("population." + blk.name + ".sigma")) {
      pb.sigma_x.resize(k, k);
      std::istringstream rows(*s);
      std::string row;
      int r = 0;
      while (std::getline(rows, row, ';')) {
        if (r >= k) throw Error("population." + blk.name + ".sigma: too many rows");
        std::vector<double> vals = parse_numbers(row, "population." + blk.name + ".sigma");
        if (static_cast<int>(vals.size()) != k)
          throw Error("population." + blk.name + ".sigma: row " + std::to_string(r + 1) +
                      " needs " + std::to_string(k) + " values");
        for (int j = 0; j < k; ++j) pb.sigma_x(r, j) = vals[j];
        ++r;
      }
      if (r != k) throw Error("population." + blk.name + ".sigma: expected " +
                              std::to_string(k) + " rows");
    } else {
      pb.sigma_x = Eigen::MatrixXd::Identity(k, k);
    }
    spec.blocks.push_back(std::move(pb));
  }

  for (const auto& r : program.structural.regressions) {
    const std::string* coefs = option("population.path." + r.outcome);
    if (!coefs)
      throw Error("set population.path." + r.outcome +
                  " to give the structural coefficients");
    PopulationPath path;
    path.outcome = r.outcome;
    std::istringstream terms(*coefs);
    std::string term;
    while (std::getline(terms, term, '+')) {
      size_t star = term.find('*');
      if (star == std::string::npos)
        throw Error("population.path." + r.outcome + ": term '" + term +
                    "' is not Predictor*coefficient");
      std::string name = term.substr(0, star);
      size_t b = name.find_first_not_of(" \t");
      size_t e = name.find_last_not_of(" \t");
      name = b == std::string::npos ? "" : name.substr(b, e - b + 1);
      std::vector<double> v = parse_numbers(term.substr(star + 1),
                                            "population.path." + r.outcome);
      if (v.size() != 1)
        throw Error("population.path." + r.outcome + ": one coefficient per term");
      path.terms.push_back({name, v[0]});
    }
    spec.paths.push_back(std::move(path));
  }

  for (const auto& [key, value] : program.options) {
    if (key.rfind("population.cov.", 0) != 0) continue;
    std::string rest = key.substr(15);
    size_t dot = rest.find('.');
    if (dot == std::string::npos)
      throw Error(key + ": expected population.cov.<A>.<B>");
    std::vector<double> v = parse_numbers(value, key);
    if (v.size() != 1) throw Error(key + ": one value expected");
    spec.exo_covariances.push_back({rest.substr(0, dot), rest.substr(dot + 1), v[0]});
  }

  if (const std::string* seed = option("population.seed"))
    spec.seed = static_cast<std::uint64_t>(std::strtoull(seed->c_str(), nullptr, 10));
  return spec;
}

}  // namespace csem
