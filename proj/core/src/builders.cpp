#include "csem/builders.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace csem {

namespace {

std::string cov_label(const std::string& a, const std::string& b) { return a + "~~" + b; }
std::string path_label(const std::string& out, const std::string& pred) {
  return out + "~" + pred;
}
std::string loading_label(const std::string& latent, const std::string& obs) {
  return latent + "=~" + obs;
}
std::string nu_name(const std::string& block, int m) {
  return "nu_" + block + "_" + std::to_string(m);
}

int anchor_index(const CompositeBlock& block) {
  const int k = static_cast<int>(block.components.size());
  if (block.pseudo_or_anchor.empty()) return k - 1;
  for (int j = 0; j < k; ++j)
    if (block.components[j] == block.pseudo_or_anchor) return j;
  throw Error("block " + block.name + ": " + block.pseudo_or_anchor +
              " is not one of its components");
}

struct StructuralNames {
  std::vector<std::string> order;  // composites first, then plain vars
  std::set<std::string> outcomes;
  std::vector<std::string> endogenous;  // outcomes in declaration order
  std::vector<std::string> plain;       // structural vars that are not composites
};

StructuralNames structural_names(const std::vector<CompositeBlock>& blocks,
                                 const StructuralSpec& structural) {
  StructuralNames out;
  std::set<std::string> block_names;
  for (const auto& b : blocks) block_names.insert(b.name);

  std::set<std::string> seen;
  auto note = [&](const std::string& name) {
    if (seen.insert(name).second) {
      out.order.push_back(name);
      if (!block_names.count(name)) out.plain.push_back(name);
    }
  };
  for (const auto& b : blocks) note(b.name);
  for (const auto& r : structural.regressions) {
    note(r.outcome);
    if (out.outcomes.insert(r.outcome).second) out.endogenous.push_back(r.outcome);
    for (const auto& p : r.predictors) note(p);
  }
  for (const auto& [a, b] : structural.covariances) note(a), note(b);

  std::set<std::string> referenced;
  for (const auto& r : structural.regressions) {
    referenced.insert(r.outcome);
    referenced.insert(r.predictors.begin(), r.predictors.end());
  }
  for (const auto& [a, b] : structural.covariances) referenced.insert(a), referenced.insert(b);
  for (const auto& b : blocks)
    if (!referenced.count(b.name))
      throw IsolatedComposite("composite " + b.name +
                              " does not appear in the structural model");
  return out;
}

void validate_blocks(const std::vector<CompositeBlock>& blocks) {
  if (blocks.empty()) throw Error("no composites declared");
  std::set<std::string> names, comps;
  for (const auto& b : blocks) {
    if (b.components.empty()) throw Error("composite " + b.name + " has no components");
    if (!names.insert(b.name).second) throw Error("duplicate composite name: " + b.name);
    for (const auto& c : b.components)
      if (!comps.insert(c).second)
        throw Error("component " + c + " appears in more than one composite");
    if (b.weight_mode == WeightMode::fixed &&
        b.fixed_values.size() != b.components.size())
      throw Error("composite " + b.name + ": fixed weights must cover every component");
  }
  for (const auto& b : blocks)
    if (comps.count(b.name)) throw Error(b.name + " is both a composite and a component");
}

/// Assembly state shared by the per-block builders.
struct Assembly {
  RamModelBuilder b;
  std::map<std::string, int> idx;          // every variable, by name
  std::vector<std::vector<int>> comp_idx;  // per block, component variable indices

  int add(const std::string& name, VarKind kind) {
    int i = b.add_variable(name, kind);
    idx[name] = i;
    return i;
  }
};

void free_helper_variances(Assembly& as, const std::vector<std::pair<int, std::string>>& nus,
                           bool correlate) {
  for (size_t m = 0; m < nus.size(); ++m) {
    as.b.free_s(nus[m].first, nus[m].first, cov_label(nus[m].second, nus[m].second));
    if (correlate)
      for (size_t l = m + 1; l < nus.size(); ++l)
        as.b.free_s(nus[m].first, nus[l].first, cov_label(nus[m].second, nus[l].second));
  }
}

BlockInfo make_info(const Assembly& as, const CompositeBlock& blk, size_t bi,
                    std::vector<std::string> weight_names, std::vector<int> composites) {
  BlockInfo info;
  info.name = blk.name;
  info.components = blk.components;
  info.spec = blk.spec;
  info.weight_mode = blk.weight_mode;
  info.weight_names = std::move(weight_names);
  info.component_indices = as.comp_idx[bi];
  info.composite_indices = std::move(composites);
  return info;
}

std::vector<std::string> add_constant_weights(Assembly& as, const CompositeBlock& blk,
                                              const std::vector<double>& w) {
  std::vector<std::string> names;
  for (size_t j = 0; j < blk.components.size(); ++j) {
    names.push_back("w_" + blk.components[j]);
    as.b.add_derived({names.back(), Expr::constant(w[j])});
  }
  return names;
}

BlockInfo build_pseudo_block(Assembly& as, const CompositeBlock& blk, size_t bi) {
  const std::vector<int>& x = as.comp_idx[bi];
  const int k = static_cast<int>(x.size());
  std::vector<double> w = resolve_weights(blk);
  const int pi = anchor_index(blk);
  if (w[pi] == 0.0)
    throw ZeroPseudoWeight("composite " + blk.name + ": pseudo indicator " +
                           blk.components[pi] + " has weight zero");

  int eta = as.add(blk.name, VarKind::latent);
  as.b.fix_a(x[pi], eta, 1.0 / w[pi]);
  as.b.fix_s(x[pi], x[pi], 0.0);
  for (int j = 0; j < k; ++j) {
    if (j == pi) continue;
    as.b.fix_a(x[pi], x[j], -w[j] / w[pi]);
    as.b.free_s(x[j], x[j], cov_label(blk.components[j], blk.components[j]));
    as.b.free_s(x[j], eta, cov_label(blk.name, blk.components[j]));
    for (int l = j + 1; l < k; ++l)
      if (l != pi) as.b.free_s(x[j], x[l], cov_label(blk.components[j], blk.components[l]));
  }
  return make_info(as, blk, bi, add_constant_weights(as, blk, w), {eta});
}

BlockInfo build_refined_block(Assembly& as, const CompositeBlock& blk, size_t bi) {
  const std::vector<int>& x = as.comp_idx[bi];
  const int k = static_cast<int>(x.size());
  if (blk.weight_mode == WeightMode::fixed)
    throw UnsupportedFixedValues(
        "composite " + blk.name +
        ": the refined higher-order specification supports sum, average or free "
        "weights, not arbitrary fixed values");

  int eta = as.add(blk.name, VarKind::latent);
  if (blk.weight_mode == WeightMode::free_) {
    const int a = anchor_index(blk);
    for (int m = 0; m < k; ++m) {
      if (m == a)
        as.b.fix_a(x[m], eta, 1.0);
      else
        as.b.free_a(x[m], eta, loading_label(blk.name, blk.components[m]));
    }
  } else {
    const double c = blk.weight_mode == WeightMode::unit_sum ? 1.0 : static_cast<double>(k);
    LinearConstraint sum;
    sum.rhs = c;
    for (int m = 0; m < k; ++m) {
      std::string label = loading_label(blk.name, blk.components[m]);
      as.b.free_a(x[m], eta, label, c / k);
      sum.terms.push_back({label, 1.0});
    }
    as.b.add_constraint(std::move(sum));
  }

  std::vector<std::pair<int, std::string>> nus;
  for (int m = 0; m + 1 < k; ++m) {
    std::string name = nu_name(blk.name, m + 1);
    int nu = as.add(name, VarKind::latent);
    nus.push_back({nu, name});
    as.b.fix_a(x[m], nu, 1.0);
    if (blk.weight_mode == WeightMode::free_)
      as.b.free_a(x[m + 1], nu, loading_label(name, blk.components[m + 1]), -1.0);
    else
      as.b.fix_a(x[m + 1], nu, -1.0);
  }
  for (int j = 0; j < k; ++j) as.b.fix_s(x[j], x[j], 0.0);
  free_helper_variances(as, nus, true);

  std::vector<int> composites = {eta};
  for (const auto& [nuidx, name] : nus) composites.push_back(nuidx);
  std::vector<std::string> wnames;
  for (int j = 0; j < k; ++j) {
    wnames.push_back("w_" + blk.components[j]);
    as.b.add_derived({wnames.back(), Expr::weight_entry(x, composites, 0, j)});
  }
  return make_info(as, blk, bi, std::move(wnames), std::move(composites));
}

BlockInfo build_original_block(Assembly& as, const CompositeBlock& blk, size_t bi) {
  const std::vector<int>& x = as.comp_idx[bi];
  const int k = static_cast<int>(x.size());
  if (blk.weight_mode != WeightMode::free_)
    throw UnsupportedFixedValues(
        "composite " + blk.name +
        ": the original higher-order specification estimates its weights; use free weights");
  if (k == 2) return build_refined_block(as, blk, bi);

  int eta = as.add(blk.name, VarKind::latent);
  as.b.fix_a(x[0], eta, 1.0);
  for (int i = 1; i < k; ++i)
    as.b.free_a(x[i], eta, loading_label(blk.name, blk.components[i]));

  std::vector<std::pair<int, std::string>> nus;
  for (int m = 0; m + 1 < k; ++m) {
    std::string name = nu_name(blk.name, m + 1);
    int nu = as.add(name, VarKind::latent);
    nus.push_back({nu, name});
    as.b.free_a(x[m], nu, loading_label(name, blk.components[m]), -1.0);
    as.b.fix_a(x[m + 1], nu, 1.0);
    for (int i = m + 2; i < k; ++i)
      as.b.free_a(x[i], nu, loading_label(name, blk.components[i]), 0.0);
  }
  for (int j = 0; j < k; ++j) as.b.fix_s(x[j], x[j], 0.0);
  free_helper_variances(as, nus, false);

  std::vector<int> composites = {eta};
  for (const auto& [nuidx, name] : nus) composites.push_back(nuidx);
  std::vector<std::string> wnames;
  for (int j = 0; j < k; ++j) {
    wnames.push_back("w_" + blk.components[j]);
    as.b.add_derived({wnames.back(), Expr::weight_entry(x, composites, 0, j)});
  }
  return make_info(as, blk, bi, std::move(wnames), std::move(composites));
}

BlockInfo build_phantom_block(Assembly& as, const CompositeBlock& blk, size_t bi) {
  const std::vector<int>& x = as.comp_idx[bi];
  const int k = static_cast<int>(x.size());
  const bool free_mode = blk.weight_mode == WeightMode::free_;

  int eta = as.add(blk.name, VarKind::latent);
  std::vector<int> phantom(k);
  std::vector<std::string> wnames;
  std::vector<double> w;
  const int anchor = free_mode ? anchor_index(blk) : -1;
  if (!free_mode) {
    w = resolve_weights(blk);
    for (int j = 0; j < k; ++j)
      if (w[j] == 0.0)
        throw ZeroWeight("composite " + blk.name + ": component " + blk.components[j] +
                         " has weight zero; its loading 1/w is undefined");
  }
  for (int j = 0; j < k; ++j) {
    std::string pname = "p_" + blk.components[j];
    phantom[j] = as.add(pname, VarKind::latent);
    wnames.push_back("w_" + blk.components[j]);
    if (free_mode) {
      if (j == anchor) {
        as.b.fix_a(x[j], phantom[j], 1.0);
        as.b.add_derived({wnames.back(), Expr::constant(1.0)});
      } else {
        std::string label = loading_label(pname, blk.components[j]);
        as.b.free_a(x[j], phantom[j], label);
        as.b.add_derived({wnames.back(), Expr::recip(Expr::param(label))});
      }
    } else {
      as.b.fix_a(x[j], phantom[j], 1.0 / w[j]);
      as.b.add_derived({wnames.back(), Expr::constant(w[j])});
    }
    as.b.fix_s(x[j], x[j], 0.0);
    as.b.fix_s(phantom[j], phantom[j], 0.0);
  }

  LinearConstraint sum;
  sum.rhs = 1.0;
  for (int j = 0; j < k; ++j) {
    std::string label = loading_label(blk.name, "p_" + blk.components[j]);
    as.b.free_a(phantom[j], eta, label, 1.0 / k);
    sum.terms.push_back({label, 1.0});
  }
  as.b.add_constraint(std::move(sum));

  std::vector<std::pair<int, std::string>> nus;
  for (int m = 0; m + 1 < k; ++m) {
    std::string name = nu_name(blk.name, m + 1);
    int nu = as.add(name, VarKind::latent);
    nus.push_back({nu, name});
    as.b.fix_a(phantom[m], nu, 1.0);
    as.b.fix_a(phantom[m + 1], nu, -1.0);
  }
  free_helper_variances(as, nus, true);

  std::vector<int> composites = {eta};
  for (const auto& [nuidx, name] : nus) composites.push_back(nuidx);
  return make_info(as, blk, bi, std::move(wnames), std::move(composites));
}

BlockInfo build_blended_block(Assembly& as, const CompositeBlock& blk, size_t bi) {
  const std::vector<int>& x = as.comp_idx[bi];
  const int k = static_cast<int>(x.size());
  const bool free_mode = blk.weight_mode == WeightMode::free_;
  const int pi = anchor_index(blk);

  std::vector<double> w;
  if (!free_mode) {
    w = resolve_weights(blk);
    if (w[pi] == 0.0)
      throw ZeroPseudoWeight("composite " + blk.name + ": pseudo indicator " +
                             blk.components[pi] + " has weight zero");
  }

  int eta = as.add(blk.name, VarKind::latent);
  std::string pname = "p_" + blk.name;
  int p = as.add(pname, VarKind::latent);

  as.b.fix_a(x[pi], eta, free_mode ? 1.0 : 1.0 / w[pi]);
  as.b.fix_a(x[pi], p, -1.0);
  as.b.fix_s(x[pi], x[pi], 0.0);
  as.b.fix_s(p, p, 0.0);

  std::vector<std::string> wnames(k);
  wnames[pi] = "w_" + blk.components[pi];
  as.b.add_derived({wnames[pi], Expr::constant(free_mode ? 1.0 : w[pi])});

  std::vector<std::pair<int, std::string>> nus;
  int m = 0;
  for (int j = 0; j < k; ++j) {
    if (j == pi) continue;
    wnames[j] = "w_" + blk.components[j];
    if (free_mode) {
      std::string label = path_label(pname, blk.components[j]);
      as.b.free_a(p, x[j], label);
      as.b.add_derived({wnames[j], Expr::param(label)});
    } else {
      as.b.fix_a(p, x[j], w[j] / w[pi]);
      as.b.add_derived({wnames[j], Expr::constant(w[j])});
    }
    as.b.free_a(x[j], eta, loading_label(blk.name, blk.components[j]), 0.5);
    std::string name = nu_name(blk.name, ++m);
    int nu = as.add(name, VarKind::latent);
    nus.push_back({nu, name});
    as.b.fix_a(x[j], nu, 1.0);
    as.b.fix_s(x[j], x[j], 0.0);
  }
  free_helper_variances(as, nus, true);

  std::vector<int> composites = {eta};
  for (const auto& [nuidx, name] : nus) composites.push_back(nuidx);
  return make_info(as, blk, bi, std::move(wnames), std::move(composites));
}

void add_structural_layer(Assembly& as, const StructuralNames& names,
                          const StructuralSpec& structural) {
  auto index_of = [&](const std::string& name) {
    auto it = as.idx.find(name);
    if (it == as.idx.end()) throw Error("unknown structural variable: " + name);
    return it->second;
  };

  for (const auto& r : structural.regressions) {
    int out = index_of(r.outcome);
    for (const auto& pred : r.predictors) {
      int pv = index_of(pred);
      if (!as.b.has_a_cell(out, pv)) as.b.free_a(out, pv, path_label(r.outcome, pred));
    }
    if (!as.b.has_s_cell(out, out)) as.b.free_s(out, out, cov_label(r.outcome, r.outcome));
  }

  std::vector<std::string> exo;
  for (const auto& v : names.order)
    if (!names.outcomes.count(v)) exo.push_back(v);
  for (size_t i = 0; i < exo.size(); ++i) {
    int vi = index_of(exo[i]);
    if (!as.b.has_s_cell(vi, vi)) as.b.free_s(vi, vi, cov_label(exo[i], exo[i]));
    for (size_t j = i + 1; j < exo.size(); ++j) {
      int vj = index_of(exo[j]);
      if (!as.b.has_s_cell(vi, vj)) as.b.free_s(vi, vj, cov_label(exo[i], exo[j]));
    }
  }

  for (const auto& [a, c] : structural.covariances) {
    int ai = index_of(a), ci = index_of(c);
    if (!as.b.has_s_cell(ai, ci)) as.b.free_s(ai, ci, cov_label(a, c));
  }
}

std::vector<CompositeBlock> with_spec(std::vector<CompositeBlock> blocks, SpecKind spec) {
  for (auto& b : blocks) b.spec = spec;
  return blocks;
}

}  // namespace

std::vector<double> resolve_weights(const CompositeBlock& block) {
  const size_t k = block.components.size();
  switch (block.weight_mode) {
    case WeightMode::unit_sum:
      return std::vector<double>(k, 1.0);
    case WeightMode::average:
      return std::vector<double>(k, 1.0 / static_cast<double>(k));
    case WeightMode::fixed:
      if (block.fixed_values.size() != k)
        throw Error("composite " + block.name + ": fixed weights must cover every component");
      return block.fixed_values;
    case WeightMode::free_:
      throw FreeWeightsUnsupported("composite " + block.name +
                                   ": this specification requires fixed weights");
  }
  throw Error("unreachable");
}

std::vector<CovCell> saturation_plan(const std::vector<CompositeBlock>& blocks,
                                     const StructuralSpec& structural) {
  StructuralNames names = structural_names(blocks, structural);

  auto helpers = [](const CompositeBlock& blk) {
    std::vector<std::string> hs;
    if (blk.spec == SpecKind::pseudo_indicator) {
      const int k = static_cast<int>(blk.components.size());
      int pi = anchor_index(blk);
      for (int j = 0; j < k; ++j)
        if (j != pi) hs.push_back(blk.components[j]);
    } else {
      int count = static_cast<int>(blk.components.size()) - 1;
      for (int m = 1; m <= count; ++m) hs.push_back(nu_name(blk.name, m));
    }
    return hs;
  };

  std::vector<CovCell> plan;
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    if (blocks[bi].transmission != Transmission::mimic_two_step) continue;
    for (const auto& h : helpers(blocks[bi])) {
      for (size_t ci = 0; ci < blocks.size(); ++ci) {
        if (ci == bi) continue;
        if (ci > bi && blocks[ci].transmission == Transmission::mimic_two_step)
          for (const auto& h2 : helpers(blocks[ci])) plan.push_back({h, h2});
        plan.push_back({h, blocks[ci].name});
      }
      for (const auto& v : names.plain) plan.push_back({h, v});
    }
  }
  return plan;
}

BuiltModel build_component_model(const std::vector<CompositeBlock>& blocks,
                                 const StructuralSpec& structural) {
  validate_blocks(blocks);
  for (const auto& blk : blocks)
    if (blk.spec == SpecKind::two_step || blk.spec == SpecKind::one_step_modified)
      throw Error("composite " + blk.name +
                  ": two-step and one-step specifications cannot be mixed into a "
                  "component-level model");

  Assembly as;
  StructuralNames names = structural_names(blocks, structural);
  as.comp_idx.resize(blocks.size());
  for (size_t bi = 0; bi < blocks.size(); ++bi)
    for (const auto& c : blocks[bi].components)
      as.comp_idx[bi].push_back(as.add(c, VarKind::observed));
  for (const auto& v : names.plain) as.add(v, VarKind::observed);

  BuiltModel out;
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    switch (blocks[bi].spec) {
      case SpecKind::pseudo_indicator:
        out.blocks.push_back(build_pseudo_block(as, blocks[bi], bi));
        break;
      case SpecKind::ho_original:
        out.blocks.push_back(build_original_block(as, blocks[bi], bi));
        break;
      case SpecKind::ho_refined:
        out.blocks.push_back(build_refined_block(as, blocks[bi], bi));
        break;
      case SpecKind::ho_phantom:
        out.blocks.push_back(build_phantom_block(as, blocks[bi], bi));
        break;
      case SpecKind::ho_blended:
        out.blocks.push_back(build_blended_block(as, blocks[bi], bi));
        break;
      default:
        throw Error("unreachable");
    }
  }

  add_structural_layer(as, names, structural);

  for (const auto& cell : saturation_plan(blocks, structural)) {
    auto ia = as.idx.find(cell.a);
    auto ib = as.idx.find(cell.b);
    if (ia == as.idx.end() || ib == as.idx.end())
      throw Error("saturation cell names unknown variable: " + cell.a + "~~" + cell.b);
    if (!as.b.has_s_cell(ia->second, ib->second))
      as.b.free_s(ia->second, ib->second, cov_label(cell.a, cell.b));
  }

  out.endogenous = names.endogenous;
  out.model = as.b.build();
  return out;
}

BuiltModel build_pseudo_indicator(const std::vector<CompositeBlock>& blocks,
                                  const StructuralSpec& structural) {
  return build_component_model(with_spec(blocks, SpecKind::pseudo_indicator), structural);
}
BuiltModel build_ho_original(const std::vector<CompositeBlock>& blocks,
                             const StructuralSpec& structural) {
  return build_component_model(with_spec(blocks, SpecKind::ho_original), structural);
}
BuiltModel build_ho_refined(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural) {
  return build_component_model(with_spec(blocks, SpecKind::ho_refined), structural);
}
BuiltModel build_ho_phantom(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural) {
  return build_component_model(with_spec(blocks, SpecKind::ho_phantom), structural);
}
BuiltModel build_ho_blended(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural) {
  return build_component_model(with_spec(blocks, SpecKind::ho_blended), structural);
}

BuiltModel build_one_step_modified(const std::vector<CompositeBlock>& blocks,
                                   const StructuralSpec& structural) {
  validate_blocks(blocks);
  StructuralNames names = structural_names(blocks, structural);

  std::map<std::string, size_t> block_of;
  for (size_t bi = 0; bi < blocks.size(); ++bi) block_of[blocks[bi].name] = bi;

  std::set<std::string> outcome_blocks, predictor_blocks;
  for (const auto& r : structural.regressions) {
    if (block_of.count(r.outcome)) outcome_blocks.insert(r.outcome);
    for (const auto& p : r.predictors)
      if (block_of.count(p)) predictor_blocks.insert(p);
  }
  for (const auto& name : outcome_blocks)
    if (predictor_blocks.count(name))
      throw Error("composite " + name +
                  ": the one-step specification supports composites that are either "
                  "predictors or outcomes, not both");
  for (const auto& blk : blocks) {
    if (blk.weight_mode != WeightMode::free_) continue;
    if (outcome_blocks.count(blk.name))
      throw FreeWeightsOnOutcome("composite " + blk.name +
                                 ": the one-step specification cannot free the weights of "
                                 "an outcome composite");
    throw FreeWeightsUnsupported("composite " + blk.name +
                                 ": the one-step specification requires fixed weights");
  }

  Assembly as;
  as.comp_idx.resize(blocks.size());
  for (size_t bi = 0; bi < blocks.size(); ++bi)
    for (const auto& c : blocks[bi].components)
      as.comp_idx[bi].push_back(as.add(c, VarKind::observed));
  for (const auto& v : names.plain) as.add(v, VarKind::observed);

  BuiltModel out;
  out.r2_available = false;
  std::vector<std::vector<double>> weights(blocks.size());
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    const CompositeBlock& blk = blocks[bi];
    weights[bi] = resolve_weights(blk);
    int eta = as.add(blk.name, VarKind::latent);
    for (size_t j = 0; j < blk.components.size(); ++j)
      as.b.fix_a(eta, as.comp_idx[bi][j], weights[bi][j]);
    as.b.fix_s(eta, eta, 0.0);
    out.blocks.push_back(make_info(as, blk, bi, add_constant_weights(as, blk, weights[bi]),
                                   {eta}));
  }

  // exogenous side: every predictor-block component and every plain exogenous
  // variable covaries freely with all the others
  std::vector<std::string> exo;
  for (size_t bi = 0; bi < blocks.size(); ++bi)
    if (!outcome_blocks.count(blocks[bi].name))
      exo.insert(exo.end(), blocks[bi].components.begin(), blocks[bi].components.end());
  for (const auto& v : names.plain)
    if (!names.outcomes.count(v)) exo.push_back(v);
  for (size_t i = 0; i < exo.size(); ++i) {
    int vi = as.idx.at(exo[i]);
    if (!as.b.has_s_cell(vi, vi)) as.b.free_s(vi, vi, cov_label(exo[i], exo[i]));
    for (size_t j = i + 1; j < exo.size(); ++j) {
      int vj = as.idx.at(exo[j]);
      if (!as.b.has_s_cell(vi, vj)) as.b.free_s(vi, vj, cov_label(exo[i], exo[j]));
    }
  }

  for (const auto& r : structural.regressions) {
    if (block_of.count(r.outcome)) {
      size_t bi = block_of.at(r.outcome);
      const CompositeBlock& blk = blocks[bi];
      for (size_t j = 0; j < blk.components.size(); ++j) {
        int xj = as.comp_idx[bi][j];
        if (!as.b.has_s_cell(xj, xj))
          as.b.free_s(xj, xj, cov_label(blk.components[j], blk.components[j]));
      }
      for (const auto& pred : r.predictors) {
        int pv = as.idx.at(pred);
        ExprPtr sum;
        for (size_t j = 0; j < blk.components.size(); ++j) {
          std::string label = path_label(blk.components[j], pred);
          if (!as.b.has_a_cell(as.comp_idx[bi][j], pv))
            as.b.free_a(as.comp_idx[bi][j], pv, label);
          ExprPtr term = Expr::mul(Expr::constant(weights[bi][j]), Expr::param(label));
          sum = sum ? Expr::add(sum, term) : term;
        }
        as.b.add_derived({path_label(r.outcome, pred), sum});
      }
    } else {
      int ov = as.idx.at(r.outcome);
      for (const auto& pred : r.predictors) {
        int pv = as.idx.at(pred);
        if (!as.b.has_a_cell(ov, pv)) as.b.free_a(ov, pv, path_label(r.outcome, pred));
      }
      if (!as.b.has_s_cell(ov, ov)) as.b.free_s(ov, ov, cov_label(r.outcome, r.outcome));
    }
  }

  for (const auto& [a, c] : structural.covariances) {
    if (block_of.count(a) || block_of.count(c)) {
      if (predictor_blocks.count(a) && predictor_blocks.count(c)) continue;
      throw Error("covariance " + a + "~~" + c +
                  " is not available in the one-step specification");
    }
    int ai = as.idx.at(a), ci = as.idx.at(c);
    if (!as.b.has_s_cell(ai, ci)) as.b.free_s(ai, ci, cov_label(a, c));
  }

  out.endogenous = names.endogenous;
  out.model = as.b.build();
  return out;
}

TwoStepResult build_two_step(const std::vector<CompositeBlock>& blocks,
                             const StructuralSpec& structural, const Dataset& data) {
  validate_blocks(blocks);
  StructuralNames names = structural_names(blocks, structural);

  const long n = data.values.rows();
  TwoStepResult out;
  out.scores.values.resize(n, static_cast<long>(blocks.size() + names.plain.size()));

  std::vector<std::vector<double>> weights;
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    const CompositeBlock& blk = blocks[bi];
    weights.push_back(resolve_weights(blk));
    Eigen::VectorXd score = Eigen::VectorXd::Zero(n);
    for (size_t j = 0; j < blk.components.size(); ++j) {
      int col = data.column_index(blk.components[j]);
      if (col < 0) throw MissingColumn("data has no column " + blk.components[j]);
      score += weights[bi][j] * data.values.col(col);
    }
    out.scores.columns.push_back(blk.name);
    out.scores.values.col(static_cast<long>(bi)) = score;
  }
  for (size_t vi = 0; vi < names.plain.size(); ++vi) {
    int col = data.column_index(names.plain[vi]);
    if (col < 0) throw MissingColumn("data has no column " + names.plain[vi]);
    out.scores.columns.push_back(names.plain[vi]);
    out.scores.values.col(static_cast<long>(blocks.size() + vi)) = data.values.col(col);
  }

  Assembly as;
  as.comp_idx.resize(blocks.size());
  for (const auto& name : out.scores.columns) as.add(name, VarKind::observed);
  add_structural_layer(as, names, structural);

  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    out.step2.blocks.push_back(make_info(as, blocks[bi], bi,
                                         add_constant_weights(as, blocks[bi], weights[bi]),
                                         {as.idx.at(blocks[bi].name)}));
    out.step2.blocks.back().spec = SpecKind::two_step;
  }
  out.step2.endogenous = names.endogenous;
  out.step2.model = as.b.build();
  return out;
}

}  // namespace csem
