#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csem/dataset.hpp"
#include "csem/ram.hpp"

namespace csem {

enum class WeightMode { unit_sum, average, fixed, free_ };

enum class SpecKind {
  two_step,
  one_step_modified,
  pseudo_indicator,
  ho_original,
  ho_refined,
  ho_phantom,
  ho_blended,
};

enum class Transmission { full, mimic_two_step };

/// Declarative description of one composite.
struct CompositeBlock {
  std::string name;
  std::vector<std::string> components;
  WeightMode weight_mode = WeightMode::average;
  std::vector<double> fixed_values;  // aligned with components; fixed mode only
  SpecKind spec = SpecKind::ho_blended;
  Transmission transmission = Transmission::full;
  /// Pseudo indicator (pseudo/blended) or scale anchor (free-weight H-O
  /// variants). Defaults to the last-listed component.
  std::string pseudo_or_anchor;

  bool operator==(const CompositeBlock&) const = default;
};

struct Regression {
  std::string outcome;
  std::vector<std::string> predictors;

  bool operator==(const Regression&) const = default;
};

struct StructuralSpec {
  std::vector<Regression> regressions;
  std::vector<std::pair<std::string, std::string>> covariances;

  bool operator==(const StructuralSpec&) const = default;
};

struct BlockInfo {
  std::string name;
  std::vector<std::string> components;
  SpecKind spec = SpecKind::ho_blended;
  WeightMode weight_mode = WeightMode::average;
  std::vector<std::string> weight_names;  // derived-quantity name per component
  std::vector<int> component_indices;     // into model variables
  std::vector<int> composite_indices;     // eta + helpers, the spanning set
};

struct BuiltModel {
  RamModel model;
  std::vector<BlockInfo> blocks;
  std::vector<std::string> endogenous;  // regression outcomes, model order
  bool r2_available = true;
};

struct TwoStepResult {
  Dataset scores;  // composite scores plus any plain structural columns
  BuiltModel step2;
};

/// Covariance cell to free, by variable name.
struct CovCell {
  std::string a, b;
};

/// Resolved fixed weights of a block (unit_sum/average/fixed). Throws
/// FreeWeightsUnsupported for free mode.
std::vector<double> resolve_weights(const CompositeBlock& block);

TwoStepResult build_two_step(const std::vector<CompositeBlock>& blocks,
                             const StructuralSpec& structural, const Dataset& data);
BuiltModel build_one_step_modified(const std::vector<CompositeBlock>& blocks,
                                   const StructuralSpec& structural);
BuiltModel build_pseudo_indicator(const std::vector<CompositeBlock>& blocks,
                                  const StructuralSpec& structural);
BuiltModel build_ho_original(const std::vector<CompositeBlock>& blocks,
                             const StructuralSpec& structural);
BuiltModel build_ho_refined(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural);
BuiltModel build_ho_phantom(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural);
BuiltModel build_ho_blended(const std::vector<CompositeBlock>& blocks,
                            const StructuralSpec& structural);

/// Generic component-level assembler dispatching on each block's spec
/// (pseudo/original/refined/phantom/blended may be mixed).
BuiltModel build_component_model(const std::vector<CompositeBlock>& blocks,
                                 const StructuralSpec& structural);

/// Cross-block covariance cells freed by each block's transmission policy.
/// The within-block covariances (excrescent-variable correlations, pseudo
/// component covariances) are part of the block structure itself, so with
/// full transmission everywhere the plan is empty.
std::vector<CovCell> saturation_plan(const std::vector<CompositeBlock>& blocks,
                                     const StructuralSpec& structural);

}  // namespace csem
