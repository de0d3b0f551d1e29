#pragma once

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "csem/errors.hpp"

namespace csem {

enum class VarKind { observed, latent };

struct Variable {
  std::string name;
  VarKind kind = VarKind::observed;
};

enum class MatrixId { A, S };
enum class CellStatus { fixed, free_ };

/// One entry of the asymmetric-path matrix A or the symmetric matrix S.
/// S cells are stored canonically with row >= col. For free cells `value`
/// is a starting hint (NaN means "let the estimator decide"); labels shared
/// between cells impose an equality constraint.
struct ParameterCell {
  MatrixId matrix = MatrixId::A;
  int row = 0;
  int col = 0;
  double value = 0.0;
  CellStatus status = CellStatus::fixed;
  std::string label;
};

/// sum_i coefficient_i * theta(label_i) = rhs
struct LinearConstraint {
  std::vector<std::pair<std::string, double>> terms;
  double rhs = 0.0;
};

/// Arithmetic expression over parameter labels. `weight_entry` evaluates
/// entry (out_row, out_col) of the inverse of the reduced-form loading block
/// of the listed component variables on the listed composite variables,
/// i.e. the corresponding block of (I - A)^-1.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { constant, param, add, sub, mul, div, neg, recip, weight_entry };

  Kind kind = Kind::constant;
  double value = 0.0;
  std::string label;
  ExprPtr lhs, rhs;
  std::vector<int> components;
  std::vector<int> composites;
  int out_row = 0;
  int out_col = 0;

  static ExprPtr constant(double v);
  static ExprPtr param(std::string label);
  static ExprPtr add(ExprPtr a, ExprPtr b);
  static ExprPtr sub(ExprPtr a, ExprPtr b);
  static ExprPtr mul(ExprPtr a, ExprPtr b);
  static ExprPtr div(ExprPtr a, ExprPtr b);
  static ExprPtr neg(ExprPtr a);
  static ExprPtr recip(ExprPtr a);
  static ExprPtr weight_entry(std::vector<int> components, std::vector<int> composites,
                              int out_row, int out_col);
};

struct DerivedQuantity {
  std::string name;
  ExprPtr expr;
};

/// Affine map from the reduced free-parameter vector to the full vector of
/// free-label values: full = M * reduced + offset. Produced once per model
/// by eliminating the linear equality constraints via pivot substitution.
class ParameterMap {
 public:
  int reduced_dim() const { return static_cast<int>(reduced_labels_.size()); }
  int full_dim() const { return static_cast<int>(free_labels_.size()); }

  const std::vector<std::string>& free_labels() const { return free_labels_; }
  const std::vector<std::string>& reduced_labels() const { return reduced_labels_; }

  Eigen::VectorXd expand(const Eigen::VectorXd& theta_reduced) const;
  /// Picks the non-pivot entries out of a full free-label vector.
  Eigen::VectorXd reduce(const Eigen::VectorXd& theta_full) const;

  const Eigen::MatrixXd& expansion_matrix() const { return m_; }
  const Eigen::VectorXd& expansion_offset() const { return offset_; }

 private:
  friend class RamModel;
  friend ParameterMap reduce_constraints_impl(const class RamModel&);
  std::vector<std::string> free_labels_;
  std::vector<std::string> reduced_labels_;
  std::vector<int> reduced_index_;  // position of each reduced label in free_labels_
  Eigen::MatrixXd m_;
  Eigen::VectorXd offset_;
};

/// Immutable RAM-form model: path matrix A, symmetric matrix S, observed
/// filter given by observed_order, linear equality constraints, and derived
/// quantities. Construct through RamModelBuilder.
class RamModel {
 public:
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<ParameterCell>& cells() const { return cells_; }
  const std::vector<LinearConstraint>& constraints() const { return constraints_; }
  const std::vector<DerivedQuantity>& derived() const { return derived_; }
  const std::vector<std::string>& observed_order() const { return observed_order_; }
  const std::vector<int>& observed_indices() const { return observed_indices_; }

  int var_index(const std::string& name) const;        // -1 if absent
  const Variable& variable(int index) const { return variables_[index]; }
  int num_variables() const { return static_cast<int>(variables_.size()); }

  /// Free labels in declaration order; theta vectors are indexed this way.
  const std::vector<std::string>& free_labels() const { return free_labels_; }
  int label_index(const std::string& label) const;     // -1 if absent
  bool is_fixed_label(const std::string& label) const;
  double fixed_label_value(const std::string& label) const;

  const ParameterMap& parameter_map() const { return param_map_; }

  /// Assembled matrices at a full free-label vector.
  Eigen::MatrixXd a_matrix(const Eigen::VectorXd& theta_full) const;
  Eigen::MatrixXd s_matrix(const Eigen::VectorXd& theta_full) const;

  /// The free cell carrying a label, if any (first occurrence).
  const ParameterCell* cell_for_label(const std::string& label) const;

 private:
  friend class RamModelBuilder;
  friend ParameterMap reduce_constraints_impl(const RamModel&);

  std::vector<Variable> variables_;
  std::vector<ParameterCell> cells_;
  std::vector<LinearConstraint> constraints_;
  std::vector<DerivedQuantity> derived_;
  std::vector<std::string> observed_order_;
  std::vector<int> observed_indices_;
  std::vector<std::string> free_labels_;
  std::map<std::string, int> label_index_;
  std::map<std::string, double> fixed_label_values_;
  std::map<std::string, int> var_index_;
  ParameterMap param_map_;

  // assembly scaffolding, precomputed at build time
  Eigen::MatrixXd a_base_, s_base_;
  struct Slot { MatrixId matrix; int row, col; };
  std::vector<std::vector<Slot>> label_slots_;  // per free label
};

class RamModelBuilder {
 public:
  int add_variable(const std::string& name, VarKind kind);

  void fix_a(int row, int col, double value);
  void free_a(int row, int col, const std::string& label,
              double start = std::numeric_limits<double>::quiet_NaN());
  void fix_s(int row, int col, double value, const std::string& label = "");
  void free_s(int row, int col, const std::string& label,
              double start = std::numeric_limits<double>::quiet_NaN());

  void add_constraint(LinearConstraint constraint);
  void add_derived(DerivedQuantity quantity);

  bool has_s_cell(int row, int col) const;
  bool has_a_cell(int row, int col) const;

  RamModel build() const;

 private:
  std::vector<Variable> variables_;
  std::vector<ParameterCell> cells_;
  std::vector<LinearConstraint> constraints_;
  std::vector<DerivedQuantity> derived_;
  std::map<std::string, int> var_index_;
};

/// Sigma(theta) = F (I-A)^-1 S (I-A)^-T F' over observed_order.
/// Throws SingularStructure when (I-A) is numerically singular.
Eigen::MatrixXd implied_covariance(const RamModel& model, const Eigen::VectorXd& theta_full);

/// Implied covariance of all model variables (latents included).
Eigen::MatrixXd implied_covariance_full(const RamModel& model, const Eigen::VectorXd& theta_full);

/// Recomputes the reduced parameterization (the model caches one at build time).
ParameterMap reduce_constraints(const RamModel& model);

double evaluate_derived(const RamModel& model, const Eigen::VectorXd& theta_full,
                        const DerivedQuantity& quantity);

double evaluate_expr(const RamModel& model, const Eigen::VectorXd& theta_full, const Expr& expr);

}  // namespace csem
