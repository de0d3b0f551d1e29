#include "csem/ram.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace csem {

namespace {

constexpr double kSingularRcond = 1e-12;
constexpr double kConstraintTol = 1e-12;

ExprPtr make_node(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

}  // namespace

ExprPtr Expr::constant(double v) {
  Expr e;
  e.kind = Kind::constant;
  e.value = v;
  return make_node(std::move(e));
}

ExprPtr Expr::param(std::string label) {
  Expr e;
  e.kind = Kind::param;
  e.label = std::move(label);
  return make_node(std::move(e));
}

ExprPtr Expr::add(ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = Kind::add;
  e.lhs = std::move(a);
  e.rhs = std::move(b);
  return make_node(std::move(e));
}

ExprPtr Expr::sub(ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = Kind::sub;
  e.lhs = std::move(a);
  e.rhs = std::move(b);
  return make_node(std::move(e));
}

ExprPtr Expr::mul(ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = Kind::mul;
  e.lhs = std::move(a);
  e.rhs = std::move(b);
  return make_node(std::move(e));
}

ExprPtr Expr::div(ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = Kind::div;
  e.lhs = std::move(a);
  e.rhs = std::move(b);
  return make_node(std::move(e));
}

ExprPtr Expr::neg(ExprPtr a) {
  Expr e;
  e.kind = Kind::neg;
  e.lhs = std::move(a);
  return make_node(std::move(e));
}

ExprPtr Expr::recip(ExprPtr a) {
  Expr e;
  e.kind = Kind::recip;
  e.lhs = std::move(a);
  return make_node(std::move(e));
}

ExprPtr Expr::weight_entry(std::vector<int> components, std::vector<int> composites,
                           int out_row, int out_col) {
  Expr e;
  e.kind = Kind::weight_entry;
  e.components = std::move(components);
  e.composites = std::move(composites);
  e.out_row = out_row;
  e.out_col = out_col;
  return make_node(std::move(e));
}

Eigen::VectorXd ParameterMap::expand(const Eigen::VectorXd& theta_reduced) const {
  if (theta_reduced.size() != reduced_dim())
    throw Error("ParameterMap::expand: wrong vector length");
  return m_ * theta_reduced + offset_;
}

Eigen::VectorXd ParameterMap::reduce(const Eigen::VectorXd& theta_full) const {
  if (theta_full.size() != full_dim())
    throw Error("ParameterMap::reduce: wrong vector length");
  Eigen::VectorXd out(reduced_dim());
  for (int i = 0; i < reduced_dim(); ++i) out[i] = theta_full[reduced_index_[i]];
  return out;
}

int RamModel::var_index(const std::string& name) const {
  auto it = var_index_.find(name);
  return it == var_index_.end() ? -1 : it->second;
}

int RamModel::label_index(const std::string& label) const {
  auto it = label_index_.find(label);
  return it == label_index_.end() ? -1 : it->second;
}

bool RamModel::is_fixed_label(const std::string& label) const {
  return fixed_label_values_.count(label) > 0;
}

double RamModel::fixed_label_value(const std::string& label) const {
  auto it = fixed_label_values_.find(label);
  if (it == fixed_label_values_.end()) throw Error("unknown fixed label: " + label);
  return it->second;
}

const ParameterCell* RamModel::cell_for_label(const std::string& label) const {
  for (const auto& c : cells_)
    if (c.status == CellStatus::free_ && c.label == label) return &c;
  return nullptr;
}

Eigen::MatrixXd RamModel::a_matrix(const Eigen::VectorXd& theta_full) const {
  if (theta_full.size() != static_cast<int>(free_labels_.size()))
    throw Error("theta must have one entry per free label");
  Eigen::MatrixXd a = a_base_;
  for (size_t k = 0; k < label_slots_.size(); ++k)
    for (const auto& slot : label_slots_[k])
      if (slot.matrix == MatrixId::A) a(slot.row, slot.col) = theta_full[static_cast<int>(k)];
  return a;
}

Eigen::MatrixXd RamModel::s_matrix(const Eigen::VectorXd& theta_full) const {
  if (theta_full.size() != static_cast<int>(free_labels_.size()))
    throw Error("theta must have one entry per free label");
  Eigen::MatrixXd s = s_base_;
  for (size_t k = 0; k < label_slots_.size(); ++k)
    for (const auto& slot : label_slots_[k])
      if (slot.matrix == MatrixId::S) {
        s(slot.row, slot.col) = theta_full[static_cast<int>(k)];
        s(slot.col, slot.row) = theta_full[static_cast<int>(k)];
      }
  return s;
}

// ---------------------------------------------------------------------------
// builder

int RamModelBuilder::add_variable(const std::string& name, VarKind kind) {
  if (var_index_.count(name)) throw Error("duplicate variable name: " + name);
  variables_.push_back({name, kind});
  int idx = static_cast<int>(variables_.size()) - 1;
  var_index_[name] = idx;
  return idx;
}

void RamModelBuilder::fix_a(int row, int col, double value) {
  if (row == col) throw Error("A diagonal is fixed at zero");
  cells_.push_back({MatrixId::A, row, col, value, CellStatus::fixed, ""});
}

void RamModelBuilder::free_a(int row, int col, const std::string& label, double start) {
  if (row == col) throw Error("A diagonal is fixed at zero");
  if (label.empty()) throw Error("free cell requires a label");
  cells_.push_back({MatrixId::A, row, col, start, CellStatus::free_, label});
}

void RamModelBuilder::fix_s(int row, int col, double value, const std::string& label) {
  if (row < col) std::swap(row, col);
  cells_.push_back({MatrixId::S, row, col, value, CellStatus::fixed, label});
}

void RamModelBuilder::free_s(int row, int col, const std::string& label, double start) {
  if (label.empty()) throw Error("free cell requires a label");
  if (row < col) std::swap(row, col);
  cells_.push_back({MatrixId::S, row, col, start, CellStatus::free_, label});
}

void RamModelBuilder::add_constraint(LinearConstraint constraint) {
  constraints_.push_back(std::move(constraint));
}

void RamModelBuilder::add_derived(DerivedQuantity quantity) {
  derived_.push_back(std::move(quantity));
}

bool RamModelBuilder::has_s_cell(int row, int col) const {
  if (row < col) std::swap(row, col);
  for (const auto& c : cells_)
    if (c.matrix == MatrixId::S && c.row == row && c.col == col) return true;
  return false;
}

bool RamModelBuilder::has_a_cell(int row, int col) const {
  for (const auto& c : cells_)
    if (c.matrix == MatrixId::A && c.row == row && c.col == col) return true;
  return false;
}

ParameterMap reduce_constraints_impl(const RamModel& model);

RamModel RamModelBuilder::build() const {
  RamModel m;
  m.variables_ = variables_;
  m.cells_ = cells_;
  m.constraints_ = constraints_;
  m.derived_ = derived_;
  m.var_index_ = var_index_;

  const int n = static_cast<int>(variables_.size());
  for (int i = 0; i < n; ++i)
    if (variables_[i].kind == VarKind::observed) {
      m.observed_order_.push_back(variables_[i].name);
      m.observed_indices_.push_back(i);
    }

  // duplicate-cell check
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& c : cells_) {
    auto key = std::make_tuple(static_cast<int>(c.matrix), c.row, c.col);
    if (!seen.insert(key).second)
      throw Error("duplicate parameter cell for (" + variables_[c.row].name + ", " +
                  variables_[c.col].name + ")");
    if (c.row < 0 || c.row >= n || c.col < 0 || c.col >= n)
      throw Error("parameter cell out of range");
  }

  // free-label bookkeeping, declaration order
  for (const auto& c : cells_) {
    if (c.status == CellStatus::free_) {
      if (!m.label_index_.count(c.label)) {
        m.label_index_[c.label] = static_cast<int>(m.free_labels_.size());
        m.free_labels_.push_back(c.label);
      }
    } else if (!c.label.empty()) {
      auto it = m.fixed_label_values_.find(c.label);
      if (it != m.fixed_label_values_.end() && it->second != c.value)
        throw Error("fixed label '" + c.label + "' bound to conflicting values");
      m.fixed_label_values_[c.label] = c.value;
    }
  }
  for (const auto& [label, value] : m.fixed_label_values_)
    if (m.label_index_.count(label))
      throw Error("label '" + label + "' is both fixed and free");

  m.a_base_ = Eigen::MatrixXd::Zero(n, n);
  m.s_base_ = Eigen::MatrixXd::Zero(n, n);
  m.label_slots_.assign(m.free_labels_.size(), {});
  for (const auto& c : cells_) {
    if (c.status == CellStatus::fixed) {
      if (c.matrix == MatrixId::A) {
        m.a_base_(c.row, c.col) = c.value;
      } else {
        m.s_base_(c.row, c.col) = c.value;
        m.s_base_(c.col, c.row) = c.value;
      }
    } else {
      m.label_slots_[m.label_index_[c.label]].push_back({c.matrix, c.row, c.col});
    }
  }

  m.param_map_ = reduce_constraints_impl(m);
  return m;
}

// ---------------------------------------------------------------------------
// constraint reduction by pivot substitution

ParameterMap reduce_constraints_impl(const RamModel& model) {
  const auto& labels = model.free_labels();
  const int n = static_cast<int>(labels.size());
  std::map<std::string, int> pos;
  for (int i = 0; i < n; ++i) pos[labels[i]] = i;

  // rows over free labels; fixed labels fold into the rhs
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (const auto& con : model.constraints()) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    double r = con.rhs;
    for (const auto& [label, coef] : con.terms) {
      auto it = pos.find(label);
      if (it != pos.end()) {
        row[it->second] += coef;
      } else if (model.is_fixed_label(label)) {
        r -= coef * model.fixed_label_value(label);
      } else {
        throw Error("constraint references unknown label: " + label);
      }
    }
    rows.push_back(std::move(row));
    rhs.push_back(r);
  }

  // sequential elimination; pivot = last-declared label with nonzero coefficient
  std::vector<int> pivots;
  std::vector<Eigen::VectorXd> solved_rows;  // pivot = solved_row . theta + solved_rhs
  std::vector<double> solved_rhs;
  std::vector<bool> is_pivot(n, false);
  for (size_t k = 0; k < rows.size(); ++k) {
    Eigen::VectorXd row = rows[k];
    double r = rhs[k];
    for (size_t j = 0; j < pivots.size(); ++j) {
      double c = row[pivots[j]];
      if (c != 0.0) {
        row += c * solved_rows[j];
        row[pivots[j]] = 0.0;
        r -= c * solved_rhs[j];
        // careful: solved form is pivot = solved_rows[j].theta + solved_rhs[j]
      }
    }
    int pivot = -1;
    for (int i = n - 1; i >= 0; --i)
      if (!is_pivot[i] && std::abs(row[i]) > kConstraintTol) {
        pivot = i;
        break;
      }
    if (pivot < 0)
      throw RankDeficientConstraints("constraint " + std::to_string(k + 1) +
                                     " is dependent or contradictory");
    double c = row[pivot];
    Eigen::VectorXd solved = -row / c;
    solved[pivot] = 0.0;
    pivots.push_back(pivot);
    is_pivot[pivot] = true;
    solved_rows.push_back(std::move(solved));
    solved_rhs.push_back(r / c);
  }

  ParameterMap pm;
  pm.free_labels_ = labels;
  for (int i = 0; i < n; ++i)
    if (!is_pivot[i]) {
      pm.reduced_labels_.push_back(labels[i]);
      pm.reduced_index_.push_back(i);
    }
  const int r = static_cast<int>(pm.reduced_labels_.size());
  pm.m_ = Eigen::MatrixXd::Zero(n, r);
  pm.offset_ = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < r; ++j) pm.m_(pm.reduced_index_[j], j) = 1.0;
  // back-substitute pivots in reverse elimination order
  for (int j = static_cast<int>(pivots.size()) - 1; j >= 0; --j) {
    int p = pivots[j];
    Eigen::RowVectorXd mrow = Eigen::RowVectorXd::Zero(r);
    double off = solved_rhs[j];
    for (int i = 0; i < n; ++i) {
      double c = solved_rows[j][i];
      if (c != 0.0) {
        mrow += c * pm.m_.row(i);
        off += c * pm.offset_[i];
      }
    }
    pm.m_.row(p) = mrow;
    pm.offset_[p] = off;
  }
  return pm;
}

ParameterMap reduce_constraints(const RamModel& model) { return reduce_constraints_impl(model); }

// ---------------------------------------------------------------------------
// implied covariance

namespace {

Eigen::MatrixXd solve_i_minus_a(const RamModel& model, const Eigen::VectorXd& theta) {
  const int n = model.num_variables();
  Eigen::MatrixXd ima = Eigen::MatrixXd::Identity(n, n) - model.a_matrix(theta);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(ima);
  if (!(lu.rcond() > kSingularRcond))
    throw SingularStructure("(I - A) is numerically singular");
  return lu.solve(Eigen::MatrixXd::Identity(n, n));
}

}  // namespace

Eigen::MatrixXd implied_covariance_full(const RamModel& model, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd inv = solve_i_minus_a(model, theta);
  Eigen::MatrixXd s = model.s_matrix(theta);
  Eigen::MatrixXd sigma = inv * s * inv.transpose();
  return (sigma + sigma.transpose()) / 2.0;  // enforce exact symmetry
}

Eigen::MatrixXd implied_covariance(const RamModel& model, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd full = implied_covariance_full(model, theta);
  const auto& idx = model.observed_indices();
  const int p = static_cast<int>(idx.size());
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = full(idx[i], idx[j]);
  return sigma;
}

// ---------------------------------------------------------------------------
// derived quantities

double evaluate_expr(const RamModel& model, const Eigen::VectorXd& theta, const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::constant:
      return e.value;
    case Expr::Kind::param: {
      int idx = model.label_index(e.label);
      if (idx >= 0) return theta[idx];
      if (model.is_fixed_label(e.label)) return model.fixed_label_value(e.label);
      throw Error("derived expression references unknown label: " + e.label);
    }
    case Expr::Kind::add:
      return evaluate_expr(model, theta, *e.lhs) + evaluate_expr(model, theta, *e.rhs);
    case Expr::Kind::sub:
      return evaluate_expr(model, theta, *e.lhs) - evaluate_expr(model, theta, *e.rhs);
    case Expr::Kind::mul:
      return evaluate_expr(model, theta, *e.lhs) * evaluate_expr(model, theta, *e.rhs);
    case Expr::Kind::div: {
      double num = evaluate_expr(model, theta, *e.lhs);
      double den = evaluate_expr(model, theta, *e.rhs);
      if (den == 0.0 || !std::isfinite(1.0 / den)) throw DivisionByZero("division by zero");
      return num / den;
    }
    case Expr::Kind::neg:
      return -evaluate_expr(model, theta, *e.lhs);
    case Expr::Kind::recip: {
      double den = evaluate_expr(model, theta, *e.lhs);
      if (den == 0.0 || !std::isfinite(1.0 / den))
        throw DivisionByZero("reciprocal of zero");
      return 1.0 / den;
    }
    case Expr::Kind::weight_entry: {
      Eigen::MatrixXd inv = solve_i_minus_a(model, theta);
      const int k = static_cast<int>(e.components.size());
      if (k != static_cast<int>(e.composites.size()))
        throw Error("weight block must be square");
      Eigen::MatrixXd block(k, k);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) block(i, j) = inv(e.components[i], e.composites[j]);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(block);
      if (!(lu.rcond() > kSingularRcond))
        throw SingularBlock("loading block is numerically singular");
      Eigen::MatrixXd w = lu.solve(Eigen::MatrixXd::Identity(k, k));
      return w(e.out_row, e.out_col);
    }
  }
  throw Error("unreachable expression kind");
}

double evaluate_derived(const RamModel& model, const Eigen::VectorXd& theta,
                        const DerivedQuantity& q) {
  if (!q.expr) throw Error("derived quantity '" + q.name + "' has no expression");
  return evaluate_expr(model, theta, *q.expr);
}

}  // namespace csem
