#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace resil {

using Bindings = std::map<std::string, double, std::less<>>;

enum class NodeKind : std::uint8_t {
  Constant,
  Variable,
  Negate,
  Exp,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  // Builder-only nodes. They never come out of the parser; the oracle uses
  // them to express worst-case input selection and input saturation.
  Min,
  Max,
};

struct Node {
  NodeKind kind = NodeKind::Constant;
  double value = 0.0;    // Constant
  int var = -1;          // Variable: index into the owning variable list
  int exponent = 0;      // Pow
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

using NodePtr = std::shared_ptr<const Node>;

struct Program;

/// Immutable scalar expression over an ordered list of named variables.
///
/// Evaluation takes values positionally (one per declared variable). The
/// tree is compiled once into a postfix program, so evaluation is cheap and
/// safe to call concurrently.
class Expression {
 public:
  Expression();  // the constant 0 over no variables

  static Expression parse(std::string_view text,
                          std::span<const std::string> declared_vars);
  static Expression constant(double value,
                             std::span<const std::string> vars = {});
  static Expression variable(std::string_view name,
                             std::span<const std::string> vars);

  double eval(std::span<const double> values) const;
  double eval(const Bindings& bindings) const;

  /// Evaluates at `n` points. `columns[v]` holds the n values of variable v.
  void eval_batch(std::span<const double* const> columns, std::size_t n,
                  double* out) const;

  /// Exact symbolic partial derivative with respect to `var`.
  Expression derivative(std::string_view var) const;

  /// Same tree re-indexed against another variable list; every variable
  /// used must be present there.
  Expression rebind(std::span<const std::string> vars) const;

  std::string str() const;

  const std::vector<std::string>& variables() const { return *vars_; }
  const NodePtr& root() const { return root_; }

  bool is_constant() const;
  bool is_zero() const;
  /// uses()[v] is true when variable v occurs in the tree.
  std::vector<bool> uses() const;

  /// Structural equality of the trees (variables compared by name).
  bool same_tree(const Expression& other) const;

  // Builders with light constant folding (x+0, x*1, x*0, const op const).
  friend Expression operator+(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a, const Expression& b);
  friend Expression operator*(const Expression& a, const Expression& b);
  friend Expression operator/(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a);
  friend Expression min(const Expression& a, const Expression& b);
  friend Expression max(const Expression& a, const Expression& b);
  friend Expression clamp(const Expression& a, double lo, double hi);
  friend Expression exp(const Expression& a);
  friend Expression pow(const Expression& a, int exponent);

 private:
  Expression(NodePtr root, std::shared_ptr<const std::vector<std::string>> vars);

  NodePtr root_;
  std::shared_ptr<const std::vector<std::string>> vars_;
  std::shared_ptr<const Program> program_;
};

/// Dot product of two equal-length expression vectors, skipping terms whose
/// left factor is identically zero.
Expression dot(std::span<const Expression> lhs, std::span<const Expression> rhs);

Expression parse_expression(std::string_view text,
                            std::span<const std::string> declared_vars);
double eval_expression(const Expression& e, const Bindings& b);
Expression differentiate(const Expression& e, std::string_view var);

}  // namespace resil
