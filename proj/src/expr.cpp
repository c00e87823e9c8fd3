#include "resil/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "resil/errors.hpp"

namespace resil {

struct Instr {
  NodeKind op;
  int arg = 0;        // variable index or exponent
  double value = 0.0; // constant
};

struct Program {
  std::vector<Instr> code;
  std::size_t depth = 0;
};

namespace {

using VarList = std::shared_ptr<const std::vector<std::string>>;

NodePtr make_node(NodeKind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::Constant;
  n->value = v;
  return n;
}

NodePtr make_var(int index) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::Variable;
  n->var = index;
  return n;
}

NodePtr make_pow(NodePtr base, int k) {
  auto n = std::make_shared<Node>();
  n->kind = NodeKind::Pow;
  n->exponent = k;
  n->lhs = std::move(base);
  return n;
}

double ipow(double x, int k) {
  double result = 1.0;
  double base = x;
  while (k > 0) {
    if (k & 1) result *= base;
    base *= base;
    k >>= 1;
  }
  return result;
}

int find_var(std::span<const std::string> vars, std::string_view name) {
  for (std::size_t i = 0; i < vars.size(); ++i)
    if (vars[i] == name) return static_cast<int>(i);
  return -1;
}

// ---- parser ---------------------------------------------------------------

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> vars)
      : text_(text), vars_(vars) {}

  NodePtr parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    NodePtr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size())
      throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= text_.size())
        throw ParseError(std::string("expected '") + c + "' but input ended", pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = make_node(NodeKind::Add, lhs, parse_product());
      } else if (accept('-')) {
        lhs = make_node(NodeKind::Sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_node(NodeKind::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = make_node(NodeKind::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  // Unary minus binds looser than ^, so -x^2 is -(x^2).
  NodePtr parse_unary() {
    if (accept('-')) return make_node(NodeKind::Negate, parse_unary());
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    while (accept('^')) {
      skip_ws();
      std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_)
        throw ParseError("exponent must be a non-negative integer literal", start);
      int k = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, k);
      if (ec != std::errc{}) throw ParseError("exponent out of range", start);
      base = make_pow(base, k);
    }
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string_view name = text_.substr(start, pos_ - start);
      if (name == "exp") {
        expect('(');
        NodePtr arg = parse_sum();
        expect(')');
        return make_node(NodeKind::Exp, arg);
      }
      int index = find_var(vars_, name);
      if (index < 0) throw UndeclaredVariable(std::string(name));
      return make_var(index);
    }
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = save;  // 'e' belongs to something else
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, v);
    if (ec != std::errc{} || ptr != text_.data() + pos_)
      throw ParseError("malformed number", start);
    return make_const(v);
  }

  std::string_view text_;
  std::span<const std::string> vars_;
  std::size_t pos_ = 0;
};

// ---- compilation -----------------------------------------------------------

void emit(const Node& n, Program& p, std::size_t& sp) {
  switch (n.kind) {
    case NodeKind::Constant:
      p.code.push_back({NodeKind::Constant, 0, n.value});
      p.depth = std::max(p.depth, ++sp);
      return;
    case NodeKind::Variable:
      p.code.push_back({NodeKind::Variable, n.var, 0.0});
      p.depth = std::max(p.depth, ++sp);
      return;
    case NodeKind::Negate:
    case NodeKind::Exp:
      emit(*n.lhs, p, sp);
      p.code.push_back({n.kind, 0, 0.0});
      return;
    case NodeKind::Pow:
      emit(*n.lhs, p, sp);
      p.code.push_back({n.kind, n.exponent, 0.0});
      return;
    default:
      emit(*n.lhs, p, sp);
      emit(*n.rhs, p, sp);
      p.code.push_back({n.kind, 0, 0.0});
      --sp;
      return;
  }
}

std::shared_ptr<const Program> compile(const Node& root) {
  auto p = std::make_shared<Program>();
  std::size_t sp = 0;
  emit(root, *p, sp);
  return p;
}

// ---- printing --------------------------------------------------------------

void print(const Node& n, const std::vector<std::string>& vars, std::string& out) {
  auto binary = [&](const char* op) {
    out += '(';
    print(*n.lhs, vars, out);
    out += op;
    print(*n.rhs, vars, out);
    out += ')';
  };
  switch (n.kind) {
    case NodeKind::Constant: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      if (n.value < 0) {
        out += '(';
        out += buf;
        out += ')';
      } else {
        out += buf;
      }
      return;
    }
    case NodeKind::Variable:
      out += vars[static_cast<std::size_t>(n.var)];
      return;
    case NodeKind::Negate:
      out += "(-";
      print(*n.lhs, vars, out);
      out += ')';
      return;
    case NodeKind::Exp:
      out += "exp(";
      print(*n.lhs, vars, out);
      out += ')';
      return;
    case NodeKind::Pow:
      out += '(';
      print(*n.lhs, vars, out);
      out += '^';
      out += std::to_string(n.exponent);
      out += ')';
      return;
    case NodeKind::Add: binary(" + "); return;
    case NodeKind::Sub: binary(" - "); return;
    case NodeKind::Mul: binary(" * "); return;
    case NodeKind::Div: binary(" / "); return;
    case NodeKind::Min:
    case NodeKind::Max:
      out += n.kind == NodeKind::Min ? "min(" : "max(";
      print(*n.lhs, vars, out);
      out += ", ";
      print(*n.rhs, vars, out);
      out += ')';
      return;
  }
}

bool equal_trees(const Node& a, const std::vector<std::string>& va, const Node& b,
                 const std::vector<std::string>& vb) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Constant:
      return a.value == b.value;
    case NodeKind::Variable:
      return va[static_cast<std::size_t>(a.var)] == vb[static_cast<std::size_t>(b.var)];
    case NodeKind::Pow:
      return a.exponent == b.exponent && equal_trees(*a.lhs, va, *b.lhs, vb);
    case NodeKind::Negate:
    case NodeKind::Exp:
      return equal_trees(*a.lhs, va, *b.lhs, vb);
    default:
      return equal_trees(*a.lhs, va, *b.lhs, vb) && equal_trees(*a.rhs, va, *b.rhs, vb);
  }
}

void collect_uses(const Node& n, std::vector<bool>& used) {
  if (n.kind == NodeKind::Variable) used[static_cast<std::size_t>(n.var)] = true;
  if (n.lhs) collect_uses(*n.lhs, used);
  if (n.rhs) collect_uses(*n.rhs, used);
}

NodePtr reindex(const NodePtr& n, const std::vector<int>& map) {
  if (n->kind == NodeKind::Constant) return n;
  if (n->kind == NodeKind::Variable) return make_var(map[static_cast<std::size_t>(n->var)]);
  auto copy = std::make_shared<Node>(*n);
  if (n->lhs) copy->lhs = reindex(n->lhs, map);
  if (n->rhs) copy->rhs = reindex(n->rhs, map);
  return copy;
}

bool is_const(const NodePtr& n, double v) {
  return n->kind == NodeKind::Constant && n->value == v;
}

// Folding constructors shared by the operator overloads and differentiation.
NodePtr fold_add(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_const(a->value + b->value);
  return make_node(NodeKind::Add, std::move(a), std::move(b));
}

NodePtr fold_neg(NodePtr a) {
  if (a->kind == NodeKind::Constant) return make_const(-a->value);
  return make_node(NodeKind::Negate, std::move(a));
}

NodePtr fold_sub(NodePtr a, NodePtr b) {
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return fold_neg(std::move(b));
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_const(a->value - b->value);
  return make_node(NodeKind::Sub, std::move(a), std::move(b));
}

NodePtr fold_mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (a->kind == NodeKind::Constant && b->kind == NodeKind::Constant)
    return make_const(a->value * b->value);
  return make_node(NodeKind::Mul, std::move(a), std::move(b));
}

NodePtr fold_div(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0) && !is_const(b, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_node(NodeKind::Div, std::move(a), std::move(b));
}

NodePtr fold_pow(NodePtr a, int k) {
  if (k == 0) return make_const(1.0);
  if (k == 1) return a;
  if (a->kind == NodeKind::Constant) return make_const(ipow(a->value, k));
  return make_pow(std::move(a), k);
}

NodePtr derive(const NodePtr& n, int var) {
  switch (n->kind) {
    case NodeKind::Constant:
      return make_const(0.0);
    case NodeKind::Variable:
      return make_const(n->var == var ? 1.0 : 0.0);
    case NodeKind::Negate:
      return fold_neg(derive(n->lhs, var));
    case NodeKind::Exp:
      return fold_mul(n, derive(n->lhs, var));
    case NodeKind::Add:
      return fold_add(derive(n->lhs, var), derive(n->rhs, var));
    case NodeKind::Sub:
      return fold_sub(derive(n->lhs, var), derive(n->rhs, var));
    case NodeKind::Mul:
      return fold_add(fold_mul(derive(n->lhs, var), n->rhs),
                      fold_mul(n->lhs, derive(n->rhs, var)));
    case NodeKind::Div: {
      // (u/v)' = (u'v - uv') / v^2
      NodePtr num = fold_sub(fold_mul(derive(n->lhs, var), n->rhs),
                             fold_mul(n->lhs, derive(n->rhs, var)));
      return fold_div(num, fold_pow(n->rhs, 2));
    }
    case NodeKind::Pow: {
      if (n->exponent == 0) return make_const(0.0);
      NodePtr outer = fold_mul(make_const(static_cast<double>(n->exponent)),
                               fold_pow(n->lhs, n->exponent - 1));
      return fold_mul(outer, derive(n->lhs, var));
    }
    case NodeKind::Min:
    case NodeKind::Max:
      break;
  }
  throw EvalError("min/max nodes are not differentiable");
}

VarList merged_vars(const Expression& a, const Expression& b) {
  if (&a.variables() == &b.variables() || a.variables() == b.variables())
    return std::make_shared<const std::vector<std::string>>(a.variables());
  if (a.variables().empty()) return std::make_shared<const std::vector<std::string>>(b.variables());
  if (b.variables().empty()) return std::make_shared<const std::vector<std::string>>(a.variables());
  throw EvalError("cannot combine expressions over different variable lists");
}

}  // namespace

// ---- Expression ------------------------------------------------------------

Expression::Expression()
    : Expression(make_const(0.0), std::make_shared<const std::vector<std::string>>()) {}

Expression::Expression(NodePtr root, VarList vars)
    : root_(std::move(root)), vars_(std::move(vars)), program_(compile(*root_)) {}

Expression Expression::parse(std::string_view text, std::span<const std::string> declared_vars) {
  Parser p(text, declared_vars);
  NodePtr root = p.parse();
  return Expression(std::move(root), std::make_shared<const std::vector<std::string>>(
                                         declared_vars.begin(), declared_vars.end()));
}

Expression Expression::constant(double value, std::span<const std::string> vars) {
  return Expression(make_const(value),
                    std::make_shared<const std::vector<std::string>>(vars.begin(), vars.end()));
}

Expression Expression::variable(std::string_view name, std::span<const std::string> vars) {
  int index = find_var(vars, name);
  if (index < 0) throw UndeclaredVariable(std::string(name));
  return Expression(make_var(index),
                    std::make_shared<const std::vector<std::string>>(vars.begin(), vars.end()));
}

double Expression::eval(std::span<const double> values) const {
  if (values.size() < vars_->size()) throw EvalError("too few values for expression variables");
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> inline_stack;
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (program_->depth > kInline) {
    heap_stack.resize(program_->depth);
    stack = heap_stack.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : program_->code) {
    switch (in.op) {
      case NodeKind::Constant: stack[sp++] = in.value; break;
      case NodeKind::Variable: stack[sp++] = values[static_cast<std::size_t>(in.arg)]; break;
      case NodeKind::Negate: stack[sp - 1] = -stack[sp - 1]; break;
      case NodeKind::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case NodeKind::Pow: stack[sp - 1] = ipow(stack[sp - 1], in.arg); break;
      case NodeKind::Add: --sp; stack[sp - 1] = stack[sp - 1] + stack[sp]; break;
      case NodeKind::Sub: --sp; stack[sp - 1] = stack[sp - 1] - stack[sp]; break;
      case NodeKind::Mul: --sp; stack[sp - 1] = stack[sp - 1] * stack[sp]; break;
      case NodeKind::Div:
        --sp;
        if (stack[sp] == 0.0) throw EvalError("division by zero");
        stack[sp - 1] = stack[sp - 1] / stack[sp];
        break;
      case NodeKind::Min: --sp; stack[sp - 1] = std::min(stack[sp - 1], stack[sp]); break;
      case NodeKind::Max: --sp; stack[sp - 1] = std::max(stack[sp - 1], stack[sp]); break;
    }
  }
  return stack[0];
}

double Expression::eval(const Bindings& bindings) const {
  std::vector<double> values(vars_->size(), 0.0);
  std::vector<bool> used = uses();
  for (std::size_t i = 0; i < vars_->size(); ++i) {
    auto it = bindings.find((*vars_)[i]);
    if (it != bindings.end()) {
      values[i] = it->second;
    } else if (used[i]) {
      throw EvalError("no binding for variable '" + (*vars_)[i] + "'");
    }
  }
  return eval(values);
}

void Expression::eval_batch(std::span<const double* const> columns, std::size_t n,
                            double* out) const {
  if (columns.size() < vars_->size()) throw EvalError("too few columns for expression variables");
  if (n == 0) return;
  std::vector<double> stack(program_->depth * n);
  std::size_t sp = 0;
  auto slot = [&](std::size_t i) { return stack.data() + i * n; };
  for (const Instr& in : program_->code) {
    switch (in.op) {
      case NodeKind::Constant:
        std::fill_n(slot(sp++), n, in.value);
        break;
      case NodeKind::Variable:
        std::memcpy(slot(sp++), columns[static_cast<std::size_t>(in.arg)], n * sizeof(double));
        break;
      case NodeKind::Negate: {
        double* a = slot(sp - 1);
        for (std::size_t i = 0; i < n; ++i) a[i] = -a[i];
        break;
      }
      case NodeKind::Exp: {
        double* a = slot(sp - 1);
        for (std::size_t i = 0; i < n; ++i) a[i] = std::exp(a[i]);
        break;
      }
      case NodeKind::Pow: {
        double* a = slot(sp - 1);
        for (std::size_t i = 0; i < n; ++i) a[i] = ipow(a[i], in.arg);
        break;
      }
      default: {
        --sp;
        double* a = slot(sp - 1);
        const double* b = slot(sp);
        switch (in.op) {
          case NodeKind::Add: for (std::size_t i = 0; i < n; ++i) a[i] = a[i] + b[i]; break;
          case NodeKind::Sub: for (std::size_t i = 0; i < n; ++i) a[i] = a[i] - b[i]; break;
          case NodeKind::Mul: for (std::size_t i = 0; i < n; ++i) a[i] = a[i] * b[i]; break;
          case NodeKind::Div:
            for (std::size_t i = 0; i < n; ++i) {
              if (b[i] == 0.0) throw EvalError("division by zero");
              a[i] = a[i] / b[i];
            }
            break;
          case NodeKind::Min: for (std::size_t i = 0; i < n; ++i) a[i] = std::min(a[i], b[i]); break;
          case NodeKind::Max: for (std::size_t i = 0; i < n; ++i) a[i] = std::max(a[i], b[i]); break;
          default: break;
        }
      }
    }
  }
  std::memcpy(out, slot(0), n * sizeof(double));
}

Expression Expression::derivative(std::string_view var) const {
  int index = find_var(*vars_, var);
  if (index < 0) throw UndeclaredVariable(std::string(var));
  return Expression(derive(root_, index), vars_);
}

Expression Expression::rebind(std::span<const std::string> vars) const {
  std::vector<int> map(vars_->size(), -1);
  std::vector<bool> used = uses();
  for (std::size_t i = 0; i < vars_->size(); ++i) {
    map[i] = find_var(vars, (*vars_)[i]);
    if (map[i] < 0 && used[i]) throw UndeclaredVariable((*vars_)[i]);
  }
  return Expression(reindex(root_, map),
                    std::make_shared<const std::vector<std::string>>(vars.begin(), vars.end()));
}

std::string Expression::str() const {
  std::string out;
  print(*root_, *vars_, out);
  return out;
}

bool Expression::is_constant() const { return root_->kind == NodeKind::Constant; }
bool Expression::is_zero() const { return is_const(root_, 0.0); }

std::vector<bool> Expression::uses() const {
  std::vector<bool> used(vars_->size(), false);
  collect_uses(*root_, used);
  return used;
}

bool Expression::same_tree(const Expression& other) const {
  return equal_trees(*root_, *vars_, *other.root_, *other.vars_);
}

Expression operator+(const Expression& a, const Expression& b) {
  return Expression(fold_add(a.root_, b.root_), merged_vars(a, b));
}
Expression operator-(const Expression& a, const Expression& b) {
  return Expression(fold_sub(a.root_, b.root_), merged_vars(a, b));
}
Expression operator*(const Expression& a, const Expression& b) {
  return Expression(fold_mul(a.root_, b.root_), merged_vars(a, b));
}
Expression operator/(const Expression& a, const Expression& b) {
  return Expression(fold_div(a.root_, b.root_), merged_vars(a, b));
}
Expression operator-(const Expression& a) { return Expression(fold_neg(a.root_), a.vars_); }

Expression min(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant())
    return Expression(make_const(std::min(a.root_->value, b.root_->value)), merged_vars(a, b));
  return Expression(make_node(NodeKind::Min, a.root_, b.root_), merged_vars(a, b));
}
Expression max(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant())
    return Expression(make_const(std::max(a.root_->value, b.root_->value)), merged_vars(a, b));
  return Expression(make_node(NodeKind::Max, a.root_, b.root_), merged_vars(a, b));
}
Expression clamp(const Expression& a, double lo, double hi) {
  return min(max(a, Expression::constant(lo)), Expression::constant(hi));
}
Expression exp(const Expression& a) {
  if (a.is_constant()) return Expression(make_const(std::exp(a.root_->value)), a.vars_);
  return Expression(make_node(NodeKind::Exp, a.root_), a.vars_);
}
Expression pow(const Expression& a, int exponent) {
  return Expression(fold_pow(a.root_, exponent), a.vars_);
}

Expression dot(std::span<const Expression> lhs, std::span<const Expression> rhs) {
  if (lhs.size() != rhs.size())
    throw DimensionMismatch("dot product of vectors with lengths " + std::to_string(lhs.size()) +
                            " and " + std::to_string(rhs.size()));
  Expression sum;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i].is_zero() || rhs[i].is_zero()) continue;
    sum = sum + lhs[i] * rhs[i];
  }
  return sum;
}

Expression parse_expression(std::string_view text, std::span<const std::string> declared_vars) {
  return Expression::parse(text, declared_vars);
}

double eval_expression(const Expression& e, const Bindings& b) { return e.eval(b); }

Expression differentiate(const Expression& e, std::string_view var) { return e.derivative(var); }

}  // namespace resil
