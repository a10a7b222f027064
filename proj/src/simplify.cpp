#include "msd/simplify.hpp"

#include <cmath>
#include <optional>

namespace msd {

namespace {

std::optional<double> constant_of(const ExprTree& e) {
  if (e.is_constant()) return e.root().value;
  return std::nullopt;
}

bool is_value(const ExprTree& e, double v) { return e.is_constant() && e.root().value == v; }

// Folds c1 op c2 when the result is a finite, valid number.
std::optional<ExprTree> fold(Op op, double a, double b) {
  double r = 0.0;
  switch (op) {
    case Op::Add: r = a + b; break;
    case Op::Sub: r = a - b; break;
    case Op::Mul: r = a * b; break;
    case Op::Div:
      if (std::abs(b) < kProtectedDivisionThreshold) return std::nullopt;
      r = a / b;
      break;
    default: return std::nullopt;
  }
  if (!std::isfinite(r)) return std::nullopt;
  return ExprTree::constant(r);
}

// Splits `e` into (constant, rest) when e is c*rest or rest*c.
std::optional<std::pair<double, ExprTree>> constant_factor(const ExprTree& e) {
  if (e.root().op != Op::Mul) return std::nullopt;
  ExprTree a = e.lhs();
  ExprTree b = e.rhs();
  if (auto c = constant_of(a)) return std::make_pair(*c, b);
  if (auto c = constant_of(b)) return std::make_pair(*c, a);
  return std::nullopt;
}

// Splits `e` into (constant, rest) when e is c+rest or rest+c.
std::optional<std::pair<double, ExprTree>> constant_addend(const ExprTree& e) {
  if (e.root().op != Op::Add) return std::nullopt;
  ExprTree a = e.lhs();
  ExprTree b = e.rhs();
  if (auto c = constant_of(a)) return std::make_pair(*c, b);
  if (auto c = constant_of(b)) return std::make_pair(*c, a);
  return std::nullopt;
}

ExprTree scaled(double c, const ExprTree& rest) {
  if (c == 1.0) return rest;
  return ExprTree::binary(Op::Mul, ExprTree::constant(c), rest);
}

ExprTree shifted(double c, const ExprTree& rest) {
  if (c == 0.0) return rest;
  return ExprTree::binary(Op::Add, ExprTree::constant(c), rest);
}

bool finite(double v) { return std::isfinite(v); }

ExprTree simplify_binary(Op op, const ExprTree& a, const ExprTree& b) {
  const auto ca = constant_of(a);
  const auto cb = constant_of(b);
  if (ca && cb) {
    if (auto folded = fold(op, *ca, *cb)) return *folded;
    return ExprTree::binary(op, a, b);
  }
  switch (op) {
    case Op::Add: {
      if (is_value(a, 0.0)) return b;
      if (is_value(b, 0.0)) return a;
      const auto c = ca ? ca : cb;
      const ExprTree& other = ca ? b : a;
      if (c) {
        if (auto inner = constant_addend(other); inner && finite(*c + inner->first)) {
          return shifted(*c + inner->first, inner->second);
        }
      }
      break;
    }
    case Op::Sub: {
      if (is_value(b, 0.0)) return a;
      if (cb) {
        if (auto inner = constant_addend(a); inner && finite(inner->first - *cb)) {
          return shifted(inner->first - *cb, inner->second);
        }
      }
      break;
    }
    case Op::Mul: {
      if (is_value(a, 1.0)) return b;
      if (is_value(b, 1.0)) return a;
      if (is_value(a, 0.0) || is_value(b, 0.0)) return ExprTree::constant(0.0);
      const auto c = ca ? ca : cb;
      const ExprTree& other = ca ? b : a;
      if (c) {
        if (auto inner = constant_factor(other); inner && finite(*c * inner->first)) {
          return scaled(*c * inner->first, inner->second);
        }
        // Constant factors go first.
        if (cb) return ExprTree::binary(Op::Mul, b, a);
      }
      break;
    }
    case Op::Div: {
      if (is_value(b, 1.0)) return a;
      if (is_value(a, 0.0)) return ExprTree::constant(0.0);
      if (cb && std::abs(*cb) >= kProtectedDivisionThreshold) {
        if (auto inner = constant_factor(a); inner && finite(inner->first / *cb)) {
          return scaled(inner->first / *cb, inner->second);
        }
      }
      break;
    }
    default: break;
  }
  return ExprTree::binary(op, a, b);
}

}  // namespace

ExprTree simplify(const ExprTree& expr) {
  const ExprNode& root = expr.root();
  switch (arity(root.op)) {
    case 0: return expr;
    case 1: {
      ExprTree base = simplify(expr.lhs());
      if (auto c = constant_of(base)) {
        double r = 1.0;
        for (int i = 0; i < root.index; ++i) r *= *c;
        if (std::isfinite(r)) return ExprTree::constant(r);
      }
      return ExprTree::power(base, root.index);
    }
    default: {
      ExprTree out = simplify_binary(root.op, simplify(expr.lhs()), simplify(expr.rhs()));
      // Rewrites never grow the tree; keep the input when one would.
      return out.size() <= expr.size() ? out : expr;
    }
  }
}

}  // namespace msd
