#pragma once

#include "msd/ode.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace msd {

enum class Op : std::uint8_t { Constant, Variable, Add, Sub, Mul, Div, Pow };

int arity(Op op);
bool is_binary(Op op);

struct ExprNode {
  Op op = Op::Constant;
  /// Variable index for Variable nodes, integer exponent for Pow nodes.
  int index = 0;
  double value = 0.0;

  bool operator==(const ExprNode& other) const = default;
};

inline constexpr int kMinPowerExponent = 2;
inline constexpr int kMaxPowerExponent = 8;
/// Denominators with smaller magnitude make an evaluation invalid.
inline constexpr double kProtectedDivisionThreshold = 1e-12;

/// Immutable expression over state variables, stored in prefix order so
/// every subtree occupies a contiguous node range.
class ExprTree {
 public:
  explicit ExprTree(std::vector<ExprNode> prefix);

  static ExprTree constant(double value);
  static ExprTree variable(int index);
  static ExprTree binary(Op op, const ExprTree& lhs, const ExprTree& rhs);
  static ExprTree power(const ExprTree& base, int exponent);

  const std::vector<ExprNode>& nodes() const { return nodes_; }
  const ExprNode& root() const { return nodes_.front(); }
  std::size_t size() const { return nodes_.size(); }
  /// Node count; the complexity measure used for parsimony.
  std::size_t complexity() const { return nodes_.size(); }
  int depth() const { return depth_; }
  /// One past the last node of the subtree rooted at `i`.
  std::size_t subtree_end(std::size_t i) const;
  ExprTree subtree(std::size_t i) const;
  /// Depth of node `i` below the root (root = 1).
  int depth_of(std::size_t i) const;
  ExprTree replace_subtree(std::size_t i, const ExprTree& replacement) const;
  /// Child subtrees of the root.
  ExprTree lhs() const;
  ExprTree rhs() const;

  bool is_constant() const { return nodes_.size() == 1 && nodes_[0].op == Op::Constant; }
  /// Highest variable index referenced, or -1.
  int max_variable() const;
  std::vector<double> constants() const;
  /// Replaces constants in prefix order.
  ExprTree with_constants(const std::vector<double>& values) const;

  bool operator==(const ExprTree& other) const { return nodes_ == other.nodes_; }

 private:
  std::vector<ExprNode> nodes_;
  int depth_ = 1;
};

struct Evaluation {
  double value = 0.0;
  bool valid = true;
};

/// Scalar evaluation. A near-zero denominator or any non-finite
/// intermediate yields {0, false}; no NaN or Inf is ever returned.
Evaluation evaluate(const ExprTree& expr, const StateVector& x);

/// Column-wise evaluation over a D x K input matrix with reusable buffers.
class BatchEvaluator {
 public:
  explicit BatchEvaluator(const Eigen::MatrixXd& inputs);

  Eigen::Index samples() const { return samples_; }
  /// Writes K values to `out`; returns false when any sample is invalid.
  bool evaluate(const ExprTree& expr, Eigen::ArrayXd& out);

 private:
  Eigen::Index samples_;
  std::vector<Eigen::ArrayXd> variables_;
  std::vector<Eigen::ArrayXd> stack_;
};

/// Variable names are S1..SD (1-based).
std::string variable_name(int index);

/// Fully parenthesized infix with constants at `significant_digits`.
std::string to_infix(const ExprTree& expr, int significant_digits = 4);
/// Space-separated prefix tokens with round-trip exact constants, e.g.
/// "sub mul 1.3 S4 mul 3.1 S7".
std::string to_prefix(const ExprTree& expr);
ExprTree parse_prefix(std::string_view text);
/// Infix with + - * / ^ (or **), unary minus, parentheses, numbers and
/// variables S<k> / x<k> (1-based).
ExprTree parse_infix(std::string_view text);

std::string format_double(double value);
std::string format_significant(double value, int digits);

}  // namespace msd
