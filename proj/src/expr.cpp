#include "msd/expr.hpp"

#include "msd/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace msd {

int arity(Op op) {
  switch (op) {
    case Op::Constant:
    case Op::Variable: return 0;
    case Op::Pow: return 1;
    default: return 2;
  }
}

bool is_binary(Op op) { return arity(op) == 2; }

namespace {

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    default: return 0.0;
  }
}

double integer_power(double base, int exponent) {
  double result = base;
  for (int i = 1; i < exponent; ++i) result *= base;
  return result;
}

const char* prefix_token(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    default: return "";
  }
}

const char* infix_symbol(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    default: return "";
  }
}

bool parse_variable_token(std::string_view token, int& index) {
  if (token.size() < 2 || (token[0] != 'S' && token[0] != 'x')) return false;
  int one_based = 0;
  auto [ptr, ec] = std::from_chars(token.data() + 1, token.data() + token.size(), one_based);
  if (ec != std::errc() || ptr != token.data() + token.size() || one_based < 1) return false;
  index = one_based - 1;
  return true;
}

void check_exponent(int exponent) {
  if (exponent < kMinPowerExponent || exponent > kMaxPowerExponent) {
    throw InvalidInputError("power exponent must be an integer in [" + std::to_string(kMinPowerExponent) + ", " +
                            std::to_string(kMaxPowerExponent) + "]");
  }
}

}  // namespace

ExprTree::ExprTree(std::vector<ExprNode> prefix) : nodes_(std::move(prefix)) {
  if (nodes_.empty()) throw InvalidInputError("expression must have at least one node");
  // `pending` holds, for every incomplete ancestor, the number of children
  // still to be completed; a node's depth is the number of such ancestors + 1.
  std::vector<int> pending;
  int open = 1;
  int max_depth = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (open == 0) throw InvalidInputError("expression has trailing nodes after a complete tree");
    const ExprNode& n = nodes_[i];
    if (n.op == Op::Constant && !std::isfinite(n.value)) throw InvalidInputError("expression constant is not finite");
    if (n.op == Op::Variable && n.index < 0) throw InvalidInputError("negative variable index");
    if (n.op == Op::Pow) check_exponent(n.index);
    max_depth = std::max(max_depth, static_cast<int>(pending.size()) + 1);
    const int a = arity(n.op);
    open += a - 1;
    if (a > 0) {
      pending.push_back(a);
    } else {
      while (!pending.empty() && --pending.back() == 0) pending.pop_back();
    }
  }
  if (open != 0) throw InvalidInputError("expression is missing operands");
  depth_ = max_depth;
}

ExprTree ExprTree::constant(double value) { return ExprTree({ExprNode{Op::Constant, 0, value}}); }

ExprTree ExprTree::variable(int index) { return ExprTree({ExprNode{Op::Variable, index, 0.0}}); }

ExprTree ExprTree::binary(Op op, const ExprTree& lhs, const ExprTree& rhs) {
  if (!is_binary(op)) throw InvalidInputError("binary() needs a binary operator");
  std::vector<ExprNode> nodes;
  nodes.reserve(1 + lhs.size() + rhs.size());
  nodes.push_back(ExprNode{op, 0, 0.0});
  nodes.insert(nodes.end(), lhs.nodes_.begin(), lhs.nodes_.end());
  nodes.insert(nodes.end(), rhs.nodes_.begin(), rhs.nodes_.end());
  return ExprTree(std::move(nodes));
}

ExprTree ExprTree::power(const ExprTree& base, int exponent) {
  std::vector<ExprNode> nodes;
  nodes.reserve(1 + base.size());
  nodes.push_back(ExprNode{Op::Pow, exponent, 0.0});
  nodes.insert(nodes.end(), base.nodes_.begin(), base.nodes_.end());
  return ExprTree(std::move(nodes));
}

std::size_t ExprTree::subtree_end(std::size_t i) const {
  int open = 1;
  std::size_t j = i;
  while (open > 0) {
    open += arity(nodes_[j].op) - 1;
    ++j;
  }
  return j;
}

ExprTree ExprTree::subtree(std::size_t i) const {
  return ExprTree(std::vector<ExprNode>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                        nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i))));
}

int ExprTree::depth_of(std::size_t target) const {
  if (target >= nodes_.size()) throw IndexError("node index out of range");
  std::vector<int> pending;
  for (std::size_t i = 0;; ++i) {
    if (i == target) return static_cast<int>(pending.size()) + 1;
    if (const int a = arity(nodes_[i].op); a > 0) {
      pending.push_back(a);
    } else {
      while (!pending.empty() && --pending.back() == 0) pending.pop_back();
    }
  }
}

ExprTree ExprTree::replace_subtree(std::size_t i, const ExprTree& replacement) const {
  const std::size_t end = subtree_end(i);
  std::vector<ExprNode> nodes;
  nodes.reserve(nodes_.size() - (end - i) + replacement.size());
  nodes.insert(nodes.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
  nodes.insert(nodes.end(), replacement.nodes_.begin(), replacement.nodes_.end());
  nodes.insert(nodes.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
  return ExprTree(std::move(nodes));
}

ExprTree ExprTree::lhs() const {
  if (arity(nodes_[0].op) == 0) throw InvalidInputError("leaf has no children");
  return subtree(1);
}

ExprTree ExprTree::rhs() const {
  if (!is_binary(nodes_[0].op)) throw InvalidInputError("node has no right child");
  return subtree(subtree_end(1));
}

int ExprTree::max_variable() const {
  int best = -1;
  for (const auto& n : nodes_) {
    if (n.op == Op::Variable) best = std::max(best, n.index);
  }
  return best;
}

std::vector<double> ExprTree::constants() const {
  std::vector<double> out;
  for (const auto& n : nodes_) {
    if (n.op == Op::Constant) out.push_back(n.value);
  }
  return out;
}

ExprTree ExprTree::with_constants(const std::vector<double>& values) const {
  std::vector<ExprNode> nodes = nodes_;
  std::size_t k = 0;
  for (auto& n : nodes) {
    if (n.op != Op::Constant) continue;
    if (k >= values.size()) throw InvalidInputError("too few constants supplied");
    n.value = values[k++];
  }
  if (k != values.size()) throw InvalidInputError("too many constants supplied");
  return ExprTree(std::move(nodes));
}

Evaluation evaluate(const ExprTree& expr, const StateVector& x) {
  const auto& nodes = expr.nodes();
  double stack[256];
  std::vector<double> heap;
  double* s = stack;
  if (nodes.size() > 256) {
    heap.resize(nodes.size());
    s = heap.data();
  }
  std::size_t top = 0;
  for (std::size_t k = nodes.size(); k-- > 0;) {
    const ExprNode& n = nodes[k];
    switch (n.op) {
      case Op::Constant: s[top++] = n.value; break;
      case Op::Variable:
        if (n.index >= x.size()) throw InvalidInputError("variable " + variable_name(n.index) + " out of range");
        s[top++] = x[n.index];
        break;
      case Op::Pow: s[top - 1] = integer_power(s[top - 1], n.index); break;
      default: {
        const double a = s[top - 1];
        const double b = s[top - 2];
        if (n.op == Op::Div && std::abs(b) < kProtectedDivisionThreshold) return {0.0, false};
        s[top - 2] = apply_binary(n.op, a, b);
        --top;
      }
    }
    if (!std::isfinite(s[top - 1])) return {0.0, false};
  }
  return {s[0], true};
}

BatchEvaluator::BatchEvaluator(const Eigen::MatrixXd& inputs) : samples_(inputs.cols()) {
  variables_.reserve(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index d = 0; d < inputs.rows(); ++d) variables_.push_back(inputs.row(d).transpose().array());
}

bool BatchEvaluator::evaluate(const ExprTree& expr, Eigen::ArrayXd& out) {
  const auto& nodes = expr.nodes();
  if (stack_.size() < nodes.size()) stack_.resize(nodes.size(), Eigen::ArrayXd(samples_));
  std::size_t top = 0;
  for (std::size_t k = nodes.size(); k-- > 0;) {
    const ExprNode& n = nodes[k];
    switch (n.op) {
      case Op::Constant: stack_[top++].setConstant(n.value); break;
      case Op::Variable:
        if (n.index >= static_cast<int>(variables_.size())) {
          throw InvalidInputError("variable " + variable_name(n.index) + " out of range");
        }
        stack_[top++] = variables_[static_cast<std::size_t>(n.index)];
        break;
      case Op::Pow: {
        Eigen::ArrayXd& v = stack_[top - 1];
        switch (n.index) {
          case 2: v = v.square(); break;
          case 3: v = v.cube(); break;
          default: {
            const Eigen::ArrayXd base = v;
            for (int i = 1; i < n.index; ++i) v *= base;
          }
        }
        break;
      }
      default: {
        const Eigen::ArrayXd& a = stack_[top - 1];
        Eigen::ArrayXd& b = stack_[top - 2];
        switch (n.op) {
          case Op::Add: b = a + b; break;
          case Op::Sub: b = a - b; break;
          case Op::Mul: b = a * b; break;
          case Op::Div:
            if ((b.abs() < kProtectedDivisionThreshold).any()) return false;
            b = a / b;
            break;
          default: break;
        }
        --top;
      }
    }
  }
  if (!stack_[0].allFinite()) return false;
  out = stack_[0];
  return true;
}

std::string variable_name(int index) { return "S" + std::to_string(index + 1); }

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

std::string format_significant(double value, int digits) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::general, digits);
  return std::string(buffer, ptr);
}

namespace {

std::string infix(const ExprTree& expr, std::size_t i, int digits, std::size_t& next) {
  const ExprNode& n = expr.nodes()[i];
  switch (n.op) {
    case Op::Constant: next = i + 1; return format_significant(n.value, digits);
    case Op::Variable: next = i + 1; return variable_name(n.index);
    case Op::Pow: {
      std::string base = infix(expr, i + 1, digits, next);
      // A bare negative constant would read back as -(c^k).
      if (base.front() == '-') base = "(" + base + ")";
      return "(" + base + "^" + std::to_string(n.index) + ")";
    }
    default: {
      std::string a = infix(expr, i + 1, digits, next);
      std::string b = infix(expr, next, digits, next);
      return "(" + a + " " + infix_symbol(n.op) + " " + b + ")";
    }
  }
}

}  // namespace

std::string to_infix(const ExprTree& expr, int significant_digits) {
  std::size_t next = 0;
  return infix(expr, 0, significant_digits, next);
}

std::string to_prefix(const ExprTree& expr) {
  std::string out;
  for (const auto& n : expr.nodes()) {
    if (!out.empty()) out += ' ';
    switch (n.op) {
      case Op::Constant: out += format_double(n.value); break;
      case Op::Variable: out += variable_name(n.index); break;
      case Op::Pow: out += "pow" + std::to_string(n.index); break;
      default: out += prefix_token(n.op);
    }
  }
  return out;
}

ExprTree parse_prefix(std::string_view text) {
  std::vector<ExprNode> nodes;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) break;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::string_view token = text.substr(start, pos - start);
    int index = 0;
    if (token == "add") {
      nodes.push_back({Op::Add, 0, 0.0});
    } else if (token == "sub") {
      nodes.push_back({Op::Sub, 0, 0.0});
    } else if (token == "mul") {
      nodes.push_back({Op::Mul, 0, 0.0});
    } else if (token == "div") {
      nodes.push_back({Op::Div, 0, 0.0});
    } else if (token.substr(0, 3) == "pow") {
      int exponent = 0;
      auto [ptr, ec] = std::from_chars(token.data() + 3, token.data() + token.size(), exponent);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError("bad power token '" + std::string(token) + "'", 1, start + 1);
      }
      nodes.push_back({Op::Pow, exponent, 0.0});
    } else if (parse_variable_token(token, index)) {
      nodes.push_back({Op::Variable, index, 0.0});
    } else {
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError("unknown token '" + std::string(token) + "'", 1, start + 1);
      }
      nodes.push_back({Op::Constant, 0, value});
    }
  }
  try {
    return ExprTree(std::move(nodes));
  } catch (const InvalidInputError& e) {
    throw ParseError(std::string("malformed prefix expression: ") + e.what(), 1, text.size());
  }
}

namespace {

class InfixParser {
 public:
  explicit InfixParser(std::string_view text) : text_(text) {}

  ExprTree parse() {
    ExprTree e = expression();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, 1, pos_ + 1); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  ExprTree expression() {
    ExprTree e = term();
    for (;;) {
      if (accept("+")) {
        e = ExprTree::binary(Op::Add, e, term());
      } else if (accept("-")) {
        e = ExprTree::binary(Op::Sub, e, term());
      } else {
        return e;
      }
    }
  }

  ExprTree term() {
    ExprTree e = unary();
    for (;;) {
      skip_space();
      if (text_.substr(pos_, 2) == "**") return e;
      if (accept("*")) {
        e = ExprTree::binary(Op::Mul, e, unary());
      } else if (accept("/")) {
        e = ExprTree::binary(Op::Div, e, unary());
      } else {
        return e;
      }
    }
  }

  ExprTree unary() {
    if (accept("-")) {
      ExprTree operand = unary();
      if (operand.is_constant()) return ExprTree::constant(-operand.root().value);
      return ExprTree::binary(Op::Mul, ExprTree::constant(-1.0), operand);
    }
    if (accept("+")) return unary();
    return power();
  }

  ExprTree power() {
    ExprTree base = primary();
    if (accept("^") || accept("**")) {
      skip_space();
      int exponent = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), exponent);
      if (ec != std::errc()) fail("expected an integer exponent");
      pos_ = static_cast<std::size_t>(ptr - text_.data());
      if (exponent == 1) return base;
      if (exponent < kMinPowerExponent || exponent > kMaxPowerExponent) fail("unsupported exponent");
      return ExprTree::power(base, exponent);
    }
    return base;
  }

  ExprTree primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    if (accept("(")) {
      ExprTree e = expression();
      if (!accept(")")) fail("expected ')'");
      return e;
    }
    const char c = text_[pos_];
    if (c == 'S' || c == 'x') {
      const std::size_t start = pos_++;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      int index = 0;
      if (!parse_variable_token(text_.substr(start, pos_ - start), index)) {
        pos_ = start;
        fail("bad variable name");
      }
      return ExprTree::variable(index);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc()) fail("expected a number, variable or '('");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return ExprTree::constant(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

ExprTree parse_infix(std::string_view text) { return InfixParser(text).parse(); }

}  // namespace msd
