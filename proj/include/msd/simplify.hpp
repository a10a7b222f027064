#pragma once

#include "msd/expr.hpp"

namespace msd {

/// Constant folding, identity elimination (x+0, x-0, x*1, x*0, x/1, 0/x)
/// and merging of nested constant factors/addends such as (2*(3*x)) -> 6*x.
/// Never increases the node count.
ExprTree simplify(const ExprTree& expr);

}  // namespace msd
