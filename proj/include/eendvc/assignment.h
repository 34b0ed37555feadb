#pragma once

#include <vector>

#include "eendvc/types.h"

namespace eendvc {

// Minimum-cost perfect matching on a square cost matrix.
// Returns assignment[row] = column.
//
// For n <= kExhaustiveLimit all n! assignments are enumerated in lexicographic
// order and the first one reaching the minimum (within a relative 1e-12) is
// kept, so ties resolve to the lexicographically smallest assignment. Larger
// problems use the Hungarian algorithm.
inline constexpr int kExhaustiveLimit = 8;
std::vector<int> min_cost_assignment(const Matrix& cost);

// Hungarian algorithm only; exposed for tests.
std::vector<int> hungarian(const Matrix& cost);

// Pads a rows x cols matrix to n x n (n = max) with `fill`.
Matrix pad_square(const Matrix& cost, double fill = 0.0);

}  // namespace eendvc
