#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cyclecap/matrix.hpp"

namespace cyclecap {

enum class MatchMode { location, semantic };

// One-to-one assignment between predictions (rows, index i) and ground truths
// (columns, index j). Pairs are sorted by j.
struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  MatchMode mode = MatchMode::location;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  friend bool operator==(const Matching& a, const Matching& b) { return a.pairs == b.pairs; }
};

// Minimum-cost assignment of min(N, M) pairs for an N×M cost matrix.
//
// Among optimal assignments the result is the one whose column-to-row map,
// read in column order with unmatched columns ranked last, is
// lexicographically smallest; [[0,0],[0,0]] therefore gives (0,0),(1,1).
// Throws ContractViolation on non-finite costs.
Matching hungarian(const Matrix& cost);

// Sum of cost(i, j) over the matching, accumulated in pair order.
double matching_cost(const Matrix& cost, const Matching& m);

}  // namespace cyclecap
