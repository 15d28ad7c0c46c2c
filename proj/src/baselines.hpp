#pragma once

#include <cstdint>

#include "instance.hpp"

namespace tsppc {

/// Precedence-aware nearest neighbor: from the start node, repeatedly move
/// to the nearest selectable node (unvisited with all predecessors visited);
/// distance ties go to the lower node index. Always feasible.
Tour nearest_neighbor_solve(const Instance& inst);

enum class ExactMethod { Brute, Dp };

constexpr int kBruteMaxNodes = 10;
constexpr int kDpMaxNodes = 18;

struct OracleResult {
  Tour tour;      // provably optimal feasible tour
  double length = 0.0;
  std::uint64_t explored_states = 0;
};

/// Exact optimum. Brute enumerates every feasible permutation (n <= 10); Dp
/// runs a Held-Karp subset dynamic program over predecessor-closed subsets
/// (n <= 18). Throws ErrorCode::Limit beyond those sizes.
OracleResult exact_solve(const Instance& inst, ExactMethod method);

}  // namespace tsppc
