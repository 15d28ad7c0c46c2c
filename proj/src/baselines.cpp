#include "baselines.hpp"

#include <algorithm>
#include <limits>

namespace tsppc {

Tour nearest_neighbor_solve(const Instance& inst) {
  const int n = inst.n;
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<int> blocked(n);
  for (int v = 0; v < n; ++v) blocked[v] = static_cast<int>(inst.preds[v].size());

  Tour tour;
  tour.order.reserve(n);
  int cur = inst.start;
  tour.order.push_back(cur);
  visited[cur] = 1;
  for (int w : inst.succs[cur]) --blocked[w];

  double total = 0.0;
  for (int step = 1; step < n; ++step) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < n; ++v) {
      if (visited[v] || blocked[v] > 0) continue;
      double d = inst.dist(cur, v);
      if (d < best_d) {  // strict: ties keep the lower index
        best_d = d;
        best = v;
      }
    }
    if (best < 0) throw Error(ErrorCode::Invalid, "no selectable node (cyclic precedence?)");
    total += best_d;
    visited[best] = 1;
    for (int w : inst.succs[best]) --blocked[w];
    tour.order.push_back(best);
    cur = best;
  }
  total += inst.dist(cur, inst.start);
  tour.length = total;
  return tour;
}

namespace {

OracleResult brute_solve(const Instance& inst) {
  const int n = inst.n;
  OracleResult res;
  res.length = std::numeric_limits<double>::infinity();

  std::vector<std::uint8_t> visited(n, 0);
  std::vector<int> blocked(n);
  for (int v = 0; v < n; ++v) blocked[v] = static_cast<int>(inst.preds[v].size());
  std::vector<int> order;
  order.reserve(n);
  order.push_back(inst.start);
  visited[inst.start] = 1;
  for (int w : inst.succs[inst.start]) --blocked[w];

  std::uint64_t explored = 0;
  // Depth-first over feasible partial tours only; infeasible branches are
  // never entered, so every completed leaf is a feasible permutation.
  auto recurse = [&](auto&& self, int cur, double len) -> void {
    ++explored;
    if (static_cast<int>(order.size()) == n) {
      double total = len + inst.dist(cur, inst.start);
      if (total < res.length) {
        res.length = total;
        res.tour.order = order;
      }
      return;
    }
    for (int v = 0; v < n; ++v) {
      if (visited[v] || blocked[v] > 0) continue;
      visited[v] = 1;
      for (int w : inst.succs[v]) --blocked[w];
      order.push_back(v);
      self(self, v, len + inst.dist(cur, v));
      order.pop_back();
      for (int w : inst.succs[v]) ++blocked[w];
      visited[v] = 0;
    }
  };
  recurse(recurse, inst.start, 0.0);
  res.explored_states = explored;
  res.tour.length = res.length;
  return res;
}

OracleResult dp_solve(const Instance& inst) {
  const int n = inst.n;
  // Non-start nodes are renumbered into bit positions 0..n-2.
  std::vector<int> node_of(n - 1), bit_of(n, -1);
  {
    int b = 0;
    for (int v = 0; v < n; ++v) {
      if (v == inst.start) continue;
      node_of[b] = v;
      bit_of[v] = b;
      ++b;
    }
  }
  const int m = n - 1;
  std::vector<std::uint32_t> predmask(m, 0);
  for (auto [i, j] : inst.pairs) predmask[bit_of[j]] |= (1u << bit_of[i]);

  const std::uint32_t full = (m == 32) ? ~0u : ((1u << m) - 1);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(static_cast<std::size_t>(full + 1) * m, inf);
  std::vector<std::int8_t> parent(dp.size(), -1);
  std::uint64_t explored = 0;

  // A subset is admissible iff it is closed under predecessors; a state
  // (subset, last) additionally requires last's predecessors inside the
  // subset without last. Subsets are visited in increasing order, so all
  // predecessors states are final when read.
  for (std::uint32_t sub = 1; sub <= full; ++sub) {
    bool closed = true;
    for (std::uint32_t rest = sub; rest;) {
      int b = std::countr_zero(rest);
      rest &= rest - 1;
      if ((predmask[b] & ~sub) != 0) {
        closed = false;
        break;
      }
    }
    if (!closed) continue;
    for (std::uint32_t rest = sub; rest;) {
      int last = std::countr_zero(rest);
      rest &= rest - 1;
      std::uint32_t prev_sub = sub & ~(1u << last);
      // last must be addable after prev_sub: its predecessors all in prev_sub
      if ((predmask[last] & ~prev_sub) != 0) continue;
      ++explored;
      double best = inf;
      std::int8_t best_prev = -1;
      if (prev_sub == 0) {
        best = inst.dist(inst.start, node_of[last]);
      } else {
        for (std::uint32_t r2 = prev_sub; r2;) {
          int p = std::countr_zero(r2);
          r2 &= r2 - 1;
          double cand = dp[static_cast<std::size_t>(prev_sub) * m + p];
          if (cand == inf) continue;
          cand += inst.dist(node_of[p], node_of[last]);
          if (cand < best) {
            best = cand;
            best_prev = static_cast<std::int8_t>(p);
          }
        }
      }
      if (best < inf) {
        dp[static_cast<std::size_t>(sub) * m + last] = best;
        parent[static_cast<std::size_t>(sub) * m + last] = best_prev;
      }
    }
  }

  OracleResult res;
  res.length = inf;
  int best_last = -1;
  for (int last = 0; last < m; ++last) {
    double cand = dp[static_cast<std::size_t>(full) * m + last];
    if (cand == inf) continue;
    cand += inst.dist(node_of[last], inst.start);
    if (cand < res.length) {
      res.length = cand;
      best_last = last;
    }
  }
  if (best_last < 0) throw Error(ErrorCode::Invalid, "no feasible tour (cyclic precedence?)");

  std::vector<int> rev;
  std::uint32_t sub = full;
  int last = best_last;
  while (last >= 0) {
    rev.push_back(node_of[last]);
    int prev = parent[static_cast<std::size_t>(sub) * m + last];
    sub &= ~(1u << last);
    last = prev;
  }
  res.tour.order.push_back(inst.start);
  res.tour.order.insert(res.tour.order.end(), rev.rbegin(), rev.rend());
  res.tour.length = res.length;
  res.explored_states = explored;
  return res;
}

}  // namespace

OracleResult exact_solve(const Instance& inst, ExactMethod method) {
  if (method == ExactMethod::Brute) {
    if (inst.n > kBruteMaxNodes)
      throw Error(ErrorCode::Limit, "brute-force oracle limited to n <= " +
                                        std::to_string(kBruteMaxNodes) + " (got n=" +
                                        std::to_string(inst.n) + ")");
    return brute_solve(inst);
  }
  if (inst.n > kDpMaxNodes)
    throw Error(ErrorCode::Limit, "dp oracle limited to n <= " + std::to_string(kDpMaxNodes) +
                                      " (got n=" + std::to_string(inst.n) + ")");
  return dp_solve(inst);
}

}  // namespace tsppc
