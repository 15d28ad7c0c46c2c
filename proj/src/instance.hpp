#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace tsppc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// How precedence chains are sampled during instance generation.
///   PairsOnly — every chain has length 2 (one constraint pair each).
///   Mixed     — chains of length 2 and 3 mixed at random.
enum class ChainProfile { PairsOnly, Mixed };

ChainProfile parse_chain_profile(const std::string& s);
std::string chain_profile_str(ChainProfile p);

/// A TSPPC instance: nodes in the unit square, a prescribed start node and a
/// set of precedence constraints organized as disjoint chains. The pair set
/// is exactly the set of consecutive pairs of all chains. Immutable once
/// finalized; safe to share across threads.
struct Instance {
  std::int64_t id = 0;
  int n = 0;
  int start = 0;
  std::vector<Point> coords;
  std::vector<std::vector<int>> chains;
  std::vector<std::pair<int, int>> pairs;  // sorted; (i,j) means i before j

  // Derived, filled by finalize().
  Eigen::MatrixXd dist;                 // symmetric Euclidean distances
  std::vector<int> chain_id;            // -1 for chain-free nodes
  std::vector<std::vector<int>> preds;  // preds[j] = {i : (i,j) in pairs}
  std::vector<std::vector<int>> succs;

  /// Recomputes the distance matrix and the precedence lookup tables from
  /// coords/chains/pairs. Must be called after any structural change.
  void finalize();

  double distance(int i, int j) const { return dist(i, j); }
};

/// Derives the pair set (consecutive pairs of every chain), sorted.
std::vector<std::pair<int, int>> pairs_of_chains(const std::vector<std::vector<int>>& chains);

/// Samples an instance: coordinates i.i.d. uniform on [0,1]^2, start fixed at
/// node 0, and floor(ratio*n) constraint pairs arranged as disjoint chains
/// over the non-start nodes. Throws ErrorCode::Argument when the requested
/// ratio cannot be realized with disjoint chains under the profile.
Instance generate_instance(int n, double constraint_ratio, ChainProfile profile,
                           std::uint64_t seed);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string str() const;
};

/// Checks every Instance invariant; violations are reported, not thrown.
ValidationReport validate_instance(const Instance& inst);

/// A closed tour. order[0] is the start node; the return leg back to the
/// start is implicit and included in length.
struct Tour {
  std::vector<int> order;
  double length = 0.0;
};

/// Sum of leg distances including the closing leg. Throws ErrorCode::Invalid
/// if order is not a permutation of all nodes starting at inst.start.
double tour_length(const Instance& inst, const Tour& tour);

/// True iff the tour starts at inst.start and every pair (i,j) in P has i
/// visited before j. Throws ErrorCode::Invalid if order is not a permutation.
bool is_feasible(const Instance& inst, const Tour& tour);

// ---- file formats (versioned plain text) ----

void save_instance(const Instance& inst, std::ostream& os);
Instance load_instance(std::istream& is);
void save_instance_file(const Instance& inst, const std::string& path);
Instance load_instance_file(const std::string& path);

void save_dataset_file(const std::vector<Instance>& instances, const std::string& path);
std::vector<Instance> load_dataset_file(const std::string& path);

/// Writes `count` instances seeded from `seed` (instance k uses the derived
/// stream (seed, k) and id k) to a dataset file.
void generate_dataset_file(int n, int count, double ratio, ChainProfile profile,
                           std::uint64_t seed, const std::string& path);

}  // namespace tsppc
