#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "instance.hpp"

namespace tsppc {

/// The four heterogeneous attention kinds. nn is subject to sparsification;
/// ps/sp/mm are derived from the precedence structure alone.
enum class Kind { NN = 0, PS = 1, SP = 2, MM = 3 };
constexpr int kNumKinds = 4;

const char* kind_str(Kind k);

/// Neighborhood restriction applied to the nn kind.
struct Sparsify {
  enum class Mode { Dense, Threshold, Knn };
  Mode mode = Mode::Dense;
  double d_t = 0.0;
  int k = 0;

  static Sparsify dense() { return {}; }
  static Sparsify threshold(double d_t);
  static Sparsify knn(int k);

  /// Parses "dense", "threshold:<d_t>" or "knn:<k>".
  static Sparsify parse(const std::string& s);
  std::string str() const;
};

using BoolMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-kind admissibility. admit[u](i,j) == 1 iff attention of kind u from
/// node i to node j is allowed.
struct AttentionMasks {
  std::array<BoolMat, kNumKinds> admit;
  std::array<bool, kNumKinds> any{};            // kind has at least one admissible entry
  std::vector<std::vector<int>> neighborhoods;  // N_i for the nn kind, self excluded

  const BoolMat& operator[](Kind k) const { return admit[static_cast<int>(k)]; }
};

/// Builds the admissibility matrices for an instance.
///   nn: dense admits all; threshold admits j with D(i,j) <= d_t; knn admits
///       the k nearest nodes by distance (ties broken by lower index). Self
///       is always admitted for nn.
///   ps: (i,j) in P.   sp: (j,i) in P.   mm: same chain, self excluded.
AttentionMasks build_masks(const Instance& inst, const Sparsify& sparsify);

}  // namespace tsppc
