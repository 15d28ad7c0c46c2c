#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "encoder.hpp"
#include "instance.hpp"
#include "masks.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace tsppc {

/// Partial tour under construction. A node is selectable iff it is unvisited
/// and all of its predecessors have been visited; precedence acyclicity
/// guarantees at least one selectable node before completion.
struct DecodeState {
  std::vector<int> order;  // placed prefix, order[0] == start
  std::vector<std::uint8_t> visited;
  std::vector<int> unvisited_preds;

  int placed() const { return static_cast<int>(order.size()); }
  bool terminal(int n) const { return placed() >= n; }
  bool selectable(int v) const { return !visited[v] && unvisited_preds[v] == 0; }
  std::vector<int> selectable_nodes() const;
};

/// Places the prescribed start node.
DecodeState init_state(const Instance& inst);

/// Marks `node` visited and releases its successors.
void advance_state(DecodeState& state, const Instance& inst, int node);

/// Per-instance projections that stay fixed over a whole decode: glimpse
/// keys/values and final compatibility keys (head column blocks).
struct DecoderContext {
  const Instance* inst = nullptr;
  Eigen::MatrixXd H;      // n x d_h final node embeddings
  Eigen::VectorXd graph;  // d_h
  Eigen::MatrixXd Kg, Vg; // n x d_h
  Eigen::MatrixXd Kf;     // n x d_h
};

DecoderContext make_decoder_context(const Instance& inst, Eigen::MatrixXd H,
                                    Eigen::VectorXd graph, const Model& model);

/// One decoding step: context (graph embedding + last node), masked glimpse,
/// clipped compatibilities, softmax. Probabilities of non-selectable nodes
/// are exactly zero. Throws on a terminal state.
Eigen::VectorXd step_probabilities(const DecoderContext& ctx, const Model& model,
                                   const DecodeState& state);

/// Convenience overload matching the operation contract (embeddings + graph
/// embedding in, probability vector out).
Eigen::VectorXd step_probabilities(const Eigen::MatrixXd& embeddings,
                                   const Eigen::VectorXd& graph_emb, const Instance& inst,
                                   const DecodeState& state, const Model& model);

struct RolloutResult {
  Tour tour;
  std::vector<double> step_logp;  // n-1 entries (the prescribed start is free)
  double logp = 0.0;
};

/// Node selection rule during decoding.
///   Greedy — argmax probability, ties to the lowest node index.
///   Sample — categorical draw using the supplied rng.
///   Forced — replay a fixed order (teacher forcing), scoring its log-prob.
struct DecodePolicy {
  enum class Type { Greedy, Sample, Forced };
  Type type = Type::Greedy;
  Rng* rng = nullptr;
  const std::vector<int>* forced = nullptr;

  static DecodePolicy greedy() { return {}; }
  static DecodePolicy sample(Rng& rng) { return {Type::Sample, &rng, nullptr}; }
  static DecodePolicy forced(const std::vector<int>& order) {
    return {Type::Forced, nullptr, &order};
  }
};

/// Constructs a complete tour from precomputed context. The result always
/// satisfies is_feasible; its length is filled in.
RolloutResult decode_tour(const DecoderContext& ctx, const Model& model, DecodePolicy policy);

enum class DecodeMode { Greedy, Sample };

/// Full rollout: encode (frozen BN statistics), then decode.
RolloutResult rollout(const Instance& inst, const AttentionMasks& masks, const Model& model,
                      DecodeMode mode, std::uint64_t seed = 0);

/// Minimum-length tour over S sampled rollouts; sample s uses the derived
/// stream (seed, s), so the sample set for a smaller S is a prefix of the
/// set for a larger S under the same seed.
RolloutResult best_of_samples(const Instance& inst, const AttentionMasks& masks,
                              const Model& model, int samples, std::uint64_t seed);

/// Teacher-forced log-probability of an existing tour.
double score_tour(const DecoderContext& ctx, const Model& model, const std::vector<int>& order);

/// Accumulates coeff * d(log p(order))/dtheta into grad, dH and dGraph.
/// Replays the decode steps; `order` must be feasible. Returns log p(order).
double decoder_backward(const DecoderContext& ctx, const Model& model,
                        const std::vector<int>& order, double coeff, Model& grad,
                        Eigen::Ref<Eigen::MatrixXd> dH, Eigen::Ref<Eigen::RowVectorXd> dGraph);

}  // namespace tsppc
