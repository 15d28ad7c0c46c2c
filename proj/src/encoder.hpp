#pragma once

#include <Eigen/Dense>
#include <vector>

#include "instance.hpp"
#include "masks.hpp"
#include "model.hpp"

namespace tsppc {

/// Batch-norm statistics source. Batch mode normalizes with the statistics
/// of the rows being encoded (training); Running mode uses the frozen
/// running statistics stored in the model (evaluation).
enum class BnMode { Batch, Running };

constexpr double kBnEps = 1e-5;

/// Output of encoding a batch of instances: node embeddings stacked row-wise
/// (instance i occupies rows [row0[i], row0[i] + n_i)) and one graph
/// embedding (mean of the instance's final node embeddings) per instance.
struct EncodeBatchResult {
  Eigen::MatrixXd H;      // total_nodes x d_h
  Eigen::MatrixXd graph;  // batch x d_h
  std::vector<int> row0;
};

/// Batch statistics observed by one BN site during a Batch-mode forward
/// pass, reported in site order (layer 0 bn1, layer 0 bn2, layer 1 bn1, ...)
/// so the training loop can update the running statistics.
struct BnBatchStats {
  Eigen::VectorXd mean, var;
};

/// Activations saved by the forward pass for the backward pass. Projections
/// and feed-forward activations are cheap to recompute and are not stored.
struct EncoderCache {
  Eigen::MatrixXd X;  // total_nodes x 2 raw coordinates
  struct Layer {
    Eigen::MatrixXd H_in;
    // Attention weights per (instance, kind, head); empty matrix when the
    // kind has no admissible entry for that instance (zero contribution).
    std::vector<Eigen::MatrixXd> A;
    Eigen::MatrixXd bn1_xhat, bn2_xhat;
    Eigen::VectorXd bn1_invstd, bn2_invstd;
    Eigen::MatrixXd H1;  // post-bn1, input of the feed-forward block
  };
  std::vector<Layer> layers;

  int attn_index(int inst, int kind, int head, int heads) const {
    return (inst * kNumKinds + kind) * heads + head;
  }
};

/// Encodes a batch of instances. masks[i] must belong to insts[i]. cache and
/// stats_out may be null; stats_out is only filled in Batch mode. Throws
/// ErrorCode::Numeric when activations become non-finite, identifying the
/// layer and attention kind.
EncodeBatchResult encode_batch(const std::vector<const Instance*>& insts,
                               const std::vector<const AttentionMasks*>& masks,
                               const Model& model, BnMode mode, EncoderCache* cache,
                               std::vector<BnBatchStats>* stats_out, int threads);

/// Single-instance convenience wrapper using the frozen running statistics.
/// Returns (node embeddings n x d_h, graph embedding).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> encode(const Instance& inst,
                                                   const AttentionMasks& masks,
                                                   const Model& model);

/// Accumulates parameter gradients for a Batch-mode forward pass recorded in
/// `cache`. dH is the gradient w.r.t. the final node embeddings and dGraph
/// w.r.t. the graph embeddings; both are consumed.
void encoder_backward(const std::vector<const Instance*>& insts,
                      const std::vector<const AttentionMasks*>& masks, const Model& model,
                      const EncoderCache& cache, Eigen::MatrixXd dH,
                      const Eigen::MatrixXd& dGraph, Model& grad, int threads);

/// Row-wise softmax over admissible entries; inadmissible entries become 0
/// and rows with no admissible entry become all-zero.
void masked_softmax_inplace(Eigen::MatrixXd& scores, const BoolMat& admit);

}  // namespace tsppc
