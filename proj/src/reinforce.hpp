#pragma once

#include <cstdint>
#include <vector>

#include "decoder.hpp"
#include "encoder.hpp"
#include "model.hpp"

namespace tsppc {

/// Adam moment buffers, structurally identical to the model.
struct AdamState {
  Model m, v;
  std::int64_t step = 0;

  static AdamState init(const Model& model) { return {model.like_zero(), model.like_zero(), 0}; }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Model& theta, const Model& grad, AdamState& state, const AdamConfig& cfg);

/// Scales the gradient so its global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(Model& grad, double max_norm);

void zero_params(Model& m);
void axpy_params(double alpha, const Model& x, Model& y);  // y += alpha * x

/// Encoder outputs plus per-instance decoder contexts for one batch.
struct PreparedBatch {
  EncodeBatchResult enc;
  EncoderCache cache;  // filled only when requested
  std::vector<DecoderContext> ctx;
  std::vector<BnBatchStats> bn_stats;  // Batch mode only
};

PreparedBatch prepare_batch(const std::vector<const Instance*>& batch,
                            const std::vector<const AttentionMasks*>& masks,
                            const Model& model, BnMode mode, bool want_cache, int threads);

/// Loss sum(coeffs[s] * log p(orders[s])) over teacher-forced tours, with
/// optional parameter gradients. The batch must have been prepared in Batch
/// BN mode with a cache when grad is non-null.
double score_tours(const std::vector<const Instance*>& batch,
                   const std::vector<const AttentionMasks*>& masks, const Model& model,
                   PreparedBatch& prep, const std::vector<std::vector<int>>& orders,
                   const std::vector<double>& coeffs, Model* grad, int threads);

struct ReinforceResult {
  double loss = 0.0;            // mean over the batch of advantage * log p
  double mean_advantage = 0.0;  // mean of L(sampled) - b(s)
  double mean_sample_len = 0.0;
  double mean_baseline_len = 0.0;
  Model grad;
  std::vector<BnBatchStats> bn_stats;  // policy-encoder batch statistics
};

/// One REINFORCE step with a greedy rollout baseline: samples one tour per
/// instance from the policy (batch-statistics BN), computes b(s) by greedy
/// decoding with the frozen baseline model (running-statistics BN), and
/// returns the gradient of mean((L(tour) - b(s)) * log p(tour)).
ReinforceResult reinforce_loss(const std::vector<const Instance*>& batch,
                               const std::vector<const AttentionMasks*>& masks,
                               const Model& policy, const Model& baseline, std::uint64_t seed,
                               int threads);

}  // namespace tsppc
