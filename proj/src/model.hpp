#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "masks.hpp"

namespace tsppc {

/// Architecture hyperparameters. The head dimension d_k is d_h / heads.
struct ModelConfig {
  int d_h = 128;
  int heads = 8;
  int n_layers = 3;
  int ff_dim = 512;
  double clip = 10.0;  // decoder logit clipping constant C
  // Active attention kinds; nn is always on. use_mm=false is the "without
  // mm" ablation; dropping ps/sp as well gives a plain masked-TSP encoder.
  bool use_ps = true;
  bool use_sp = true;
  bool use_mm = true;

  int d_k() const { return d_h / heads; }
  std::vector<Kind> kinds() const;
  std::string kinds_string() const;
  void set_kinds(const std::string& csv);  // e.g. "nn,ps,sp,mm"
  void check() const;
};

/// Per-kind attention weights with all heads stacked: Wq/Wk/Wv have shape
/// (d_h x in_dim) and head b occupies rows [b*d_k, (b+1)*d_k).
struct KindWeights {
  Eigen::MatrixXd Wq, Wk, Wv;
};

struct BnLayer {
  Eigen::VectorXd gamma, beta;        // trainable
  Eigen::VectorXd run_mean, run_var;  // running statistics (state, not trained)
};

struct EncoderLayer {
  std::array<KindWeights, kNumKinds> attn;  // inactive kinds stay empty
  Eigen::MatrixXd Wo;                       // d_h x d_h; head b = cols [b*d_k, (b+1)*d_k)
  Eigen::MatrixXd ff_W1;                    // ff_dim x d_h
  Eigen::VectorXd ff_b1;
  Eigen::MatrixXd ff_W2;                    // d_h x ff_dim
  Eigen::VectorXd ff_b2;
  BnLayer bn1, bn2;
};

struct DecoderWeights {
  KindWeights glimpse;       // Wq: d_h x 2*d_h, Wk/Wv: d_h x d_h (heads stacked)
  Eigen::MatrixXd glimpse_Wo;  // d_h x d_h, heads as column blocks
  Eigen::MatrixXd Wq;          // d_h x d_h, final compatibility query
  Eigen::MatrixXd Wk;          // d_h x d_h, final compatibility keys
};

/// All trainable weights plus batch-norm state. A Model is immutable during
/// evaluation and may be shared across concurrent rollouts.
struct Model {
  ModelConfig cfg;
  Eigen::MatrixXd embed_W;  // d_h x 2
  Eigen::VectorXd embed_b;
  std::vector<EncoderLayer> layers;
  DecoderWeights dec;
  std::string sparsify_hint = "dense";  // mask mode the model was trained with

  /// Random initialization: every matrix entry uniform in +-1/sqrt(fan_in)
  /// where fan_in is the matrix column count (biases use their layer's
  /// fan_in); BN gamma=1, beta=0, running stats (0, 1).
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  /// Same architecture, all parameters zero (gradient/optimizer buffers).
  Model like_zero() const;
};

/// A flat view of one named parameter group, in canonical order.
struct ParamView {
  std::string name;
  double* data;
  std::ptrdiff_t size;
};

/// Canonical enumeration of all trainable parameter groups.
std::vector<ParamView> param_views(Model& m);
/// Canonical enumeration of the batch-norm running statistics.
std::vector<ParamView> state_views(Model& m);

std::ptrdiff_t param_count(const Model& m);
double param_sq_norm(const Model& m);

// ---- checkpoint format: text header + raw little-endian doubles ----

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace tsppc
