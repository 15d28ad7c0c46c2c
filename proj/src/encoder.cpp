#include "encoder.hpp"

#include <cmath>
#include <limits>

namespace tsppc {

void masked_softmax_inplace(Eigen::MatrixXd& scores, const BoolMat& admit) {
  const Eigen::Index n = scores.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (admit(i, j) && scores(i, j) > mx) mx = scores(i, j);
    if (!std::isfinite(mx)) {  // no admissible entry: zero contribution
      scores.row(i).setZero();
      continue;
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      double e = admit(i, j) ? std::exp(scores(i, j) - mx) : 0.0;
      scores(i, j) = e;
      sum += e;
    }
    scores.row(i) /= sum;
  }
}

namespace {

Eigen::VectorXd colsum(const Eigen::MatrixXd& m) {
  return m.colwise().sum().transpose();
}

struct BatchLayout {
  std::vector<int> row0;
  std::vector<int> sizes;
  int total = 0;
};

BatchLayout layout_of(const std::vector<const Instance*>& insts) {
  BatchLayout lay;
  lay.row0.reserve(insts.size());
  lay.sizes.reserve(insts.size());
  for (const auto* inst : insts) {
    lay.row0.push_back(lay.total);
    lay.sizes.push_back(inst->n);
    lay.total += inst->n;
  }
  return lay;
}

struct BnForward {
  Eigen::MatrixXd out, xhat;
  Eigen::VectorXd invstd;
  Eigen::VectorXd mean, var;  // batch statistics (Batch mode only)
};

BnForward bn_forward(const Eigen::MatrixXd& x, const BnLayer& bn, BnMode mode, bool keep_xhat) {
  BnForward r;
  const double rows = static_cast<double>(x.rows());
  Eigen::VectorXd mean, var;
  if (mode == BnMode::Batch) {
    mean = colsum(x) / rows;
    Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    var = colsum(centered.cwiseProduct(centered)) / rows;  // biased variance
    r.mean = mean;
    r.var = var;
    r.invstd = (var.array() + kBnEps).rsqrt().matrix();
    r.xhat = centered * r.invstd.asDiagonal();
  } else {
    mean = bn.run_mean;
    var = bn.run_var;
    r.invstd = (var.array() + kBnEps).rsqrt().matrix();
    r.xhat = (x.rowwise() - mean.transpose()) * r.invstd.asDiagonal();
  }
  r.out = r.xhat * bn.gamma.asDiagonal();
  r.out.rowwise() += bn.beta.transpose();
  if (!keep_xhat) {
    r.xhat.resize(0, 0);
  }
  return r;
}

// Gradient of a Batch-mode BN site. Returns dX; accumulates dgamma/dbeta.
Eigen::MatrixXd bn_backward(const Eigen::MatrixXd& dY, const Eigen::MatrixXd& xhat,
                            const Eigen::VectorXd& invstd, const BnLayer& bn, BnLayer& grad) {
  const double rows = static_cast<double>(dY.rows());
  Eigen::VectorXd sum_dy = colsum(dY);
  Eigen::VectorXd sum_dy_xhat = colsum(dY.cwiseProduct(xhat));
  grad.beta += sum_dy;
  grad.gamma += sum_dy_xhat;
  Eigen::MatrixXd dX = dY;
  dX.rowwise() -= (sum_dy / rows).transpose();
  dX -= xhat * (sum_dy_xhat / rows).asDiagonal();
  dX = dX * bn.gamma.cwiseProduct(invstd).asDiagonal();
  return dX;
}

// Identifies which attention kind produced non-finite values, then throws.
[[noreturn]] void diagnose_layer(int layer_idx, const std::vector<const Instance*>& insts,
                                 const std::vector<const AttentionMasks*>& masks,
                                 const Model& model, const Eigen::MatrixXd& H_in,
                                 const BatchLayout& lay) {
  const auto& layer = model.layers[layer_idx];
  const int dk = model.cfg.d_k();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (Kind u : model.cfg.kinds()) {
    const auto& kw = layer.attn[static_cast<int>(u)];
    Eigen::MatrixXd Q = H_in * kw.Wq.transpose();
    Eigen::MatrixXd K = H_in * kw.Wk.transpose();
    Eigen::MatrixXd V = H_in * kw.Wv.transpose();
    for (std::size_t i = 0; i < insts.size(); ++i) {
      if (!masks[i]->any[static_cast<int>(u)]) continue;
      const auto& admit = masks[i]->admit[static_cast<int>(u)];
      for (int b = 0; b < model.cfg.heads; ++b) {
        Eigen::MatrixXd S = Q.block(lay.row0[i], b * dk, lay.sizes[i], dk) *
                            K.block(lay.row0[i], b * dk, lay.sizes[i], dk).transpose() * scale;
        masked_softmax_inplace(S, admit);
        Eigen::MatrixXd out = S * V.block(lay.row0[i], b * dk, lay.sizes[i], dk);
        if (!out.allFinite())
          throw Error(ErrorCode::Numeric,
                      "non-finite activations in encoder layer " + std::to_string(layer_idx) +
                          ", attention kind " + kind_str(u));
      }
    }
  }
  throw Error(ErrorCode::Numeric, "non-finite activations in encoder layer " +
                                      std::to_string(layer_idx) + " (feed-forward/normalization)");
}

}  // namespace

EncodeBatchResult encode_batch(const std::vector<const Instance*>& insts,
                               const std::vector<const AttentionMasks*>& masks,
                               const Model& model, BnMode mode, EncoderCache* cache,
                               std::vector<BnBatchStats>* stats_out, int threads) {
  if (insts.size() != masks.size() || insts.empty())
    throw Error(ErrorCode::Argument, "encode_batch: instance/mask lists empty or mismatched");
  const auto& cfg = model.cfg;
  const int d_h = cfg.d_h;
  const int dk = cfg.d_k();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const BatchLayout lay = layout_of(insts);
  const auto kinds = cfg.kinds();

  if (stats_out) stats_out->clear();

  Eigen::MatrixXd X(lay.total, 2);
  for (std::size_t i = 0; i < insts.size(); ++i)
    for (int v = 0; v < insts[i]->n; ++v) {
      X(lay.row0[i] + v, 0) = insts[i]->coords[v].x;
      X(lay.row0[i] + v, 1) = insts[i]->coords[v].y;
    }

  Eigen::MatrixXd H = (X * model.embed_W.transpose()).rowwise() + model.embed_b.transpose();

  if (cache) {
    cache->X = X;
    cache->layers.clear();
    cache->layers.resize(cfg.n_layers);
  }

  Eigen::MatrixXd h_in_scratch;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& layer = model.layers[l];
    EncoderCache::Layer* cl = cache ? &cache->layers[l] : nullptr;
    if (cl) {
      cl->H_in = H;
      cl->A.assign(static_cast<std::size_t>(insts.size()) * kNumKinds * cfg.heads,
                   Eigen::MatrixXd());
    } else {
      h_in_scratch = H;
    }
    const Eigen::MatrixXd& H_in = cl ? cl->H_in : h_in_scratch;

    Eigen::MatrixXd Hheads = Eigen::MatrixXd::Zero(lay.total, d_h);
    for (Kind u : kinds) {
      const int ui = static_cast<int>(u);
      bool active = false;
      for (const auto* m : masks) active |= m->any[ui];
      if (!active) continue;
      const auto& kw = layer.attn[ui];
      Eigen::MatrixXd Q = H_in * kw.Wq.transpose();
      Eigen::MatrixXd K = H_in * kw.Wk.transpose();
      Eigen::MatrixXd V = H_in * kw.Wv.transpose();
      parallel_for(insts.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          if (!masks[i]->any[ui]) continue;
          const auto& admit = masks[i]->admit[ui];
          const int r0 = lay.row0[i], n_i = lay.sizes[i];
          for (int b = 0; b < cfg.heads; ++b) {
            Eigen::MatrixXd S = Q.block(r0, b * dk, n_i, dk) *
                                K.block(r0, b * dk, n_i, dk).transpose() * scale;
            masked_softmax_inplace(S, admit);
            Hheads.block(r0, b * dk, n_i, dk).noalias() += S * V.block(r0, b * dk, n_i, dk);
            if (cl)
              cl->A[cache->attn_index(static_cast<int>(i), ui, b, cfg.heads)] = std::move(S);
          }
        }
      });
    }

    Eigen::MatrixXd pre_bn1 = H_in + Hheads * layer.Wo.transpose();
    BnForward bn1 = bn_forward(pre_bn1, layer.bn1, mode, cache != nullptr);
    if (stats_out && mode == BnMode::Batch) stats_out->push_back({bn1.mean, bn1.var});

    Eigen::MatrixXd hidden =
        (bn1.out * layer.ff_W1.transpose()).rowwise() + layer.ff_b1.transpose();
    Eigen::MatrixXd ff =
        (hidden.cwiseMax(0.0) * layer.ff_W2.transpose()).rowwise() + layer.ff_b2.transpose();
    Eigen::MatrixXd pre_bn2 = bn1.out + ff;
    BnForward bn2 = bn_forward(pre_bn2, layer.bn2, mode, cache != nullptr);
    if (stats_out && mode == BnMode::Batch) stats_out->push_back({bn2.mean, bn2.var});

    if (cl) {
      cl->bn1_xhat = std::move(bn1.xhat);
      cl->bn1_invstd = std::move(bn1.invstd);
      cl->H1 = std::move(bn1.out);
      cl->bn2_xhat = std::move(bn2.xhat);
      cl->bn2_invstd = std::move(bn2.invstd);
    }
    H = std::move(bn2.out);
    if (!H.allFinite()) diagnose_layer(l, insts, masks, model, H_in, lay);
  }

  EncodeBatchResult res;
  res.row0 = lay.row0;
  res.graph.resize(static_cast<Eigen::Index>(insts.size()), d_h);
  for (std::size_t i = 0; i < insts.size(); ++i)
    res.graph.row(i) =
        H.middleRows(lay.row0[i], lay.sizes[i]).colwise().sum() / double(lay.sizes[i]);
  res.H = std::move(H);
  return res;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> encode(const Instance& inst,
                                                   const AttentionMasks& masks,
                                                   const Model& model) {
  auto res = encode_batch({&inst}, {&masks}, model, BnMode::Running, nullptr, nullptr, 1);
  return {std::move(res.H), res.graph.row(0).transpose()};
}

void encoder_backward(const std::vector<const Instance*>& insts,
                      const std::vector<const AttentionMasks*>& masks, const Model& model,
                      const EncoderCache& cache, Eigen::MatrixXd dH,
                      const Eigen::MatrixXd& dGraph, Model& grad, int threads) {
  const auto& cfg = model.cfg;
  const int d_h = cfg.d_h;
  const int dk = cfg.d_k();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const BatchLayout lay = layout_of(insts);

  // Fold the graph-embedding (mean) gradient into the node rows.
  for (std::size_t i = 0; i < insts.size(); ++i)
    dH.middleRows(lay.row0[i], lay.sizes[i]).rowwise() += dGraph.row(i) / double(lay.sizes[i]);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& layer = model.layers[l];
    auto& glayer = grad.layers[l];
    const auto& cl = cache.layers[l];

    // BN2 and the feed-forward block.
    Eigen::MatrixXd dPre2 = bn_backward(dH, cl.bn2_xhat, cl.bn2_invstd, layer.bn2, glayer.bn2);
    Eigen::MatrixXd hidden =
        (cl.H1 * layer.ff_W1.transpose()).rowwise() + layer.ff_b1.transpose();
    Eigen::MatrixXd act = hidden.cwiseMax(0.0);
    Eigen::MatrixXd dAct = dPre2 * layer.ff_W2;
    glayer.ff_W2.noalias() += dPre2.transpose() * act;
    glayer.ff_b2 += colsum(dPre2);
    Eigen::MatrixXd dHidden =
        dAct.cwiseProduct((hidden.array() > 0.0).cast<double>().matrix());
    glayer.ff_W1.noalias() += dHidden.transpose() * cl.H1;
    glayer.ff_b1 += colsum(dHidden);
    Eigen::MatrixXd dH1 = dPre2 + dHidden * layer.ff_W1;

    // BN1 and the heterogeneous attention block.
    Eigen::MatrixXd dPre1 = bn_backward(dH1, cl.bn1_xhat, cl.bn1_invstd, layer.bn1, glayer.bn1);
    dH = dPre1;  // residual branch; the attention branch adds below

    Eigen::MatrixXd dHheads = dPre1 * layer.Wo;
    Eigen::MatrixXd Hheads = Eigen::MatrixXd::Zero(lay.total, d_h);  // recomputed for dWo

    for (Kind u : cfg.kinds()) {
      const int ui = static_cast<int>(u);
      bool active = false;
      for (const auto* m : masks) active |= m->any[ui];
      if (!active) continue;
      const auto& kw = layer.attn[ui];
      Eigen::MatrixXd Q = cl.H_in * kw.Wq.transpose();
      Eigen::MatrixXd K = cl.H_in * kw.Wk.transpose();
      Eigen::MatrixXd V = cl.H_in * kw.Wv.transpose();
      Eigen::MatrixXd dQ = Eigen::MatrixXd::Zero(lay.total, d_h);
      Eigen::MatrixXd dK = Eigen::MatrixXd::Zero(lay.total, d_h);
      Eigen::MatrixXd dV = Eigen::MatrixXd::Zero(lay.total, d_h);
      parallel_for(insts.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          if (!masks[i]->any[ui]) continue;
          const int r0 = lay.row0[i], n_i = lay.sizes[i];
          for (int b = 0; b < cfg.heads; ++b) {
            const Eigen::MatrixXd& A =
                cl.A[cache.attn_index(static_cast<int>(i), ui, b, cfg.heads)];
            auto Vb = V.block(r0, b * dk, n_i, dk);
            auto dOut = dHheads.block(r0, b * dk, n_i, dk);
            Hheads.block(r0, b * dk, n_i, dk).noalias() += A * Vb;
            Eigen::MatrixXd dA = dOut * Vb.transpose();
            dV.block(r0, b * dk, n_i, dk).noalias() += A.transpose() * dOut;
            Eigen::VectorXd dot = dA.cwiseProduct(A).rowwise().sum();
            Eigen::MatrixXd dS = A.cwiseProduct(dA.colwise() - dot);
            auto Qb = Q.block(r0, b * dk, n_i, dk);
            auto Kb = K.block(r0, b * dk, n_i, dk);
            dQ.block(r0, b * dk, n_i, dk).noalias() += dS * Kb * scale;
            dK.block(r0, b * dk, n_i, dk).noalias() += dS.transpose() * Qb * scale;
          }
        }
      });
      auto& gkw = glayer.attn[ui];
      gkw.Wq.noalias() += dQ.transpose() * cl.H_in;
      gkw.Wk.noalias() += dK.transpose() * cl.H_in;
      gkw.Wv.noalias() += dV.transpose() * cl.H_in;
      dH.noalias() += dQ * kw.Wq;
      dH.noalias() += dK * kw.Wk;
      dH.noalias() += dV * kw.Wv;
    }
    glayer.Wo.noalias() += dPre1.transpose() * Hheads;
  }

  grad.embed_W.noalias() += dH.transpose() * cache.X;
  grad.embed_b += colsum(dH);
}

}  // namespace tsppc
