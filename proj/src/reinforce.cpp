#include "reinforce.hpp"

#include <cmath>

namespace tsppc {

void adam_step(Model& theta, const Model& grad, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto tv = param_views(theta);
  auto gv = param_views(const_cast<Model&>(grad));
  auto mv = param_views(state.m);
  auto vv = param_views(state.v);
  for (std::size_t p = 0; p < tv.size(); ++p) {
    double* t = tv[p].data;
    const double* g = gv[p].data;
    double* m = mv[p].data;
    double* v = vv[p].data;
    for (std::ptrdiff_t i = 0; i < tv[p].size; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      t[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clip_grad_norm(Model& grad, double max_norm) {
  double norm = std::sqrt(param_sq_norm(grad));
  if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& v : param_views(grad))
      for (std::ptrdiff_t i = 0; i < v.size; ++i) v.data[i] *= s;
  }
  return norm;
}

void zero_params(Model& m) {
  for (auto& v : param_views(m))
    for (std::ptrdiff_t i = 0; i < v.size; ++i) v.data[i] = 0.0;
}

void axpy_params(double alpha, const Model& x, Model& y) {
  auto xv = param_views(const_cast<Model&>(x));
  auto yv = param_views(y);
  for (std::size_t p = 0; p < xv.size(); ++p)
    for (std::ptrdiff_t i = 0; i < xv[p].size; ++i) yv[p].data[i] += alpha * xv[p].data[i];
}

PreparedBatch prepare_batch(const std::vector<const Instance*>& batch,
                            const std::vector<const AttentionMasks*>& masks,
                            const Model& model, BnMode mode, bool want_cache, int threads) {
  PreparedBatch prep;
  prep.enc = encode_batch(batch, masks, model, mode, want_cache ? &prep.cache : nullptr,
                          mode == BnMode::Batch ? &prep.bn_stats : nullptr, threads);
  prep.ctx.resize(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int n = batch[i]->n;
      prep.ctx[i] = make_decoder_context(
          *batch[i], prep.enc.H.middleRows(prep.enc.row0[i], n),
          prep.enc.graph.row(i).transpose(), model);
    }
  });
  return prep;
}

double score_tours(const std::vector<const Instance*>& batch,
                   const std::vector<const AttentionMasks*>& masks, const Model& model,
                   PreparedBatch& prep, const std::vector<std::vector<int>>& orders,
                   const std::vector<double>& coeffs, Model* grad, int threads) {
  const std::size_t count = batch.size();
  std::vector<double> logps(count, 0.0);

  if (!grad) {
    parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        logps[i] = score_tour(prep.ctx[i], model, orders[i]);
    });
  } else {
    const int d_h = model.cfg.d_h;
    Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(prep.enc.H.rows(), d_h);
    Eigen::MatrixXd dGraph = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(count), d_h);

    // Per-chunk gradient buffers merged in fixed order keep the result
    // deterministic for a given thread count.
    int nchunks = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    std::vector<Model> partial;
    partial.reserve(nchunks);
    for (int c = 0; c < nchunks; ++c) partial.push_back(model.like_zero());
    std::size_t chunk = (count + nchunks - 1) / nchunks;
    parallel_for(nchunks, threads, [&](std::size_t cb, std::size_t ce) {
      for (std::size_t c = cb; c < ce; ++c) {
        for (std::size_t i = c * chunk; i < std::min(count, (c + 1) * chunk); ++i) {
          Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(d_h);
          logps[i] = decoder_backward(prep.ctx[i], model, orders[i], coeffs[i], partial[c],
                                      dH.middleRows(prep.enc.row0[i], batch[i]->n), dg);
          dGraph.row(i) = dg;
        }
      }
    });
    for (auto& p : partial) axpy_params(1.0, p, *grad);
    encoder_backward(batch, masks, model, prep.cache, std::move(dH), dGraph, *grad, threads);
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < count; ++i) loss += coeffs[i] * logps[i];
  return loss;
}

ReinforceResult reinforce_loss(const std::vector<const Instance*>& batch,
                               const std::vector<const AttentionMasks*>& masks,
                               const Model& policy, const Model& baseline, std::uint64_t seed,
                               int threads) {
  const std::size_t count = batch.size();
  if (count == 0) throw Error(ErrorCode::Argument, "empty batch");

  ReinforceResult out;
  out.grad = policy.like_zero();

  // Sample one tour per instance from the live policy.
  PreparedBatch prep = prepare_batch(batch, masks, policy, BnMode::Batch, true, threads);
  out.bn_stats = prep.bn_stats;
  std::vector<std::vector<int>> orders(count);
  std::vector<double> sample_len(count);
  parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(Rng::derive(seed, i));
      RolloutResult r = decode_tour(prep.ctx[i], policy, DecodePolicy::sample(rng));
      sample_len[i] = r.tour.length;
      orders[i] = std::move(r.tour.order);
    }
  });

  // Greedy rollout baseline under the frozen baseline model.
  PreparedBatch bprep = prepare_batch(batch, masks, baseline, BnMode::Running, false, threads);
  std::vector<double> base_len(count);
  parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      base_len[i] = decode_tour(bprep.ctx[i], baseline, DecodePolicy::greedy()).tour.length;
  });

  std::vector<double> coeffs(count);
  for (std::size_t i = 0; i < count; ++i) {
    double adv = sample_len[i] - base_len[i];
    coeffs[i] = adv / static_cast<double>(count);
    out.mean_advantage += adv / static_cast<double>(count);
    out.mean_sample_len += sample_len[i] / static_cast<double>(count);
    out.mean_baseline_len += base_len[i] / static_cast<double>(count);
  }

  out.loss = score_tours(batch, masks, policy, prep, orders, coeffs, &out.grad, threads);
  if (!std::isfinite(out.loss))
    throw Error(ErrorCode::Numeric, "non-finite REINFORCE loss");
  return out;
}

}  // namespace tsppc
