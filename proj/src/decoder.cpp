#include "decoder.hpp"

#include <cmath>
#include <limits>

namespace tsppc {

std::vector<int> DecodeState::selectable_nodes() const {
  std::vector<int> out;
  for (int v = 0; v < static_cast<int>(visited.size()); ++v)
    if (selectable(v)) out.push_back(v);
  return out;
}

DecodeState init_state(const Instance& inst) {
  DecodeState st;
  st.visited.assign(inst.n, 0);
  st.unvisited_preds.resize(inst.n);
  for (int v = 0; v < inst.n; ++v) st.unvisited_preds[v] = static_cast<int>(inst.preds[v].size());
  st.order.reserve(inst.n);
  st.order.push_back(inst.start);
  st.visited[inst.start] = 1;
  for (int w : inst.succs[inst.start]) --st.unvisited_preds[w];
  return st;
}

void advance_state(DecodeState& state, const Instance& inst, int node) {
  state.order.push_back(node);
  state.visited[node] = 1;
  for (int w : inst.succs[node]) --state.unvisited_preds[w];
}

DecoderContext make_decoder_context(const Instance& inst, Eigen::MatrixXd H,
                                    Eigen::VectorXd graph, const Model& model) {
  DecoderContext ctx;
  ctx.inst = &inst;
  ctx.Kg.noalias() = H * model.dec.glimpse.Wk.transpose();
  ctx.Vg.noalias() = H * model.dec.glimpse.Wv.transpose();
  ctx.Kf.noalias() = H * model.dec.Wk.transpose();
  ctx.H = std::move(H);
  ctx.graph = std::move(graph);
  return ctx;
}

namespace {

// Everything one step computes, kept for the immediate backward replay.
struct StepWork {
  std::vector<int> sel;
  Eigen::VectorXd hc;      // 2*d_h
  Eigen::MatrixXd qg;      // d_k x heads
  Eigen::MatrixXd attn;    // |sel| x heads, glimpse attention weights
  Eigen::VectorXd hg, qc;  // d_h
  Eigen::VectorXd tanh_t;  // |sel|
  Eigen::VectorXd p_sel;   // |sel|
};

// Forward pass of one decoding step; probabilities over selectable nodes.
void step_forward(const DecoderContext& ctx, const Model& model, const DecodeState& st,
                  StepWork& w) {
  const auto& cfg = model.cfg;
  const int d_h = cfg.d_h;
  const int dk = cfg.d_k();
  const int heads = cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  w.sel = st.selectable_nodes();
  if (w.sel.empty())
    throw Error(ErrorCode::Internal, "decode step with no selectable node");
  const int ns = static_cast<int>(w.sel.size());

  w.hc.resize(2 * d_h);
  w.hc.head(d_h) = ctx.graph;
  w.hc.tail(d_h) = ctx.H.row(st.order.back()).transpose();

  // Glimpse: multi-head attention of the context over the selectable nodes.
  Eigen::MatrixXd Kg_sel(ns, d_h), Vg_sel(ns, d_h), Kf_sel(ns, d_h);
  for (int s = 0; s < ns; ++s) {
    Kg_sel.row(s) = ctx.Kg.row(w.sel[s]);
    Vg_sel.row(s) = ctx.Vg.row(w.sel[s]);
    Kf_sel.row(s) = ctx.Kf.row(w.sel[s]);
  }

  w.qg.noalias() = (model.dec.glimpse.Wq * w.hc).reshaped(dk, heads);
  w.attn.resize(ns, heads);
  w.hg = Eigen::VectorXd::Zero(d_h);
  for (int b = 0; b < heads; ++b) {
    Eigen::VectorXd scores = Kg_sel.middleCols(b * dk, dk) * w.qg.col(b) * scale;
    double mx = scores.maxCoeff();
    Eigen::VectorXd a = (scores.array() - mx).exp();
    a /= a.sum();
    w.attn.col(b) = a;
    Eigen::VectorXd g = Vg_sel.middleCols(b * dk, dk).transpose() * a;
    w.hg.noalias() += model.dec.glimpse_Wo.middleCols(b * dk, dk) * g;
  }

  w.qc.noalias() = model.dec.Wq * w.hg;
  Eigen::VectorXd ht = Kf_sel * w.qc * scale;
  w.tanh_t = ht.array().tanh();
  Eigen::VectorXd logits = cfg.clip * w.tanh_t;

  double mx = logits.maxCoeff();
  w.p_sel = (logits.array() - mx).exp();
  w.p_sel /= w.p_sel.sum();
}

Eigen::VectorXd scatter_probs(const StepWork& w, int n) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < w.sel.size(); ++s) p[w.sel[s]] = w.p_sel[s];
  return p;
}

int choose(const StepWork& w, const DecodePolicy& policy, int step_idx) {
  switch (policy.type) {
    case DecodePolicy::Type::Greedy: {
      int best = 0;
      for (int s = 1; s < static_cast<int>(w.sel.size()); ++s)
        if (w.p_sel[s] > w.p_sel[best]) best = s;  // ties keep the lowest index
      return best;
    }
    case DecodePolicy::Type::Sample: {
      std::vector<double> p(w.p_sel.data(), w.p_sel.data() + w.p_sel.size());
      return policy.rng->categorical(p);
    }
    case DecodePolicy::Type::Forced: {
      int want = (*policy.forced)[step_idx];
      for (int s = 0; s < static_cast<int>(w.sel.size()); ++s)
        if (w.sel[s] == want) return s;
      throw Error(ErrorCode::Invalid, "forced tour selects an infeasible node " +
                                          std::to_string(want) + " at step " +
                                          std::to_string(step_idx));
    }
  }
  throw Error(ErrorCode::Internal, "bad decode policy");
}

}  // namespace

Eigen::VectorXd step_probabilities(const DecoderContext& ctx, const Model& model,
                                   const DecodeState& state) {
  if (state.terminal(ctx.inst->n))
    throw Error(ErrorCode::Argument, "step_probabilities called on a terminal state");
  StepWork w;
  step_forward(ctx, model, state, w);
  return scatter_probs(w, ctx.inst->n);
}

Eigen::VectorXd step_probabilities(const Eigen::MatrixXd& embeddings,
                                   const Eigen::VectorXd& graph_emb, const Instance& inst,
                                   const DecodeState& state, const Model& model) {
  DecoderContext ctx = make_decoder_context(inst, embeddings, graph_emb, model);
  return step_probabilities(ctx, model, state);
}

RolloutResult decode_tour(const DecoderContext& ctx, const Model& model, DecodePolicy policy) {
  const Instance& inst = *ctx.inst;
  if (policy.type == DecodePolicy::Type::Forced) {
    if (static_cast<int>(policy.forced->size()) != inst.n ||
        (*policy.forced)[0] != inst.start)
      throw Error(ErrorCode::Invalid, "forced order must be a full tour from the start node");
  }
  RolloutResult out;
  DecodeState st = init_state(inst);
  StepWork w;
  out.step_logp.reserve(inst.n - 1);
  for (int step = 1; step < inst.n; ++step) {
    step_forward(ctx, model, st, w);
    int s = choose(w, policy, step);
    double lp = std::log(w.p_sel[s]);
    out.step_logp.push_back(lp);
    out.logp += lp;
    advance_state(st, inst, w.sel[s]);
  }
  out.tour.order = std::move(st.order);
  out.tour.length = tour_length(inst, out.tour);
  return out;
}

RolloutResult rollout(const Instance& inst, const AttentionMasks& masks, const Model& model,
                      DecodeMode mode, std::uint64_t seed) {
  auto [H, graph] = encode(inst, masks, model);
  DecoderContext ctx = make_decoder_context(inst, std::move(H), std::move(graph), model);
  if (mode == DecodeMode::Greedy) return decode_tour(ctx, model, DecodePolicy::greedy());
  Rng rng(seed);
  return decode_tour(ctx, model, DecodePolicy::sample(rng));
}

RolloutResult best_of_samples(const Instance& inst, const AttentionMasks& masks,
                              const Model& model, int samples, std::uint64_t seed) {
  if (samples < 1) throw Error(ErrorCode::Argument, "sample count must be >= 1");
  auto [H, graph] = encode(inst, masks, model);
  DecoderContext ctx = make_decoder_context(inst, std::move(H), std::move(graph), model);
  RolloutResult best;
  for (int s = 0; s < samples; ++s) {
    Rng rng(Rng::derive(seed, s));
    RolloutResult r = decode_tour(ctx, model, DecodePolicy::sample(rng));
    if (s == 0 || r.tour.length < best.tour.length) best = std::move(r);
  }
  return best;
}

double score_tour(const DecoderContext& ctx, const Model& model, const std::vector<int>& order) {
  return decode_tour(ctx, model, DecodePolicy::forced(order)).logp;
}

double decoder_backward(const DecoderContext& ctx, const Model& model,
                        const std::vector<int>& order, double coeff, Model& grad,
                        Eigen::Ref<Eigen::MatrixXd> dH, Eigen::Ref<Eigen::RowVectorXd> dGraph) {
  const Instance& inst = *ctx.inst;
  const auto& cfg = model.cfg;
  const int d_h = cfg.d_h;
  const int dk = cfg.d_k();
  const int heads = cfg.heads;
  const int n = inst.n;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  double logp = 0.0;
  Eigen::MatrixXd dKg = Eigen::MatrixXd::Zero(n, d_h);
  Eigen::MatrixXd dVg = Eigen::MatrixXd::Zero(n, d_h);
  Eigen::MatrixXd dKf = Eigen::MatrixXd::Zero(n, d_h);

  DecodeState st = init_state(inst);
  StepWork w;
  for (int step = 1; step < n; ++step) {
    step_forward(ctx, model, st, w);
    const int ns = static_cast<int>(w.sel.size());
    int chosen_s = -1;
    for (int s = 0; s < ns; ++s)
      if (w.sel[s] == order[step]) chosen_s = s;
    if (chosen_s < 0)
      throw Error(ErrorCode::Invalid, "backward order selects an infeasible node at step " +
                                          std::to_string(step));
    logp += std::log(w.p_sel[chosen_s]);

    // d(coeff * log p_chosen) / dlogit_s = coeff * (1{s==chosen} - p_s)
    Eigen::VectorXd dlogit = -coeff * w.p_sel;
    dlogit[chosen_s] += coeff;

    // logits = C * tanh(ht)
    Eigen::VectorXd dht =
        (dlogit.array() * cfg.clip * (1.0 - w.tanh_t.array().square())).matrix();

    // ht_s = qc . Kf_sel_s * scale
    Eigen::MatrixXd Kf_sel(ns, d_h), Kg_sel(ns, d_h), Vg_sel(ns, d_h);
    for (int s = 0; s < ns; ++s) {
      Kf_sel.row(s) = ctx.Kf.row(w.sel[s]);
      Kg_sel.row(s) = ctx.Kg.row(w.sel[s]);
      Vg_sel.row(s) = ctx.Vg.row(w.sel[s]);
    }
    Eigen::VectorXd dqc = Kf_sel.transpose() * dht * scale;
    for (int s = 0; s < ns; ++s) dKf.row(w.sel[s]) += dht[s] * scale * w.qc.transpose();

    // qc = Wq * hg
    grad.dec.Wq.noalias() += dqc * w.hg.transpose();
    Eigen::VectorXd dhg = model.dec.Wq.transpose() * dqc;

    // hg = sum_b Wo_b * g_b,  g_b = Vg_sel_b^T * a_b
    Eigen::VectorXd dhc = Eigen::VectorXd::Zero(2 * d_h);
    for (int b = 0; b < heads; ++b) {
      auto Vb = Vg_sel.middleCols(b * dk, dk);
      auto Kb = Kg_sel.middleCols(b * dk, dk);
      Eigen::VectorXd a = w.attn.col(b);
      Eigen::VectorXd g = Vb.transpose() * a;
      grad.dec.glimpse_Wo.middleCols(b * dk, dk).noalias() += dhg * g.transpose();
      Eigen::VectorXd dg = model.dec.glimpse_Wo.middleCols(b * dk, dk).transpose() * dhg;
      Eigen::VectorXd da = Vb * dg;
      for (int s = 0; s < ns; ++s) dVg.row(w.sel[s]).segment(b * dk, dk) += a[s] * dg.transpose();
      // softmax backward
      double dot = a.dot(da);
      Eigen::VectorXd ds = (a.array() * (da.array() - dot)).matrix();
      Eigen::VectorXd dq = Kb.transpose() * ds * scale;
      for (int s = 0; s < ns; ++s)
        dKg.row(w.sel[s]).segment(b * dk, dk) += ds[s] * scale * w.qg.col(b).transpose();
      grad.dec.glimpse.Wq.middleRows(b * dk, dk).noalias() += dq * w.hc.transpose();
      dhc.noalias() += model.dec.glimpse.Wq.middleRows(b * dk, dk).transpose() * dq;
    }

    dGraph += dhc.head(d_h).transpose();
    dH.row(st.order.back()) += dhc.tail(d_h).transpose();

    advance_state(st, inst, order[step]);
  }

  // Projections shared across steps.
  grad.dec.Wk.noalias() += dKf.transpose() * ctx.H;
  dH.noalias() += dKf * model.dec.Wk;
  grad.dec.glimpse.Wk.noalias() += dKg.transpose() * ctx.H;
  dH.noalias() += dKg * model.dec.glimpse.Wk;
  grad.dec.glimpse.Wv.noalias() += dVg.transpose() * ctx.H;
  dH.noalias() += dVg * model.dec.glimpse.Wv;
  return logp;
}

}  // namespace tsppc
