#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmr/config.hpp"
#include "tmr/data.hpp"
#include "tmr/eval.hpp"
#include "tmr/loss.hpp"
#include "tmr/metrics.hpp"
#include "tmr/model.hpp"
#include "tmr/params.hpp"

namespace tmr {

struct TrainConfig {
  EncoderConfig enc;
  PipelineFlags flags;
  std::size_t epochs = 200;
  std::size_t batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  std::size_t eval_every = 10;
  Precision precision = Precision::F32;
  std::size_t schedule_horizon = 0;  // optimizer steps; 0 derives epochs * batches-per-epoch
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// lr_t = 0.5 * base * (1 + cos(pi * step / total)); base at step 0, zero at
/// step == total, monotone non-increasing in between.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;  // aligned with params.names()
  std::vector<Tensor<T>> v;
  std::size_t step = 0;

  static AdamState init(const ParamSet<T>& params) {
    AdamState s;
    for (const auto& name : params.names()) {
      const Tensor<T>& p = params.get(name);
      s.m.push_back(Tensor<T>::zeros(p.rows, p.cols));
      s.v.push_back(Tensor<T>::zeros(p.rows, p.cols));
    }
    return s;
  }
};

/// One decoupled-weight-decay Adam step:
///   p <- p - lr_t * (m_hat / (sqrt(v_hat) + eps) + lambda * p)
/// with bias-corrected moments. tau is excluded from decay and clamped to the
/// configured floor after the update. Every trainable tensor must carry a
/// populated gradient.
template <class T>
void adamw_step(ParamSet<T>& params, AdamState<T>& state, double lr_t, const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t idx = 0;
  for (const auto& name : params.names()) {
    Tensor<T>& p = params.get(name);
    if (!p.requires_grad) {
      ++idx;
      continue;
    }
    if (p.grad.size() != p.data.size()) {
      throw ConfigError("adamw_step: missing gradient for trainable tensor '" + name + "'");
    }
    const double decay = name == "tau" ? 0.0 : cfg.weight_decay;
    Tensor<T>& m = state.m[idx];
    Tensor<T>& v = state.v[idx];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      double g = static_cast<double>(p.grad[i]);
      double mi = cfg.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg.beta1) * g;
      double vi = cfg.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg.beta2) * g * g;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps) +
                      decay * static_cast<double>(p.data[i]);
      p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - lr_t * update);
    }
    if (name == "tau" && p.data[0] < static_cast<T>(cfg.flags.tau_floor)) {
      p.data[0] = static_cast<T>(cfg.flags.tau_floor);
    }
    ++idx;
  }
}

template <class T>
struct BatchForward {
  typename Tape<T>::Id shape_stack;  // n x D
  typename Tape<T>::Id text_stack;   // n x D
  std::optional<typename Tape<T>::Id> recon_i2p;
  std::optional<typename Tape<T>::Id> recon_p2i;
  typename Tape<T>::Id total;  // scalar objective
};

/// Runs the whole pipeline for one batch on a fresh tape: encoders,
/// reconstruction (when enabled), fusion, similarity matrix, contrastive loss
/// plus reconstruction terms.
template <class T>
BatchForward<T> forward_batch(Tape<T>& tape, const std::vector<ShapeRecord>& records,
                              const BatchPlan& plan, ParamSet<T>& params,
                              const EncoderConfig& enc, const PipelineFlags& flags) {
  using Id = typename Tape<T>::Id;
  std::vector<Id> shape_rows, text_rows, i2p_terms, p2i_terms;
  for (const auto& [rec_idx, cap_idx] : plan.items) {
    const ShapeRecord& rec = records.at(rec_idx);
    Id text = encode_text(tape, std::span<const std::uint32_t>(rec.captions.at(cap_idx)), params,
                          enc);
    Tensor<T> pts = to_tensor<T>(rec.points, enc.n_points, enc.point_dim);
    Tensor<T> views = to_tensor<T>(rec.views, enc.n_views, enc.view_dim);
    ShapeForward<T> fwd = forward_shape(tape, pts, views, text, params, enc, flags);
    shape_rows.push_back(fwd.shape_emb);
    text_rows.push_back(text);
    if (fwd.recon_i2p) i2p_terms.push_back(*fwd.recon_i2p);
    if (fwd.recon_p2i) p2i_terms.push_back(*fwd.recon_p2i);
  }

  BatchForward<T> out;
  out.shape_stack = tape.concat_rows(std::span<const Id>(shape_rows));
  out.text_stack = tape.concat_rows(std::span<const Id>(text_rows));
  Id sim = build_sim_matrix(tape, out.shape_stack, out.text_stack);
  LossConfig lc{flags.beta, flags.tau_floor, flags.loss_mode, flags.mirror};
  Id retrieval = contrastive_loss(tape, sim, tape.param(params.get("tau")), lc);

  auto sum_terms = [&tape](const std::vector<Id>& terms) -> std::optional<Id> {
    if (terms.empty()) return std::nullopt;
    Id acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return acc;
  };
  out.recon_i2p = sum_terms(i2p_terms);
  out.recon_p2i = sum_terms(p2i_terms);
  out.total = total_loss(tape, retrieval, out.recon_i2p, out.recon_p2i);
  return out;
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double lr = 0;
  bool evaluated = false;
  MetricsTable metrics;
};

template <class T>
struct TrainResult {
  ParamSet<T> params;
  MetricsTable final_metrics;
  MetricsTable best_metrics;
  std::vector<EpochLog> log;
  std::size_t steps = 0;
  std::string final_checkpoint;  // empty when not written
  std::string best_checkpoint;
};

template <class T>
TrainResult<T> train(const TrainConfig& cfg, const std::vector<ShapeRecord>& train_records,
                     const std::vector<ShapeRecord>& test_records,
                     const std::string& out_dir = "");

}  // namespace tmr
