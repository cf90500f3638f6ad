#pragma once

#include <limits>
#include <optional>

#include "tmr/config.hpp"
#include "tmr/params.hpp"
#include "tmr/tape.hpp"

namespace tmr {

struct LossConfig {
  double beta = 0.5;
  double tau_floor = 1e-3;
  LossMode mode = LossMode::HnNce;
  HnMirror mirror = HnMirror::Pool;
};

/// Which side anchors the retrieval: shapes querying texts or texts querying
/// shapes. Weights are always returned anchor-major: entry [i][j] is the
/// weight of candidate j for anchor i.
enum class LossDirection { ShapeToText, TextToShape };

namespace loss_detail {

template <class T>
Tensor<T> offdiag_mask(std::size_t n) {
  Tensor<T> m = Tensor<T>::ones(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = T(0);
  return m;
}

template <class T>
Tensor<T> eye(std::size_t n) {
  Tensor<T> m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = T(1);
  return m;
}

/// Hard-negative weights for pre-scaled logits (beta * sim / tau), anchors in
/// rows: w[i][j] = (n-1) e^{s_ij} / sum_{k != i} e^{s_ik}, diagonal 0.
///
/// Stabilized by subtracting a detached per-row constant before exp: the
/// off-diagonal row max everywhere, and on the diagonal the entry's own value
/// plus a margin, which pins exp() below 1 there before the mask zeroes it.
/// The constant cancels in the ratio, so values and gradients are unchanged.
template <class T>
typename Tape<T>::Id weights_from_scaled(Tape<T>& tape, typename Tape<T>::Id scaled) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& sv = tape.value(scaled);
  const std::size_t n = sv.rows;
  if (n < 2 || sv.cols != n) {
    throw ConfigError("hn weights need a square matrix with n >= 2, got " + shape_str(sv));
  }
  Tensor<T> shift(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, sv.at(i, j));
    }
    for (std::size_t j = 0; j < n; ++j) shift.at(i, j) = m;
    shift.at(i, i) = sv.at(i, i) + T(40);
  }
  Id e = tape.exp(tape.sub(scaled, tape.input(std::move(shift))));
  Id masked = tape.mul(e, tape.input(offdiag_mask<T>(n)));
  Id row_sum = tape.matmul(masked, tape.input(Tensor<T>::ones(n, 1)));
  Id denom = tape.matmul(row_sum, tape.input(Tensor<T>::ones(1, n)));
  return tape.div(tape.scale(masked, static_cast<T>(n - 1)), denom);
}

/// One direction of the retrieval loss over logits l = sim/tau (anchors in
/// rows) and candidate weights W (zero diagonal):
///   sum_i [ log(e^{l_ii} + sum_{j != i} e^{l_ij} W_ij) - l_ii ]
/// computed against a detached per-row max so every exp() stays <= 1.
template <class T>
typename Tape<T>::Id direction_term(Tape<T>& tape, typename Tape<T>::Id logits,
                                    typename Tape<T>::Id weights) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& lv = tape.value(logits);
  const std::size_t n = lv.rows;
  Tensor<T> shift(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    T m = lv.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, lv.at(i, j));
    for (std::size_t j = 0; j < n; ++j) shift.at(i, j) = m;
  }
  Id shifted = tape.sub(logits, tape.input(std::move(shift)));
  Id e = tape.exp(shifted);
  Id ones_col = tape.input(Tensor<T>::ones(n, 1));
  Id eye_in = tape.input(eye<T>(n));
  Id pos = tape.matmul(tape.mul(e, eye_in), ones_col);            // e^{l_ii - m_i}
  Id neg = tape.matmul(tape.mul(e, weights), ones_col);           // weighted negatives
  Id diag_shifted = tape.matmul(tape.mul(shifted, eye_in), ones_col);  // l_ii - m_i
  Id per_row = tape.sub(tape.log(tape.add(pos, neg)), diag_shifted);
  return tape.sum_all(per_row);
}

}  // namespace loss_detail

/// Pairwise cosine similarities between n shape embeddings and n text
/// embeddings (rows of two n x D stacks); the diagonal holds the positives.
template <class T>
typename Tape<T>::Id build_sim_matrix(Tape<T>& tape, typename Tape<T>::Id shape_stack,
                                      typename Tape<T>::Id text_stack) {
  const Tensor<T>& s = tape.value(shape_stack);
  const Tensor<T>& t = tape.value(text_stack);
  if (s.rows != t.rows) {
    throw ShapeError("build_sim_matrix: counts differ, " + shape_str(s) + " vs " + shape_str(t));
  }
  return tape.cosine_sim_matrix(shape_stack, text_stack);
}

/// Hard-negative weights for one direction. For ShapeToText the
/// normalization runs over texts for a fixed shape; TextToShape mirrors it
/// over shapes for a fixed text (the default `pool` interpretation).
template <class T>
typename Tape<T>::Id hn_weights(Tape<T>& tape, typename Tape<T>::Id sim, double beta,
                                typename Tape<T>::Id tau, LossDirection direction) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& sv = tape.value(sim);
  if (sv.rows < 2) throw ConfigError("hn_weights: batch of " + std::to_string(sv.rows) + " < 2");
  Id inv_tau = tape.div(tape.input(Tensor<T>::scalar(T(1))), tau);
  Id logits = tape.mul(sim, inv_tau);
  Id scaled = tape.scale(logits, static_cast<T>(beta));
  if (direction == LossDirection::TextToShape) scaled = tape.transpose(scaled);
  return loss_detail::weights_from_scaled(tape, scaled);
}

/// Bi-directional contrastive retrieval loss with learnable temperature.
/// mode == InfoNce uses uniform weights; HnNce re-weights negatives per
/// direction, with the text-anchored weights chosen by cfg.mirror: `pool`
/// normalizes over the anchor's own candidate pool, `literal` reuses the
/// shape-anchored weights at swapped indices.
template <class T>
typename Tape<T>::Id contrastive_loss(Tape<T>& tape, typename Tape<T>::Id sim,
                                      typename Tape<T>::Id tau, const LossConfig& cfg) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& sv = tape.value(sim);
  const std::size_t n = sv.rows;
  if (n < 2) throw ConfigError("contrastive_loss: batch of " + std::to_string(n) + " < 2");
  if (sv.cols != n) throw ShapeError("contrastive_loss: matrix not square, " + shape_str(sv));

  Id inv_tau = tape.div(tape.input(Tensor<T>::scalar(T(1))), tau);
  Id logits = tape.mul(sim, inv_tau);
  Id logits_t = tape.transpose(logits);

  Id w_s2t, w_t2s;
  if (cfg.mode == LossMode::InfoNce) {
    w_s2t = tape.input(loss_detail::offdiag_mask<T>(n));
    w_t2s = w_s2t;
  } else {
    w_s2t = loss_detail::weights_from_scaled(tape, tape.scale(logits, static_cast<T>(cfg.beta)));
    w_t2s = cfg.mirror == HnMirror::Pool
                ? loss_detail::weights_from_scaled(tape,
                                                   tape.scale(logits_t, static_cast<T>(cfg.beta)))
                : tape.transpose(w_s2t);
  }
  Id s2t = loss_detail::direction_term(tape, logits, w_s2t);
  Id t2s = loss_detail::direction_term(tape, logits_t, w_t2s);
  return tape.add(s2t, t2s);
}

/// Unweighted sum of the enabled loss terms.
template <class T>
typename Tape<T>::Id total_loss(Tape<T>& tape, typename Tape<T>::Id retrieval,
                                std::optional<typename Tape<T>::Id> recon_i2p,
                                std::optional<typename Tape<T>::Id> recon_p2i) {
  auto loss = retrieval;
  if (recon_i2p) loss = tape.add(loss, *recon_i2p);
  if (recon_p2i) loss = tape.add(loss, *recon_p2i);
  return loss;
}

}  // namespace tmr
