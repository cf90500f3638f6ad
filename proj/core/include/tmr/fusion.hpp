#pragma once

#include <utility>

#include "tmr/nn.hpp"
#include "tmr/params.hpp"
#include "tmr/tape.hpp"

namespace tmr {

/// Trilinear similarity grid between point features (N x D) and view features
/// (M x D), with its row- and column-softmaxed copies.
template <class T>
struct SimilarityGrid {
  typename Tape<T>::Id scores;    // N x M
  typename Tape<T>::Id row_soft;  // rows sum to 1
  typename Tape<T>::Id col_soft;  // columns sum to 1
};

/// scores[n,m] = w0 . [p_n; i_m; p_n*i_m] for a learnable w0 of width 3D.
///
/// Computed in decomposed form: split w0 = [w1; w2; w3], then
///   scores = (P w1^T) 1^T + 1 (I w2^T)^T + (P * (1 w3)) I^T
/// which matches the naive double loop over (n, m) exactly up to float
/// rounding and costs O(NMD).
template <class T>
SimilarityGrid<T> trilinear_scores(Tape<T>& tape, typename Tape<T>::Id point_feats,
                                   typename Tape<T>::Id view_feats, ParamSet<T>& params) {
  using Id = typename Tape<T>::Id;
  const Tensor<T>& P = tape.value(point_feats);
  const Tensor<T>& I = tape.value(view_feats);
  const std::size_t d = P.cols;
  if (I.cols != d) {
    throw ShapeError("trilinear_scores: feature widths differ, " + shape_str(P) + " vs " +
                     shape_str(I));
  }
  Id w0 = tape.param(params.get("fusion.w0"));
  if (tape.value(w0).rows != 1 || tape.value(w0).cols != 3 * d) {
    throw ShapeError("trilinear_scores: w0 must be " + shape_str(1, 3 * d) + ", got " +
                     shape_str(tape.value(w0)));
  }
  Id w1 = tape.slice_cols(w0, 0, d);
  Id w2 = tape.slice_cols(w0, d, 2 * d);
  Id w3 = tape.slice_cols(w0, 2 * d, 3 * d);

  Id ones_n = tape.input(Tensor<T>::ones(P.rows, 1));
  Id ones_m_row = tape.input(Tensor<T>::ones(1, I.rows));

  Id term_p = tape.matmul(tape.matmul(point_feats, tape.transpose(w1)), ones_m_row);
  Id term_i = tape.matmul(ones_n, tape.transpose(tape.matmul(view_feats, tape.transpose(w2))));
  Id scaled_p = tape.mul(point_feats, tape.matmul(ones_n, w3));
  Id term_pi = tape.matmul(scaled_p, tape.transpose(view_feats));

  Id scores = tape.add(tape.add(term_p, term_i), term_pi);
  return {scores, tape.softmax(scores, Axis::Rows), tape.softmax(scores, Axis::Cols)};
}

/// Attention aggregates from the grid:
///   A = S_r I          (each point row attends over views)
///   B = S_r (S_c^T P)  (associated right-to-left for O(NMD) instead of O(N^2 D))
template <class T>
std::pair<typename Tape<T>::Id, typename Tape<T>::Id> attention_aggregate(
    Tape<T>& tape, const SimilarityGrid<T>& grid, typename Tape<T>::Id point_feats,
    typename Tape<T>::Id view_feats) {
  auto a = tape.matmul(grid.row_soft, view_feats);
  auto b = tape.matmul(grid.row_soft, tape.matmul(tape.transpose(grid.col_soft), point_feats));
  return {a, b};
}

/// Final shape embedding: row-wise MLP over [P; A; P*A; P*B] (N x 4D), then
/// column-wise max over the N rows. The row-wise MLP runs before pooling so
/// the per-point cross-modal interactions survive into the pooled embedding.
template <class T>
typename Tape<T>::Id fuse(Tape<T>& tape, typename Tape<T>::Id point_feats,
                          typename Tape<T>::Id attn_views, typename Tape<T>::Id attn_points,
                          ParamSet<T>& params) {
  auto cat = tape.concat_cols({point_feats, attn_views, tape.mul(point_feats, attn_views),
                               tape.mul(point_feats, attn_points)});
  auto rows = apply_mlp(tape, cat, params, "fusion.pool");
  return tape.max_rows(rows);
}

/// Ablation arm: concat of max-pooled point and view features through a plain
/// MLP; no cross-modal attention.
template <class T>
typename Tape<T>::Id fuse_mlp_baseline(Tape<T>& tape, typename Tape<T>::Id point_feats,
                                       typename Tape<T>::Id view_feats, ParamSet<T>& params) {
  auto cat = tape.concat_cols({tape.max_rows(point_feats), tape.max_rows(view_feats)});
  return apply_mlp(tape, cat, params, "fusion.mlp");
}

}  // namespace tmr
