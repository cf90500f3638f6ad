#pragma once

#include <utility>

#include "tmr/config.hpp"
#include "tmr/nn.hpp"
#include "tmr/params.hpp"
#include "tmr/tape.hpp"

namespace tmr {

/// Mean-pooled point and view features for one shape, both 1 x D.
template <class T>
std::pair<typename Tape<T>::Id, typename Tape<T>::Id> pool_features(
    Tape<T>& tape, typename Tape<T>::Id point_feats, typename Tape<T>::Id view_feats) {
  return {tape.mean_rows(point_feats), tape.mean_rows(view_feats)};
}

template <class T>
struct ReconOutput {
  typename Tape<T>::Id view_pred;   // reconstructed pooled view features
  typename Tape<T>::Id point_pred;  // reconstructed pooled point features
  typename Tape<T>::Id loss_i2p;    // || pooled points - point_pred ||_2
  typename Tape<T>::Id loss_p2i;    // || pooled views - view_pred ||_2
};

/// Cross-modal reconstruction. In tri-modal form each direction predicts one
/// pooled modality from the other concatenated with the text embedding; the
/// `bi` ablation arm drops the text input and reconstructs from the single
/// modality alone. Text features are never a reconstruction target. Losses
/// are plain Euclidean norms on raw features.
template <class T>
ReconOutput<T> reconstruct(Tape<T>& tape, typename Tape<T>::Id pooled_points,
                           typename Tape<T>::Id pooled_views, typename Tape<T>::Id text_emb,
                           ParamSet<T>& params, ReconMode mode) {
  using Id = typename Tape<T>::Id;
  Id p_in = pooled_points;
  Id i_in = pooled_views;
  if (mode != ReconMode::Bi) {
    p_in = tape.concat_cols({pooled_points, text_emb});
    i_in = tape.concat_cols({pooled_views, text_emb});
  }
  ReconOutput<T> out;
  out.view_pred = apply_mlp(tape, p_in, params, "recon.p2i");
  out.point_pred = apply_mlp(tape, i_in, params, "recon.i2p");
  out.loss_i2p = tape.l2_distance(pooled_points, out.point_pred);
  out.loss_p2i = tape.l2_distance(pooled_views, out.view_pred);
  return out;
}

}  // namespace tmr
