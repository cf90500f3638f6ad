#pragma once

#include <cmath>
#include <optional>

#include "tmr/config.hpp"
#include "tmr/encoders.hpp"
#include "tmr/fusion.hpp"
#include "tmr/nn.hpp"
#include "tmr/params.hpp"
#include "tmr/reconstruction.hpp"
#include "tmr/rng.hpp"

namespace tmr {

/// Creates every trainable tensor the flag combination needs, in a fixed
/// order so a given (config, flags, seed) always produces the same bytes.
/// Weights are uniform(-s, s) with s = sqrt(6/(fan_in+fan_out)), biases zero,
/// tau starts at flags.tau_init. Reconstruction MLPs always exist so the
/// checkpoint surface is stable across the recon ablations; they are frozen
/// when recon is off.
template <class T>
ParamSet<T> init_params(const EncoderConfig& enc, const PipelineFlags& flags,
                        std::uint64_t seed) {
  validate_flags(enc, flags);
  ParamSet<T> params;
  Rng rng(Rng::mix(seed, 0x7075));

  const std::size_t d = enc.dim;
  if (flags.modalities != Modalities::Image) {
    std::size_t group_width = enc.point_dim * (enc.n_points / enc.n_groups);
    create_mlp(params, "point.group", group_width, enc.hidden, d, rng);
    create_mlp(params, "point.adapter", d, enc.hidden, d, rng);
  }
  if (flags.modalities != Modalities::Point) {
    create_mlp(params, "view.mlp", enc.view_dim, enc.hidden, d, rng);
    create_mlp(params, "view.adapter", d, enc.hidden, d, rng);
  }
  {
    Tensor<T>& embed = params.create("text.embed", enc.vocab, d);
    T s = static_cast<T>(std::sqrt(6.0 / static_cast<double>(enc.vocab + d)));
    for (auto& v : embed.data) v = static_cast<T>(rng.uniform(-s, s));
    create_mlp(params, "text.adapter", d, enc.hidden, d, rng);
  }
  if (flags.modalities == Modalities::Both) {
    if (flags.fusion == FusionMode::Cqa) {
      Tensor<T>& w0 = params.create("fusion.w0", 1, 3 * d);
      T s = static_cast<T>(std::sqrt(6.0 / static_cast<double>(3 * d + 1)));
      for (auto& v : w0.data) v = static_cast<T>(rng.uniform(-s, s));
      create_mlp(params, "fusion.pool", 4 * d, enc.hidden, d, rng);
    } else {
      create_mlp(params, "fusion.mlp", 2 * d, enc.hidden, d, rng);
    }
    bool recon_trainable = flags.recon != ReconMode::Off;
    std::size_t recon_in = flags.recon == ReconMode::Bi ? d : 2 * d;
    create_mlp(params, "recon.p2i", recon_in, 2 * d, d, rng, recon_trainable);
    create_mlp(params, "recon.i2p", recon_in, 2 * d, d, rng, recon_trainable);
  } else {
    create_mlp(params, "single.adapter", d, enc.hidden, d, rng);
  }
  Tensor<T>& tau = params.create("tau", 1, 1);
  tau.data[0] = static_cast<T>(flags.tau_init);
  return params;
}

template <class T>
struct ShapeForward {
  typename Tape<T>::Id shape_emb;  // 1 x D
  std::optional<typename Tape<T>::Id> recon_i2p;
  std::optional<typename Tape<T>::Id> recon_p2i;
};

/// Encodes one shape's modalities and fuses them into the shape embedding.
/// `text_emb` feeds the text-guided reconstruction and may be absent when
/// reconstruction is disabled or when only embedding for retrieval.
template <class T>
ShapeForward<T> forward_shape(Tape<T>& tape, const Tensor<T>& points, const Tensor<T>& views,
                              std::optional<typename Tape<T>::Id> text_emb, ParamSet<T>& params,
                              const EncoderConfig& enc, const PipelineFlags& flags) {
  using Id = typename Tape<T>::Id;
  ShapeForward<T> out;

  if (flags.modalities == Modalities::Image) {
    Id feats = encode_views(tape, views, params, enc);
    out.shape_emb = apply_mlp(tape, tape.max_rows(feats), params, "single.adapter");
    return out;
  }
  if (flags.modalities == Modalities::Point) {
    Id feats = encode_points(tape, points, params, enc);
    out.shape_emb = apply_mlp(tape, tape.max_rows(feats), params, "single.adapter");
    return out;
  }

  Id point_feats = encode_points(tape, points, params, enc);
  Id view_feats = encode_views(tape, views, params, enc);

  if (flags.recon != ReconMode::Off && text_emb) {
    auto [pooled_p, pooled_i] = pool_features(tape, point_feats, view_feats);
    ReconOutput<T> rec = reconstruct(tape, pooled_p, pooled_i, *text_emb, params, flags.recon);
    if (flags.recon == ReconMode::I2p) {
      out.recon_i2p = rec.loss_i2p;
    } else if (flags.recon == ReconMode::P2i) {
      out.recon_p2i = rec.loss_p2i;
    } else {  // Both or Bi
      out.recon_i2p = rec.loss_i2p;
      out.recon_p2i = rec.loss_p2i;
    }
  }

  if (flags.fusion == FusionMode::Cqa) {
    SimilarityGrid<T> grid = trilinear_scores(tape, point_feats, view_feats, params);
    auto [attn_views, attn_points] = attention_aggregate(tape, grid, point_feats, view_feats);
    out.shape_emb = fuse(tape, point_feats, attn_views, attn_points, params);
  } else {
    out.shape_emb = fuse_mlp_baseline(tape, point_feats, view_feats, params);
  }
  return out;
}

}  // namespace tmr
