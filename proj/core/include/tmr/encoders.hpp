#pragma once

#include <span>
#include <string>

#include "tmr/config.hpp"
#include "tmr/nn.hpp"
#include "tmr/params.hpp"
#include "tmr/tape.hpp"

namespace tmr {

/// Point encoder: the cloud arrives pre-shuffled (dataset-level permutation),
/// is split into n_groups contiguous groups, and each flattened group runs
/// through a shared group MLP followed by the point adapter. Row n of the
/// output is the feature of group n.
template <class T>
typename Tape<T>::Id encode_points(Tape<T>& tape, const Tensor<T>& points, ParamSet<T>& params,
                                   const EncoderConfig& cfg) {
  if (points.cols != cfg.point_dim || points.rows != cfg.n_points) {
    throw ShapeError("encode_points: expected " + shape_str(cfg.n_points, cfg.point_dim) +
                     ", got " + shape_str(points));
  }
  if (cfg.n_points % cfg.n_groups != 0) {
    throw ConfigError("encode_points: " + std::to_string(cfg.n_points) +
                      " points not divisible into " + std::to_string(cfg.n_groups) + " groups");
  }
  std::size_t group = cfg.n_points / cfg.n_groups;
  // Row-major n_p x d_p re-reads directly as N x (d_p * n_p/N); same buffer.
  Tensor<T> grouped(cfg.n_groups, group * cfg.point_dim);
  grouped.data = points.data;
  auto x = tape.input(std::move(grouped));
  auto feats = apply_mlp(tape, x, params, "point.group");
  return apply_mlp(tape, feats, params, "point.adapter");
}

/// View encoder: a shared per-view MLP plus adapter; row m depends only on
/// view m.
template <class T>
typename Tape<T>::Id encode_views(Tape<T>& tape, const Tensor<T>& views, ParamSet<T>& params,
                                  const EncoderConfig& cfg) {
  if (views.rows != cfg.n_views || views.cols != cfg.view_dim) {
    throw ShapeError("encode_views: expected " + shape_str(cfg.n_views, cfg.view_dim) + ", got " +
                     shape_str(views));
  }
  auto x = tape.input(views);
  auto feats = apply_mlp(tape, x, params, "view.mlp");
  return apply_mlp(tape, feats, params, "view.adapter");
}

/// Text encoder: embedding lookup per token (one-hot matmul so gradients
/// reach the table), mean over tokens, then the text adapter. Bag-of-tokens
/// by construction.
template <class T>
typename Tape<T>::Id encode_text(Tape<T>& tape, std::span<const std::uint32_t> tokens,
                                 ParamSet<T>& params, const EncoderConfig& cfg) {
  if (tokens.empty()) throw ConfigError("encode_text: empty caption");
  Tensor<T> onehot(tokens.size(), cfg.vocab);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= cfg.vocab) {
      throw ConfigError("encode_text: token " + std::to_string(tokens[i]) +
                        " outside vocab of " + std::to_string(cfg.vocab));
    }
    onehot.at(i, tokens[i]) = T(1);
  }
  auto x = tape.input(std::move(onehot));
  auto embedded = tape.matmul(x, tape.param(params.get("text.embed")));
  auto pooled = tape.mean_rows(embedded);
  return apply_mlp(tape, pooled, params, "text.adapter");
}

}  // namespace tmr
