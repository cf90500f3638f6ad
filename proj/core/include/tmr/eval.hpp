#pragma once

#include <vector>

#include "tmr/data.hpp"
#include "tmr/metrics.hpp"
#include "tmr/model.hpp"

namespace tmr {

/// All embeddings of one split, converted to double for metric math.
struct SplitEmbeddings {
  std::vector<std::uint32_t> shape_ids;
  std::vector<std::vector<double>> shape_embs;
  std::vector<std::uint32_t> caption_ids;  // shape id * captions_per_shape + index
  std::vector<std::uint32_t> caption_owner;
  std::vector<std::vector<double>> caption_embs;
  std::size_t captions_per_shape = 0;
};

template <class T>
std::vector<double> to_double_row(const Tensor<T>& t) {
  std::vector<double> out(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) out[i] = static_cast<double>(t.data[i]);
  return out;
}

/// Embeds every shape and every caption of a split, in record order.
template <class T>
SplitEmbeddings embed_split(const std::vector<ShapeRecord>& records, ParamSet<T>& params,
                            const EncoderConfig& enc, const PipelineFlags& flags,
                            std::size_t captions_per_shape) {
  SplitEmbeddings out;
  out.captions_per_shape = captions_per_shape;
  for (const ShapeRecord& rec : records) {
    Tape<T> tape;
    Tensor<T> pts = to_tensor<T>(rec.points, enc.n_points, enc.point_dim);
    Tensor<T> views = to_tensor<T>(rec.views, enc.n_views, enc.view_dim);
    ShapeForward<T> fwd = forward_shape(tape, pts, views, std::nullopt, params, enc, flags);
    out.shape_ids.push_back(rec.id);
    out.shape_embs.push_back(to_double_row(tape.value(fwd.shape_emb)));
    for (std::size_t c = 0; c < rec.captions.size(); ++c) {
      Tape<T> text_tape;
      auto emb = encode_text(text_tape, std::span<const std::uint32_t>(rec.captions[c]), params,
                             enc);
      out.caption_ids.push_back(rec.id * static_cast<std::uint32_t>(captions_per_shape) +
                                static_cast<std::uint32_t>(c));
      out.caption_owner.push_back(rec.id);
      out.caption_embs.push_back(to_double_row(text_tape.value(emb)));
    }
  }
  return out;
}

/// Shape-to-text: every shape queries the caption gallery, relevant items are
/// its own captions. Text-to-shape: every caption queries the shape gallery,
/// the single relevant item is its source shape. Reported on the x100 scale.
MetricsTable evaluate_embeddings(const SplitEmbeddings& embs);

template <class T>
MetricsTable evaluate(const std::vector<ShapeRecord>& records, ParamSet<T>& params,
                      const EncoderConfig& enc, const PipelineFlags& flags,
                      std::size_t captions_per_shape) {
  if (records.empty()) throw ConfigError("evaluate: empty split");
  return evaluate_embeddings(embed_split(records, params, enc, flags, captions_per_shape));
}

}  // namespace tmr
