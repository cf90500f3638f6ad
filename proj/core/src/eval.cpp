#include "tmr/eval.hpp"

namespace tmr {

MetricsTable evaluate_embeddings(const SplitEmbeddings& embs) {
  if (embs.shape_embs.empty() || embs.caption_embs.empty())
    throw ConfigError("evaluate: nothing to rank");

  // Shape-to-text
  std::vector<RankedResult> s2t;
  RelevanceMap s2t_rel;
  for (std::size_t s = 0; s < embs.shape_embs.size(); ++s) {
    std::uint32_t sid = embs.shape_ids[s];
    s2t.push_back(rank_gallery(sid, embs.shape_embs[s], embs.caption_embs, embs.caption_ids));
    auto& rel = s2t_rel[sid];
    for (std::size_t c = 0; c < embs.caption_ids.size(); ++c) {
      if (embs.caption_owner[c] == sid) rel.insert(embs.caption_ids[c]);
    }
  }

  // Text-to-shape
  std::vector<RankedResult> t2s;
  RelevanceMap t2s_rel;
  for (std::size_t c = 0; c < embs.caption_embs.size(); ++c) {
    std::uint32_t cid = embs.caption_ids[c];
    t2s.push_back(rank_gallery(cid, embs.caption_embs[c], embs.shape_embs, embs.shape_ids));
    t2s_rel[cid].insert(embs.caption_owner[c]);
  }

  MetricsTable t;
  t.s2t_rr1 = 100.0 * recall_rate_at_k(s2t, s2t_rel, 1);
  t.s2t_rr5 = 100.0 * recall_rate_at_k(s2t, s2t_rel, 5);
  t.s2t_ndcg5 = 100.0 * ndcg_at_k(s2t, s2t_rel, 5);
  t.t2s_rr1 = 100.0 * recall_rate_at_k(t2s, t2s_rel, 1);
  t.t2s_rr5 = 100.0 * recall_rate_at_k(t2s, t2s_rel, 5);
  t.t2s_ndcg5 = 100.0 * ndcg_at_k(t2s, t2s_rel, 5);
  return t;
}

}  // namespace tmr
