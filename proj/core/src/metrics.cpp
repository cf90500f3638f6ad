#include "tmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "tmr/errors.hpp"

namespace tmr {

double cosine_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_score: widths differ, " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::max(std::sqrt(na), 1e-12);
  nb = std::max(std::sqrt(nb), 1e-12);
  return dot / (na * nb);
}

RankedResult rank_gallery(std::uint32_t query_id, std::span<const double> query,
                          const std::vector<std::vector<double>>& gallery,
                          std::span<const std::uint32_t> gallery_ids) {
  if (gallery.empty()) throw ConfigError("rank_gallery: empty gallery");
  if (gallery.size() != gallery_ids.size())
    throw ConfigError("rank_gallery: id count does not match gallery size");

  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) scores[i] = cosine_score(query, gallery[i]);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return gallery_ids[a] < gallery_ids[b];
  });

  RankedResult r;
  r.query_id = query_id;
  r.gallery_ids.reserve(order.size());
  r.scores.reserve(order.size());
  for (std::size_t i : order) {
    r.gallery_ids.push_back(gallery_ids[i]);
    r.scores.push_back(scores[i]);
  }
  return r;
}

double recall_rate_at_k(const std::vector<RankedResult>& results, const RelevanceMap& relevance,
                        std::size_t k) {
  if (k < 1) throw ConfigError("recall_rate_at_k: k must be >= 1");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    const auto& rel = relevance.at(r.query_id);
    std::size_t top = std::min(k, r.gallery_ids.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (rel.count(r.gallery_ids[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double ndcg_at_k(const std::vector<RankedResult>& results, const RelevanceMap& relevance,
                 std::size_t k) {
  if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    const auto& rel = relevance.at(r.query_id);
    double dcg = 0.0;
    std::size_t top = std::min(k, r.gallery_ids.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (rel.count(r.gallery_ids[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    std::size_t ideal = std::min(k, rel.size());
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    total += idcg > 0 ? dcg / idcg : 0.0;
  }
  return total / static_cast<double>(results.size());
}

std::string format_metrics_table(const MetricsTable& t) {
  char buf[256];
  std::string out;
  out += "            S2T                     T2S\n";
  out += "  RR@1    RR@5    NDCG@5    RR@1    RR@5    NDCG@5\n";
  std::snprintf(buf, sizeof(buf), "%7.2f %7.2f %9.2f %7.2f %7.2f %9.2f\n", t.s2t_rr1, t.s2t_rr5,
                t.s2t_ndcg5, t.t2s_rr1, t.t2s_rr5, t.t2s_ndcg5);
  out += buf;
  return out;
}

std::string metrics_table_json(const MetricsTable& t) {
  nlohmann::json j{{"s2t", {{"rr1", t.s2t_rr1}, {"rr5", t.s2t_rr5}, {"ndcg5", t.s2t_ndcg5}}},
                   {"t2s", {{"rr1", t.t2s_rr1}, {"rr5", t.t2s_rr5}, {"ndcg5", t.t2s_ndcg5}}}};
  return j.dump();
}

}  // namespace tmr
