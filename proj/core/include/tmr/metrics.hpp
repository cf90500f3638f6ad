#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tmr {

/// Per-query relevant gallery ids. Every query must have at least one.
using RelevanceMap = std::map<std::uint32_t, std::set<std::uint32_t>>;

/// Gallery ranking for one query: ids ordered by descending score, ties
/// broken by ascending id.
struct RankedResult {
  std::uint32_t query_id = 0;
  std::vector<std::uint32_t> gallery_ids;
  std::vector<double> scores;  // aligned with gallery_ids
};

/// Cosine similarity with a 1e-12 norm floor.
double cosine_score(std::span<const double> a, std::span<const double> b);

RankedResult rank_gallery(std::uint32_t query_id, std::span<const double> query,
                          const std::vector<std::vector<double>>& gallery,
                          std::span<const std::uint32_t> gallery_ids);

/// Fraction of queries with at least one relevant item in the top k.
double recall_rate_at_k(const std::vector<RankedResult>& results, const RelevanceMap& relevance,
                        std::size_t k);

/// Binary-gain NDCG@k averaged over queries: DCG = sum rel_i / log2(i+1) over
/// the top k, ideal DCG fills the top min(k, R) ranks.
double ndcg_at_k(const std::vector<RankedResult>& results, const RelevanceMap& relevance,
                 std::size_t k);

/// Six evaluation numbers on the x100 reporting scale.
struct MetricsTable {
  double s2t_rr1 = 0, s2t_rr5 = 0, s2t_ndcg5 = 0;
  double t2s_rr1 = 0, t2s_rr5 = 0, t2s_ndcg5 = 0;

  bool operator==(const MetricsTable&) const = default;
};

/// Plain-text six-column table, one header and one value row.
std::string format_metrics_table(const MetricsTable& t);

/// {"s2t": {"rr1": ..., ...}, "t2s": {...}} as a JSON string.
std::string metrics_table_json(const MetricsTable& t);

}  // namespace tmr
