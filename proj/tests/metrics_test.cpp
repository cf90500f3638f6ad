#include <doctest.h>

#include <cmath>

#include "tmr/data.hpp"
#include "tmr/eval.hpp"
#include "tmr/metrics.hpp"
#include "tmr/rng.hpp"

using namespace tmr;

namespace {

/// Brute-force oracle: scan the score row for the best-k by repeated argmax
/// (ties to the lowest id) and accumulate hit/DCG sums directly.
struct BruteForce {
  static std::vector<std::uint32_t> top_ids(const std::vector<double>& scores,
                                            const std::vector<std::uint32_t>& ids) {
    std::vector<bool> used(scores.size(), false);
    std::vector<std::uint32_t> order;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      std::size_t best = scores.size();
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (used[i]) continue;
        if (best == scores.size() || scores[i] > scores[best] ||
            (scores[i] == scores[best] && ids[i] < ids[best])) {
          best = i;
        }
      }
      used[best] = true;
      order.push_back(ids[best]);
    }
    return order;
  }

  static double rr_at_k(const std::vector<std::vector<std::uint32_t>>& rankings,
                        const RelevanceMap& rel, std::size_t k) {
    std::size_t hits = 0, q = 0;
    for (const auto& ranking : rankings) {
      const auto& r = rel.at(static_cast<std::uint32_t>(q++));
      bool hit = false;
      for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
        hit = hit || r.count(ranking[i]);
      hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
  }

  static double ndcg_at_k(const std::vector<std::vector<std::uint32_t>>& rankings,
                          const RelevanceMap& rel, std::size_t k) {
    double total = 0;
    std::size_t q = 0;
    for (const auto& ranking : rankings) {
      const auto& r = rel.at(static_cast<std::uint32_t>(q++));
      double dcg = 0;
      for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        if (r.count(ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      }
      double idcg = 0;
      for (std::size_t i = 0; i < std::min(k, r.size()); ++i)
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      total += dcg / idcg;
    }
    return total / static_cast<double>(rankings.size());
  }
};

}  // namespace

TEST_CASE("rank_gallery basics") {
  std::vector<std::vector<double>> gallery{{1.0, 0.0}};
  std::vector<std::uint32_t> ids{7};
  std::vector<double> q{0.5, 0.5};
  RankedResult r = rank_gallery(0, q, gallery, ids);
  CHECK(r.gallery_ids == std::vector<std::uint32_t>{7});

  // query equals one gallery vector, the others orthogonal
  std::vector<std::vector<double>> g2{{0, 1, 0}, {1, 0, 0}, {0, 0, 1}};
  std::vector<std::uint32_t> ids2{0, 1, 2};
  std::vector<double> q2{1, 0, 0};
  CHECK(rank_gallery(0, q2, g2, ids2).gallery_ids.front() == 1);

  // all-equal scores fall back to ascending id
  std::vector<std::vector<double>> g3{{1, 0}, {1, 0}, {1, 0}};
  std::vector<std::uint32_t> ids3{9, 3, 5};
  RankedResult r3 = rank_gallery(0, q, g3, {ids3.data(), 3});
  CHECK(r3.gallery_ids == std::vector<std::uint32_t>{3, 5, 9});

  CHECK_THROWS_AS(rank_gallery(0, q2, {}, {}), ConfigError);
}

TEST_CASE("recall and ndcg closed forms") {
  // one query, relevant item at rank 1
  RankedResult top;
  top.query_id = 0;
  top.gallery_ids = {4, 1, 2, 3, 5, 6};
  RelevanceMap rel{{0, {4}}};
  CHECK(recall_rate_at_k({top}, rel, 1) == 1.0);
  CHECK(ndcg_at_k({top}, rel, 5) == 1.0);

  // relevant item at rank k+1 scores zero at k
  RankedResult second = top;
  second.gallery_ids = {1, 2, 3, 4, 5, 6};
  RelevanceMap rel2{{0, {4}}};
  CHECK(recall_rate_at_k({second}, rel2, 3) == 0.0);

  // single relevant item at rank 2, k = 5: 1/log2(3)
  RankedResult rank2 = top;
  rank2.gallery_ids = {1, 4, 2, 3, 5, 6};
  CHECK(ndcg_at_k({rank2}, rel, 5) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));

  // five relevant items at ranks 1,3,5,7,9 with k=5, against direct summation
  RankedResult spread;
  spread.query_id = 0;
  spread.gallery_ids = {10, 0, 11, 1, 12, 2, 13, 3, 14, 4};
  RelevanceMap rel5{{0, {10, 11, 12, 13, 14}}};
  double dcg = 1.0 / std::log2(2.0) + 1.0 / std::log2(4.0) + 1.0 / std::log2(6.0);
  double idcg = 0;
  for (int i = 0; i < 5; ++i) idcg += 1.0 / std::log2(i + 2.0);
  CHECK(ndcg_at_k({spread}, rel5, 5) == doctest::Approx(dcg / idcg).epsilon(1e-12));
}

TEST_CASE("metrics match the brute-force oracle exactly on random 20x20 instances") {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t q_count = 20, g_count = 20;
    std::vector<std::uint32_t> gallery_ids(g_count);
    for (std::size_t i = 0; i < g_count; ++i) gallery_ids[i] = static_cast<std::uint32_t>(i);

    std::vector<RankedResult> results;
    std::vector<std::vector<std::uint32_t>> brute_rankings;
    RelevanceMap rel;
    for (std::size_t q = 0; q < q_count; ++q) {
      std::vector<double> scores(g_count);
      for (auto& s : scores) s = rng.uniform(-1, 1);

      // library path: sort-based ranking over "gallery embeddings" scored 1:1
      RankedResult r;
      r.query_id = static_cast<std::uint32_t>(q);
      std::vector<std::size_t> order(g_count);
      for (std::size_t i = 0; i < g_count; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return gallery_ids[a] < gallery_ids[b];
      });
      for (std::size_t i : order) {
        r.gallery_ids.push_back(gallery_ids[i]);
        r.scores.push_back(scores[i]);
      }
      results.push_back(r);
      brute_rankings.push_back(BruteForce::top_ids(scores, gallery_ids));

      auto& rs = rel[static_cast<std::uint32_t>(q)];
      std::size_t n_rel = 1 + rng.index(5);
      while (rs.size() < n_rel) rs.insert(static_cast<std::uint32_t>(rng.index(g_count)));
    }

    for (std::size_t k : {1, 5}) {
      CHECK(recall_rate_at_k(results, rel, k) == BruteForce::rr_at_k(brute_rankings, rel, k));
    }
    CHECK(ndcg_at_k(results, rel, 5) == BruteForce::ndcg_at_k(brute_rankings, rel, 5));
  }
}

TEST_CASE("metric invariants") {
  Rng rng(53);
  std::vector<RankedResult> results;
  RelevanceMap rel;
  for (std::size_t q = 0; q < 10; ++q) {
    RankedResult r;
    r.query_id = static_cast<std::uint32_t>(q);
    for (std::size_t i = 0; i < 15; ++i) r.gallery_ids.push_back(static_cast<std::uint32_t>(i));
    rng.shuffle(r.gallery_ids.begin(), r.gallery_ids.end());
    results.push_back(r);
    auto& rs = rel[static_cast<std::uint32_t>(q)];
    while (rs.size() < 3) rs.insert(static_cast<std::uint32_t>(rng.index(15)));
  }

  // RR@k is monotone non-decreasing in k; both metrics stay in [0, 1]. NDCG
  // under the standard min(k, R)-normalized ideal is not monotone in k (the
  // ideal gains slots faster than a bad ranking fills them), so only its
  // bounds are asserted.
  double prev_rr = 0;
  for (std::size_t k = 1; k <= 15; ++k) {
    double rr = recall_rate_at_k(results, rel, k);
    double nd = ndcg_at_k(results, rel, k);
    CHECK(rr >= prev_rr);
    CHECK(rr >= 0.0);
    CHECK(rr <= 1.0);
    CHECK(nd >= 0.0);
    CHECK(nd <= 1.0 + 1e-15);
    prev_rr = rr;
  }

  // relabeling gallery ids consistently changes nothing
  auto relabel = [](std::uint32_t id) { return id * 7 + 100; };
  std::vector<RankedResult> renamed = results;
  RelevanceMap renamed_rel;
  for (auto& r : renamed)
    for (auto& id : r.gallery_ids) id = relabel(id);
  for (const auto& [q, rs] : rel) {
    for (std::uint32_t id : rs) renamed_rel[q].insert(relabel(id));
  }
  for (std::size_t k : {1, 5, 10}) {
    CHECK(recall_rate_at_k(results, rel, k) == recall_rate_at_k(renamed, renamed_rel, k));
    CHECK(ndcg_at_k(results, rel, k) == ndcg_at_k(renamed, renamed_rel, k));
  }

  // all relevant items on top: NDCG@k = 1
  RankedResult perfect;
  perfect.query_id = 0;
  perfect.gallery_ids = {5, 6, 7, 0, 1, 2};
  RelevanceMap perfect_rel{{0, {5, 6, 7}}};
  CHECK(ndcg_at_k({perfect}, perfect_rel, 5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("six-column table formatting (golden fixture)") {
  MetricsTable t{27.25, 52.91, 19.64, 16.18, 35.96, 26.19};
  std::string want =
      "            S2T                     T2S\n"
      "  RR@1    RR@5    NDCG@5    RR@1    RR@5    NDCG@5\n"
      "  27.25   52.91     19.64   16.18   35.96     26.19\n";
  CHECK(format_metrics_table(t) == want);
  CHECK(metrics_table_json(t).find("\"rr1\":27.25") != std::string::npos);
}

TEST_CASE("perfectly memorized embeddings score 100 everywhere") {
  SplitEmbeddings embs;
  embs.captions_per_shape = 2;
  Rng rng(55);
  for (std::uint32_t s = 0; s < 6; ++s) {
    std::vector<double> e(8);
    for (auto& v : e) v = rng.uniform(-1, 1);
    embs.shape_ids.push_back(s);
    embs.shape_embs.push_back(e);
    for (std::uint32_t c = 0; c < 2; ++c) {
      embs.caption_ids.push_back(s * 2 + c);
      embs.caption_owner.push_back(s);
      embs.caption_embs.push_back(e);  // caption embedding equals its shape's
    }
  }
  MetricsTable t = evaluate_embeddings(embs);
  CHECK(t.s2t_rr1 == 100.0);
  CHECK(t.s2t_rr5 == 100.0);
  CHECK(t.s2t_ndcg5 == 100.0);
  CHECK(t.t2s_rr1 == 100.0);
  CHECK(t.t2s_rr5 == 100.0);
  CHECK(t.t2s_ndcg5 == 100.0);
}

TEST_CASE("untrained models score at chance on the synthetic test split") {
  // T2S RR@1 of an untrained model is 1/|shapes| in expectation; averaged
  // over 20 fixed seeds the pooled estimate must sit within 3 sigma.
  DataConfig dc;
  dc.train_shapes = 4;  // only the test split is used
  dc.test_shapes = 64;
  dc.seed = 9;
  GeneratedData data = generate_records(dc);

  EncoderConfig enc;
  PipelineFlags flags;
  double sum = 0;
  const int n_seeds = 20;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    ParamSet<double> params = init_params<double>(enc, flags, 1000 + seed);
    MetricsTable t = evaluate(data.test, params, enc, flags, dc.captions_per_shape);
    sum += t.t2s_rr1;
  }
  double mean = sum / n_seeds;  // x100 scale
  double p = 1.0 / 64.0;
  std::size_t queries = 64 * 5 * n_seeds;
  double sigma = 100.0 * std::sqrt(p * (1 - p) / static_cast<double>(queries));
  INFO("mean ", mean, " expected ", 100.0 * p, " sigma ", sigma);
  CHECK(std::abs(mean - 100.0 * p) < 3.0 * sigma);
}
