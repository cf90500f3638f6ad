#include "tmr/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace tmr {

using json = nlohmann::json;

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MetricsTable median_table(std::vector<MetricsTable> tables) {
  auto pick = [&tables](double MetricsTable::* field) {
    std::vector<double> v;
    v.reserve(tables.size());
    for (const auto& t : tables) v.push_back(t.*field);
    return median_of(std::move(v));
  };
  MetricsTable m;
  m.s2t_rr1 = pick(&MetricsTable::s2t_rr1);
  m.s2t_rr5 = pick(&MetricsTable::s2t_rr5);
  m.s2t_ndcg5 = pick(&MetricsTable::s2t_ndcg5);
  m.t2s_rr1 = pick(&MetricsTable::t2s_rr1);
  m.t2s_rr5 = pick(&MetricsTable::t2s_rr5);
  m.t2s_ndcg5 = pick(&MetricsTable::t2s_ndcg5);
  return m;
}

MetricsTable train_once_metrics(const TrainConfig& cfg, const GeneratedData& data) {
  if (cfg.precision == Precision::F64) {
    return train<double>(cfg, data.train, data.test).final_metrics;
  }
  return train<float>(cfg, data.train, data.test).final_metrics;
}

std::vector<ArmResult> run_ablation(const std::vector<AblateArm>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const DataConfig& base_data, std::size_t jobs) {
  if (arms.empty()) throw ConfigError("ablation grid has no arms");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");

  // Datasets are shared per distinct view count; everything else is fixed.
  std::map<std::uint32_t, GeneratedData> datasets;
  for (const auto& arm : arms) {
    std::uint32_t views = arm.views.value_or(base_data.n_views);
    if (!datasets.count(views)) {
      DataConfig dc = base_data;
      dc.n_views = views;
      datasets.emplace(views, generate_records(dc));
    }
  }

  struct Job {
    std::size_t arm;
    std::size_t seed_index;
  };
  std::vector<Job> queue;
  for (std::size_t a = 0; a < arms.size(); ++a)
    for (std::size_t s = 0; s < seeds.size(); ++s) queue.push_back({a, s});

  std::vector<std::vector<MetricsTable>> results(arms.size(),
                                                 std::vector<MetricsTable>(seeds.size()));
  std::atomic<std::size_t> next{0};
  std::mutex fail_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= queue.size()) return;
      {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (failure) return;
      }
      const Job& job = queue[i];
      const AblateArm& arm = arms[job.arm];
      try {
        TrainConfig cfg = arm.cfg;
        cfg.seed = seeds[job.seed_index];
        std::uint32_t views = arm.views.value_or(base_data.n_views);
        cfg.enc.n_views = views;
        results[job.arm][job.seed_index] = train_once_metrics(cfg, datasets.at(views));
      } catch (...) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, queue.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ArmResult> out;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmResult r;
    r.name = arms[a].name;
    r.per_seed = results[a];
    r.median = median_table(results[a]);
    out.push_back(std::move(r));
  }
  return out;
}

AblateGrid parse_grid_file(const std::string& path, const TrainConfig& base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open grid file " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed grid file " + path + ": " + e.what());
  }

  AblateGrid grid;
  if (j.contains("seeds")) grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  if (!j.contains("arms") || !j.at("arms").is_array() || j.at("arms").empty())
    throw ConfigError("grid file " + path + " needs a non-empty 'arms' array");
  for (const auto& a : j.at("arms")) {
    AblateArm arm;
    arm.cfg = base;
    if (!a.contains("name")) throw ConfigError("every grid arm needs a 'name'");
    for (const auto& [key, value] : a.items()) {
      if (key == "name") arm.name = value.get<std::string>();
      else if (key == "modalities")
        arm.cfg.flags.modalities = modalities_from_string(value.get<std::string>());
      else if (key == "recon") arm.cfg.flags.recon = recon_from_string(value.get<std::string>());
      else if (key == "fusion")
        arm.cfg.flags.fusion = fusion_from_string(value.get<std::string>());
      else if (key == "loss")
        arm.cfg.flags.loss_mode = loss_mode_from_string(value.get<std::string>());
      else if (key == "hn_mirror")
        arm.cfg.flags.mirror = hn_mirror_from_string(value.get<std::string>());
      else if (key == "beta") arm.cfg.flags.beta = value.get<double>();
      else if (key == "epochs") arm.cfg.epochs = value.get<std::size_t>();
      else if (key == "batch") arm.cfg.batch = value.get<std::size_t>();
      else if (key == "lr") arm.cfg.lr = value.get<double>();
      else if (key == "views") arm.views = value.get<std::uint32_t>();
      else throw ConfigError("grid arm '" + arm.name + "': unknown key '" + key + "'");
    }
    validate_flags(arm.cfg.enc, arm.cfg.flags);
    grid.arms.push_back(std::move(arm));
  }
  return grid;
}

std::string format_ablation_table(const std::vector<ArmResult>& rows) {
  std::string out;
  char buf[256];
  out += "arm                      S2T RR@1  RR@5  NDCG@5   T2S RR@1  RR@5  NDCG@5\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %8.2f %6.2f %7.2f %9.2f %6.2f %7.2f\n",
                  r.name.c_str(), r.median.s2t_rr1, r.median.s2t_rr5, r.median.s2t_ndcg5,
                  r.median.t2s_rr1, r.median.t2s_rr5, r.median.t2s_ndcg5);
    out += buf;
  }
  return out;
}

std::string ablation_json(const std::vector<ArmResult>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    json per_seed = json::array();
    for (const auto& t : r.per_seed) per_seed.push_back(json::parse(metrics_table_json(t)));
    j.push_back({{"arm", r.name},
                 {"median", json::parse(metrics_table_json(r.median))},
                 {"per_seed", per_seed}});
  }
  return j.dump(2);
}

}  // namespace tmr
