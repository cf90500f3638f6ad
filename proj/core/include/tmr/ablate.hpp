#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmr/data.hpp"
#include "tmr/metrics.hpp"
#include "tmr/trainer.hpp"

namespace tmr {

/// One ablation arm: a full train config plus an optional view-count
/// override, which re-synthesizes the dataset with that many views.
struct AblateArm {
  std::string name;
  TrainConfig cfg;
  std::optional<std::uint32_t> views;
};

struct ArmResult {
  std::string name;
  std::vector<MetricsTable> per_seed;
  MetricsTable median;
};

/// Per-metric median across seeds.
MetricsTable median_table(std::vector<MetricsTable> tables);

/// Trains every (arm, seed) combination and reports the per-arm median
/// metrics. Runs are independent and may execute on up to `jobs` threads;
/// results are deterministic regardless of job count.
std::vector<ArmResult> run_ablation(const std::vector<AblateArm>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const DataConfig& base_data, std::size_t jobs = 1);

/// Reads a grid JSON file: {"arms": [{"name": ..., <overrides>}...],
/// "seeds": [...] (optional)}. Arm overrides: modalities, recon, fusion,
/// loss, hn_mirror, beta, epochs, batch, lr, views. Unknown keys are
/// rejected.
struct AblateGrid {
  std::vector<AblateArm> arms;
  std::vector<std::uint64_t> seeds;  // empty when the file does not pin them
};
AblateGrid parse_grid_file(const std::string& path, const TrainConfig& base);

std::string format_ablation_table(const std::vector<ArmResult>& rows);
std::string ablation_json(const std::vector<ArmResult>& rows);

/// Dispatches on cfg.precision and returns the final test metrics.
MetricsTable train_once_metrics(const TrainConfig& cfg, const GeneratedData& data);

}  // namespace tmr
