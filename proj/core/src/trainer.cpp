#include "tmr/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tmr/checkpoint.hpp"
#include "tmr/rng.hpp"

namespace tmr {

using json = nlohmann::json;

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0) throw ConfigError("cosine_lr: zero schedule horizon");
  if (step > total_steps) throw ConfigError("cosine_lr: step past schedule horizon");
  double angle = 3.14159265358979323846 * static_cast<double>(step) /
                 static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(angle));
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["enc"] = {{"n_points", cfg.enc.n_points},
              {"point_dim", cfg.enc.point_dim},
              {"n_groups", cfg.enc.n_groups},
              {"n_views", cfg.enc.n_views},
              {"view_dim", cfg.enc.view_dim},
              {"dim", cfg.enc.dim},
              {"hidden", cfg.enc.hidden},
              {"vocab", cfg.enc.vocab},
              {"max_caption_len", cfg.enc.max_caption_len}};
  j["flags"] = {{"modalities", to_string(cfg.flags.modalities)},
                {"recon", to_string(cfg.flags.recon)},
                {"fusion", to_string(cfg.flags.fusion)},
                {"loss", to_string(cfg.flags.loss_mode)},
                {"hn_mirror", to_string(cfg.flags.mirror)},
                {"beta", cfg.flags.beta},
                {"tau_init", cfg.flags.tau_init},
                {"tau_floor", cfg.flags.tau_floor}};
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["weight_decay"] = cfg.weight_decay;
  j["seed"] = cfg.seed;
  j["eval_every"] = cfg.eval_every;
  j["precision"] = to_string(cfg.precision);
  j["schedule_horizon"] = cfg.schedule_horizon;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
  TrainConfig cfg;
  const json& e = j.at("enc");
  cfg.enc.n_points = e.at("n_points").get<std::size_t>();
  cfg.enc.point_dim = e.at("point_dim").get<std::size_t>();
  cfg.enc.n_groups = e.at("n_groups").get<std::size_t>();
  cfg.enc.n_views = e.at("n_views").get<std::size_t>();
  cfg.enc.view_dim = e.at("view_dim").get<std::size_t>();
  cfg.enc.dim = e.at("dim").get<std::size_t>();
  cfg.enc.hidden = e.at("hidden").get<std::size_t>();
  cfg.enc.vocab = e.at("vocab").get<std::size_t>();
  cfg.enc.max_caption_len = e.at("max_caption_len").get<std::size_t>();
  const json& f = j.at("flags");
  cfg.flags.modalities = modalities_from_string(f.at("modalities").get<std::string>());
  cfg.flags.recon = recon_from_string(f.at("recon").get<std::string>());
  cfg.flags.fusion = fusion_from_string(f.at("fusion").get<std::string>());
  cfg.flags.loss_mode = loss_mode_from_string(f.at("loss").get<std::string>());
  cfg.flags.mirror = hn_mirror_from_string(f.at("hn_mirror").get<std::string>());
  cfg.flags.beta = f.at("beta").get<double>();
  cfg.flags.tau_init = f.at("tau_init").get<double>();
  cfg.flags.tau_floor = f.at("tau_floor").get<double>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.batch = j.at("batch").get<std::size_t>();
  cfg.lr = j.at("lr").get<double>();
  cfg.beta1 = j.at("beta1").get<double>();
  cfg.beta2 = j.at("beta2").get<double>();
  cfg.adam_eps = j.at("adam_eps").get<double>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.eval_every = j.at("eval_every").get<std::size_t>();
  cfg.precision = precision_from_string(j.at("precision").get<std::string>());
  cfg.schedule_horizon = j.at("schedule_horizon").get<std::size_t>();
  return cfg;
}

namespace {

json epoch_log_json(const EpochLog& el) {
  json j{{"epoch", el.epoch}, {"mean_loss", el.mean_loss}, {"lr", el.lr}};
  if (el.evaluated) {
    j["metrics"] = json::parse(metrics_table_json(el.metrics));
  }
  return j;
}

std::string batch_dump(const BatchPlan& plan) {
  std::string ids;
  for (std::size_t i = 0; i < plan.items.size() && i < 16; ++i) {
    if (!ids.empty()) ids += ",";
    ids += std::to_string(plan.items[i].first);
  }
  if (plan.items.size() > 16) ids += ",...";
  return ids;
}

}  // namespace

template <class T>
TrainResult<T> train(const TrainConfig& cfg, const std::vector<ShapeRecord>& train_records,
                     const std::vector<ShapeRecord>& test_records, const std::string& out_dir) {
  validate_flags(cfg.enc, cfg.flags);
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.lr <= 0) throw ConfigError("train: lr must be > 0");
  if (train_records.empty() || test_records.empty())
    throw ConfigError("train: empty split");

  const std::size_t caps = train_records.front().captions.size();
  const std::size_t batches_per_epoch = train_records.size() / cfg.batch;
  const std::size_t total_steps =
      cfg.schedule_horizon ? cfg.schedule_horizon : cfg.epochs * batches_per_epoch;

  TrainResult<T> res;
  res.params = init_params<T>(cfg.enc, cfg.flags, cfg.seed);
  AdamState<T> adam = AdamState<T>::init(res.params);

  std::ofstream log_stream;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_stream.open(out_dir + "/log.jsonl", std::ios::trunc);
    if (!log_stream) throw ConfigError("cannot write " + out_dir + "/log.jsonl");
  }

  double best_score = -1.0;
  ParamSet<T> best_params;
  AdamState<T> best_adam;
  std::size_t best_step = 0;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto plans = make_batches(train_records.size(), caps, cfg.batch,
                              Rng::mix(cfg.seed, 0xE9000 + epoch));
    double loss_sum = 0.0;
    double lr_t = cfg.lr;
    for (std::size_t b = 0; b < plans.size(); ++b) {
      Tape<T> tape;
      res.params.zero_grads();
      BatchForward<T> fwd =
          forward_batch(tape, train_records, plans[b], res.params, cfg.enc, cfg.flags);
      double loss_val = static_cast<double>(tape.value(fwd.total).data[0]);
      if (!std::isfinite(loss_val)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch + 1) + ", batch " + std::to_string(b) +
                           "; records " + batch_dump(plans[b]) + ")");
      }
      tape.backward(fwd.total);
      lr_t = cosine_lr(step, total_steps, cfg.lr);
      adamw_step(res.params, adam, lr_t, cfg);
      ++step;
      loss_sum += loss_val;
    }

    EpochLog el;
    el.epoch = epoch + 1;
    el.mean_loss = loss_sum / static_cast<double>(plans.size());
    el.lr = lr_t;
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      el.evaluated = true;
      el.metrics = evaluate(test_records, res.params, cfg.enc, cfg.flags, caps);
      double score = el.metrics.s2t_rr1 + el.metrics.t2s_rr1;
      if (score > best_score) {
        best_score = score;
        best_params = res.params;
        best_adam = adam;
        best_step = step;
        res.best_metrics = el.metrics;
      }
    }
    if (log_stream) log_stream << epoch_log_json(el).dump() << "\n";
    res.log.push_back(std::move(el));
  }

  res.steps = step;
  res.final_metrics = res.log.back().metrics;

  if (!out_dir.empty()) {
    res.final_checkpoint = out_dir + "/final.ckpt";
    save_checkpoint(res.final_checkpoint, cfg, step, res.params, adam);
    res.best_checkpoint = out_dir + "/best.ckpt";
    save_checkpoint(res.best_checkpoint, cfg, best_step, best_params, best_adam);
  }
  return res;
}

template TrainResult<float> train<float>(const TrainConfig&, const std::vector<ShapeRecord>&,
                                         const std::vector<ShapeRecord>&, const std::string&);
template TrainResult<double> train<double>(const TrainConfig&, const std::vector<ShapeRecord>&,
                                           const std::vector<ShapeRecord>&, const std::string&);

}  // namespace tmr
