#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tmr/checkpoint.hpp"
#include "tmr/data.hpp"
#include "tmr/gradcheck_suites.hpp"
#include "tmr/trainer.hpp"

using namespace tmr;
namespace fs = std::filesystem;

namespace {

DataConfig small_data() {
  DataConfig dc;
  dc.train_shapes = 64;
  dc.test_shapes = 16;
  dc.n_points = 64;
  dc.n_views = 3;
  dc.view_dim = 8;
  dc.seed = 17;
  return dc;
}

TrainConfig small_train(std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.enc.n_points = 64;
  cfg.enc.n_groups = 8;
  cfg.enc.n_views = 3;
  cfg.enc.view_dim = 8;
  cfg.enc.dim = 16;
  cfg.enc.hidden = 16;
  cfg.enc.vocab = 64;
  cfg.epochs = 10;
  cfg.batch = 16;
  cfg.lr = 2e-3;
  cfg.seed = seed;
  cfg.eval_every = 5;
  return cfg;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("adamw: zero gradients leave parameters alone without decay") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  ParamSet<float> params;
  Tensor<float>& w = params.create("w", 2, 2);
  w.data = {1, 2, 3, 4};
  params.zero_grads();
  AdamState<float> state = AdamState<float>::init(params);
  adamw_step(params, state, 1e-3, cfg);
  CHECK(w.data == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("adamw: pure decay shrinks multiplicatively") {
  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  ParamSet<double> params;
  Tensor<double>& w = params.create("w", 1, 2);
  w.data = {2.0, -4.0};
  params.zero_grads();
  AdamState<double> state = AdamState<double>::init(params);
  const double lr = 0.1;
  adamw_step(params, state, lr, cfg);
  adamw_step(params, state, lr, cfg);
  double factor = (1.0 - lr * cfg.weight_decay) * (1.0 - lr * cfg.weight_decay);
  CHECK(w.data[0] == doctest::Approx(2.0 * factor).epsilon(1e-12));
  CHECK(w.data[1] == doctest::Approx(-4.0 * factor).epsilon(1e-12));
}

TEST_CASE("adamw matches an independent scalar simulator") {
  // simulator: textbook AdamW on one scalar with constant gradient
  const double g = 0.3, lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  double sim_p = 1.0, sim_m = 0, sim_v = 0;
  for (int t = 1; t <= 25; ++t) {
    sim_m = b1 * sim_m + (1 - b1) * g;
    sim_v = b2 * sim_v + (1 - b2) * g * g;
    double mhat = sim_m / (1 - std::pow(b1, t));
    double vhat = sim_v / (1 - std::pow(b2, t));
    sim_p -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * sim_p);
  }

  TrainConfig cfg;
  ParamSet<double> params;
  Tensor<double>& w = params.create("w", 1, 1);
  w.data[0] = 1.0;
  AdamState<double> state = AdamState<double>::init(params);
  for (int t = 1; t <= 25; ++t) {
    params.zero_grads();
    w.grad[0] = g;
    adamw_step(params, state, lr, cfg);
  }
  CHECK(w.data[0] == doctest::Approx(sim_p).epsilon(1e-12));
}

TEST_CASE("adamw: missing gradient is a hard error naming the tensor") {
  TrainConfig cfg;
  ParamSet<float> params;
  params.create("odd.tensor", 2, 2);  // trainable, no gradient buffer
  AdamState<float> state = AdamState<float>::init(params);
  try {
    adamw_step(params, state, 1e-3, cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("odd.tensor") != std::string::npos);
  }
}

TEST_CASE("tau is clamped to its floor and excluded from decay") {
  TrainConfig cfg;
  cfg.flags.tau_floor = 1e-3;
  cfg.weight_decay = 0.5;
  ParamSet<double> params;
  Tensor<double>& tau = params.create("tau", 1, 1);
  tau.data[0] = 0.0011;
  AdamState<double> state = AdamState<double>::init(params);
  params.zero_grads();
  tau.grad[0] = 100.0;  // huge gradient pushes tau below the floor
  adamw_step(params, state, 0.05, cfg);
  CHECK(tau.data[0] == doctest::Approx(1e-3));

  // with zero gradient tau must not decay
  Tensor<double>& tau2 = params.get("tau");
  tau2.data[0] = 0.07;
  params.zero_grads();
  AdamState<double> s2 = AdamState<double>::init(params);
  adamw_step(params, s2, 0.05, cfg);
  CHECK(tau2.data[0] == doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("cosine_lr endpoints and monotonicity") {
  CHECK(cosine_lr(0, 100, 1e-3) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(cosine_lr(100, 100, 1e-3) == doctest::Approx(0.0).scale(1e-3));
  CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(0.5e-3).epsilon(1e-12));
  double prev = 1e-3 + 1;
  for (std::size_t s = 0; s <= 100; ++s) {
    double lr = cosine_lr(s, 100, 1e-3);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_lr(5, 0, 1e-3), ConfigError);
}

TEST_CASE("forward_batch: recon off means exactly zero recon terms") {
  DataConfig dc = small_data();
  GeneratedData data = generate_records(dc);
  TrainConfig cfg = small_train();
  cfg.flags.recon = ReconMode::Off;

  ParamSet<double> params = init_params<double>(cfg.enc, cfg.flags, 3);
  auto plans = make_batches(data.train.size(), 5, cfg.batch, 11);
  Tape<double> tape;
  BatchForward<double> fwd =
      forward_batch(tape, data.train, plans[0], params, cfg.enc, cfg.flags);
  CHECK_FALSE(fwd.recon_i2p.has_value());
  CHECK_FALSE(fwd.recon_p2i.has_value());

  // reconstruction parameters exist, stay frozen and receive no gradient
  params.zero_grads();
  tape.backward(fwd.total);
  CHECK_FALSE(params.get("recon.p2i.l1.w").requires_grad);
  for (double gv : params.get("recon.p2i.l1.w").grad) CHECK(gv == 0.0);
}

TEST_CASE("forward_batch is deterministic across calls") {
  DataConfig dc = small_data();
  GeneratedData data = generate_records(dc);
  TrainConfig cfg = small_train();
  ParamSet<double> params = init_params<double>(cfg.enc, cfg.flags, 5);
  auto plans = make_batches(data.train.size(), 5, cfg.batch, 13);

  Tape<double> t1, t2;
  auto f1 = forward_batch(t1, data.train, plans[0], params, cfg.enc, cfg.flags);
  auto f2 = forward_batch(t2, data.train, plans[0], params, cfg.enc, cfg.flags);
  CHECK(t1.value(f1.shape_stack).data == t2.value(f2.shape_stack).data);
  CHECK(t1.value(f1.total).data[0] == t2.value(f2.total).data[0]);
}

TEST_CASE("invalid flag combinations are rejected before any compute") {
  TrainConfig cfg = small_train();
  cfg.flags.modalities = Modalities::Image;
  cfg.flags.recon = ReconMode::Both;
  CHECK_THROWS_AS(validate_flags(cfg.enc, cfg.flags), ConfigError);
  cfg.flags.recon = ReconMode::Off;
  CHECK_NOTHROW(validate_flags(cfg.enc, cfg.flags));
}

TEST_CASE("full-pipeline micro-batch gradient check") {
  auto report = gradcheck_full(1e-5, 2);
  INFO(report.summary(1e-3));
  CHECK(report.pass(1e-3));
}

TEST_CASE("training smoke: two epochs, finite loss, parameter set is stable") {
  DataConfig dc = small_data();
  dc.train_shapes = 32;
  dc.test_shapes = 8;
  GeneratedData data = generate_records(dc);
  TrainConfig cfg = small_train();
  cfg.epochs = 2;
  TrainResult<float> res = train<float>(cfg, data.train, data.test);
  CHECK(res.log.size() == 2);
  for (const auto& el : res.log) CHECK(std::isfinite(el.mean_loss));
  CHECK(res.params.names() == init_params<float>(cfg.enc, cfg.flags, cfg.seed).names());
  CHECK(res.steps == 2 * (32 / cfg.batch));
}

TEST_CASE("loss decreases over training on all seeds") {
  DataConfig dc = small_data();
  GeneratedData data = generate_records(dc);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    TrainConfig cfg = small_train(seed);
    cfg.epochs = 20;
    TrainResult<float> res = train<float>(cfg, data.train, data.test);
    INFO("seed ", seed, " first ", res.log.front().mean_loss, " last ",
         res.log.back().mean_loss);
    CHECK(res.log[19].mean_loss < res.log[0].mean_loss);
  }
}

TEST_CASE("non-finite loss aborts with step and batch identification") {
  DataConfig dc = small_data();
  dc.train_shapes = 32;
  dc.test_shapes = 8;
  GeneratedData data = generate_records(dc);
  TrainConfig cfg = small_train();
  cfg.epochs = 4;
  cfg.lr = 1e18;  // guaranteed float overflow within a couple of steps
  try {
    train<float>(cfg, data.train, data.test);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("records") != std::string::npos);
  }
}

TEST_CASE("training is reproducible and checkpoints round-trip bit-exactly") {
  DataConfig dc = small_data();
  GeneratedData data = generate_records(dc);
  TrainConfig cfg = small_train();
  cfg.epochs = 4;

  std::string d1 = (fs::temp_directory_path() / "tmr_train_a").string();
  std::string d2 = (fs::temp_directory_path() / "tmr_train_b").string();
  fs::remove_all(d1);
  fs::remove_all(d2);
  TrainResult<float> r1 = train<float>(cfg, data.train, data.test, d1);
  TrainResult<float> r2 = train<float>(cfg, data.train, data.test, d2);

  CHECK(read_bytes(d1 + "/final.ckpt") == read_bytes(d2 + "/final.ckpt"));
  CHECK(r1.final_metrics == r2.final_metrics);

  // load back and re-evaluate: metrics must be bit-identical
  LoadedCheckpoint<float> ck = load_checkpoint<float>(d1 + "/final.ckpt");
  CHECK(ck.cfg.epochs == cfg.epochs);
  MetricsTable reloaded =
      evaluate(data.test, ck.params, ck.cfg.enc, ck.cfg.flags, dc.captions_per_shape);
  CHECK(reloaded == r1.final_metrics);

  // loading with the wrong precision is an explicit error
  CHECK_THROWS_AS(load_checkpoint<double>(d1 + "/final.ckpt"), ConfigError);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("single-modality arms train and evaluate") {
  DataConfig dc = small_data();
  dc.train_shapes = 32;
  dc.test_shapes = 8;
  GeneratedData data = generate_records(dc);
  for (Modalities m : {Modalities::Image, Modalities::Point}) {
    TrainConfig cfg = small_train();
    cfg.epochs = 2;
    cfg.flags.modalities = m;
    cfg.flags.recon = ReconMode::Off;
    TrainResult<float> res = train<float>(cfg, data.train, data.test);
    CHECK(std::isfinite(res.final_metrics.t2s_rr1));
  }
}
