#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tmr/ablate.hpp"
#include "tmr/checkpoint.hpp"
#include "tmr/data.hpp"
#include "tmr/eval.hpp"
#include "tmr/gradcheck_suites.hpp"
#include "tmr/model.hpp"
#include "tmr/trainer.hpp"

namespace {

using namespace tmr;

struct SynthOptions {
  std::string out;
  std::uint32_t train_shapes = 256;
  std::uint32_t test_shapes = 64;
  std::uint64_t seed = 42;
  std::uint32_t n_points = 256;
  std::uint32_t views = 6;
  std::uint32_t view_dim = 32;
  std::uint32_t vocab = 64;
  std::uint32_t captions = 5;
  bool force = false;
};

DataConfig to_data_config(const SynthOptions& o) {
  DataConfig cfg;
  cfg.train_shapes = o.train_shapes;
  cfg.test_shapes = o.test_shapes;
  cfg.seed = o.seed;
  cfg.n_points = o.n_points;
  cfg.n_views = o.views;
  cfg.view_dim = o.view_dim;
  cfg.vocab = o.vocab;
  cfg.captions_per_shape = o.captions;
  return cfg;
}

int run_synth(const SynthOptions& o) {
  DataConfig cfg = to_data_config(o);
  GeneratedData data = generate_records(cfg);
  auto [train_mf, test_mf] = write_dataset(data, cfg, o.out, o.force);
  std::printf("wrote %zu train shapes -> %s\n", data.train.size(), train_mf.c_str());
  std::printf("wrote %zu test shapes  -> %s\n", data.test.size(), test_mf.c_str());
  return 0;
}

struct TrainOptions {
  std::string data;
  std::string out;
  std::size_t epochs = 200;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::string modalities = "both";
  std::string recon = "both";
  std::string fusion = "cqa";
  std::string loss = "hn_nce";
  std::string hn_mirror = "pool";
  double beta = 0.5;
  std::uint64_t seed = 1;
  std::string precision = "f32";
  std::size_t dim = 64;
  std::size_t n_features = 32;
  std::size_t hidden = 64;
  std::size_t eval_every = 10;
  double tau_init = 0.07;
  double tau_floor = 1e-3;
  double weight_decay = 0.01;
  std::string preset;
};

EncoderConfig encoder_from_manifest(const DatasetManifest& mf, std::size_t dim,
                                    std::size_t n_features, std::size_t hidden) {
  EncoderConfig enc;
  enc.n_points = mf.config.n_points;
  enc.point_dim = mf.config.point_dim;
  enc.n_groups = n_features;
  enc.n_views = mf.config.n_views;
  enc.view_dim = mf.config.view_dim;
  enc.dim = dim;
  enc.hidden = hidden;
  enc.vocab = mf.config.vocab;
  enc.max_caption_len = mf.config.max_caption_len;
  return enc;
}

TrainConfig to_train_config(const TrainOptions& o, const DatasetManifest& mf) {
  TrainOptions opt = o;
  if (o.preset == "paper") {
    // Published full-scale hyperparameters; far beyond what the synthetic
    // desk data needs, kept selectable for auditability.
    opt.epochs = 40;
    opt.batch = 1024;
    opt.lr = 5e-5;
    opt.dim = 1024;
    opt.n_features = 512;
    opt.hidden = 1024;
  } else if (!o.preset.empty()) {
    throw ConfigError("unknown preset '" + o.preset + "' (paper)");
  }
  TrainConfig cfg;
  cfg.enc = encoder_from_manifest(mf, opt.dim, opt.n_features, opt.hidden);
  cfg.flags.modalities = modalities_from_string(opt.modalities);
  cfg.flags.recon = recon_from_string(opt.recon);
  cfg.flags.fusion = fusion_from_string(opt.fusion);
  cfg.flags.loss_mode = loss_mode_from_string(opt.loss);
  cfg.flags.mirror = hn_mirror_from_string(opt.hn_mirror);
  cfg.flags.beta = opt.beta;
  cfg.flags.tau_init = opt.tau_init;
  cfg.flags.tau_floor = opt.tau_floor;
  cfg.epochs = opt.epochs;
  cfg.batch = opt.batch;
  cfg.lr = opt.lr;
  cfg.weight_decay = opt.weight_decay;
  cfg.seed = opt.seed;
  cfg.eval_every = opt.eval_every;
  cfg.precision = precision_from_string(opt.precision);
  return cfg;
}

int run_train(const TrainOptions& o) {
  Dataset train_ds = Dataset::open(o.data + "/train.manifest.json");
  Dataset test_ds = Dataset::open(o.data + "/test.manifest.json");
  TrainConfig cfg = to_train_config(o, train_ds.manifest());
  validate_flags(cfg.enc, cfg.flags);

  std::vector<ShapeRecord> train_records = train_ds.load_all();
  std::vector<ShapeRecord> test_records = test_ds.load_all();

  MetricsTable final_metrics;
  if (cfg.precision == Precision::F64) {
    final_metrics = train<double>(cfg, train_records, test_records, o.out).final_metrics;
  } else {
    final_metrics = train<float>(cfg, train_records, test_records, o.out).final_metrics;
  }
  std::printf("%s", format_metrics_table(final_metrics).c_str());
  std::printf("%s\n", metrics_table_json(final_metrics).c_str());
  std::printf("checkpoints in %s\n", o.out.c_str());
  return 0;
}

void check_compat(const TrainConfig& cfg, const DatasetManifest& mf) {
  std::string bad;
  if (cfg.enc.n_points != mf.config.n_points) bad = "n_points";
  if (cfg.enc.n_views != mf.config.n_views) bad = "views";
  if (cfg.enc.view_dim != mf.config.view_dim) bad = "view_dim";
  if (cfg.enc.vocab != mf.config.vocab) bad = "vocab";
  if (!bad.empty()) {
    throw ConfigError("checkpoint incompatible with dataset: '" + bad +
                      "' differs (checkpoint trained on different data geometry)");
  }
}

struct EvalOptions {
  std::string data;
  std::string ckpt;
  std::string split = "test";
};

template <class T>
MetricsTable eval_with(const std::string& ckpt_path, const std::vector<ShapeRecord>& records,
                       const DatasetManifest& mf) {
  LoadedCheckpoint<T> ck = load_checkpoint<T>(ckpt_path);
  check_compat(ck.cfg, mf);
  return evaluate(records, ck.params, ck.cfg.enc, ck.cfg.flags, mf.config.captions_per_shape);
}

int run_eval(const EvalOptions& o) {
  Dataset ds = Dataset::open(o.data + "/" + o.split + ".manifest.json");
  std::vector<ShapeRecord> records = ds.load_all();
  CheckpointInfo info = read_checkpoint_info(o.ckpt);
  MetricsTable m = info.precision == Precision::F64
                       ? eval_with<double>(o.ckpt, records, ds.manifest())
                       : eval_with<float>(o.ckpt, records, ds.manifest());
  std::printf("%s", format_metrics_table(m).c_str());
  std::printf("%s\n", metrics_table_json(m).c_str());
  return 0;
}

struct RetrieveOptions {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string query_text;
  std::int64_t query_shape = -1;
  std::size_t topk = 5;
};

std::vector<std::uint32_t> tokenize(const std::string& text,
                                    const std::vector<std::string>& vocab_words) {
  std::map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < vocab_words.size(); ++i) index[vocab_words[i]] = i;
  std::vector<std::uint32_t> tokens;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    auto it = index.find(word);
    if (it == index.end()) throw ConfigError("word '" + word + "' is not in the vocabulary");
    tokens.push_back(it->second);
  }
  if (tokens.empty()) throw ConfigError("query text has no tokens");
  return tokens;
}

std::string caption_words(const std::vector<std::uint32_t>& tokens,
                          const std::vector<std::string>& vocab_words) {
  std::string s;
  for (std::uint32_t t : tokens) {
    if (!s.empty()) s += " ";
    s += t < vocab_words.size() ? vocab_words[t] : "?";
  }
  return s;
}

template <class T>
int retrieve_with(const RetrieveOptions& o, const std::vector<ShapeRecord>& records,
                  const DatasetManifest& mf) {
  LoadedCheckpoint<T> ck = load_checkpoint<T>(o.ckpt);
  check_compat(ck.cfg, mf);
  const auto caps = mf.config.captions_per_shape;
  SplitEmbeddings embs = embed_split(records, ck.params, ck.cfg.enc, ck.cfg.flags, caps);

  if (o.query_shape >= 0) {
    // shape-to-text
    std::size_t qi = embs.shape_ids.size();
    for (std::size_t i = 0; i < embs.shape_ids.size(); ++i) {
      if (embs.shape_ids[i] == static_cast<std::uint32_t>(o.query_shape)) qi = i;
    }
    if (qi == embs.shape_ids.size())
      throw ConfigError("shape id " + std::to_string(o.query_shape) + " not in split");
    RankedResult r = rank_gallery(embs.shape_ids[qi], embs.shape_embs[qi], embs.caption_embs,
                                  embs.caption_ids);
    std::printf("top-%zu captions for shape %lld:\n", o.topk,
                static_cast<long long>(o.query_shape));
    for (std::size_t k = 0; k < std::min(o.topk, r.gallery_ids.size()); ++k) {
      std::uint32_t cid = r.gallery_ids[k];
      bool relevant = cid / caps == static_cast<std::uint32_t>(o.query_shape);
      std::string words;
      for (const auto& rec : records) {
        if (rec.id == cid / caps) words = caption_words(rec.captions[cid % caps], mf.vocab_words);
      }
      std::printf("%2zu. caption %-5u score %+.4f %s  \"%s\"\n", k + 1, cid, r.scores[k],
                  relevant ? "[GT]" : "    ", words.c_str());
    }
    return 0;
  }

  // text-to-shape
  std::vector<std::uint32_t> tokens = tokenize(o.query_text, mf.vocab_words);
  Tape<T> tape;
  auto emb = encode_text(tape, std::span<const std::uint32_t>(tokens), ck.params, ck.cfg.enc);
  std::vector<double> q = to_double_row(tape.value(emb));
  RankedResult r = rank_gallery(0, q, embs.shape_embs, embs.shape_ids);
  std::printf("top-%zu shapes for \"%s\":\n", o.topk, o.query_text.c_str());
  for (std::size_t k = 0; k < std::min(o.topk, r.gallery_ids.size()); ++k) {
    std::uint32_t sid = r.gallery_ids[k];
    bool relevant = false;
    for (const auto& rec : records) {
      if (rec.id == sid) {
        for (const auto& cap : rec.captions) relevant = relevant || cap == tokens;
      }
    }
    std::printf("%2zu. shape %-5u score %+.4f %s\n", k + 1, sid, r.scores[k],
                relevant ? "[GT]" : "");
  }
  return 0;
}

int run_retrieve(const RetrieveOptions& o) {
  if (o.query_text.empty() == (o.query_shape < 0)) {
    throw ConfigError("retrieve needs exactly one of --query-text or --query-shape");
  }
  Dataset ds = Dataset::open(o.data + "/" + o.split + ".manifest.json");
  std::vector<ShapeRecord> records = ds.load_all();
  CheckpointInfo info = read_checkpoint_info(o.ckpt);
  return info.precision == Precision::F64 ? retrieve_with<double>(o, records, ds.manifest())
                                          : retrieve_with<float>(o, records, ds.manifest());
}

struct GradcheckOptions {
  std::string scope = "full";
  double h = 1e-5;
  double tol = 0;  // 0 = scope default
  std::uint64_t seed = 1;
};

int run_gradcheck(const GradcheckOptions& o) {
  double tol = o.tol;
  if (tol == 0) {
    if (o.scope == "full") tol = 1e-3;
    else if (o.scope == "loss") tol = 1e-4;
    else tol = 1e-5;
  }
  GradCheckReport report = gradcheck_scope(o.scope, o.h, o.seed);
  std::printf("%s", report.summary(tol).c_str());
  const GradCheckEntry* worst = report.worst_entry();
  if (!report.pass(tol)) {
    std::printf("FAIL: worst tensor '%s' rel err %.3e (analytic %.6e vs numeric %.6e) > tol %.1e\n",
                worst->name.c_str(), worst->max_rel_err, worst->analytic, worst->numeric, tol);
    throw NumericError("gradient check failed for scope " + o.scope);
  }
  std::printf("OK: scope %s, worst rel err %.3e < tol %.1e\n", o.scope.c_str(),
              worst ? worst->max_rel_err : 0.0, tol);
  return 0;
}

struct AblateOptions {
  std::string data;
  std::string grid;
  std::size_t seeds = 5;
  std::size_t jobs = 2;
  std::string out;
  // base hyperparameters shared by all arms
  TrainOptions base;
};

int run_ablate(const AblateOptions& o) {
  Dataset train_ds = Dataset::open(o.data + "/train.manifest.json");
  TrainConfig base = to_train_config(o.base, train_ds.manifest());
  AblateGrid grid = parse_grid_file(o.grid, base);

  std::vector<std::uint64_t> seeds = grid.seeds;
  if (seeds.empty()) {
    for (std::uint64_t s = 1; s <= o.seeds; ++s) seeds.push_back(s);
  }
  std::vector<ArmResult> rows =
      run_ablation(grid.arms, seeds, train_ds.manifest().config, o.jobs);
  std::printf("%s", format_ablation_table(rows).c_str());
  if (!o.out.empty()) {
    std::ofstream os(o.out, std::ios::trunc);
    os << ablation_json(rows) << "\n";
    if (!os) throw ConfigError("cannot write " + o.out);
    std::printf("wrote %s\n", o.out.c_str());
  }
  return 0;
}

void add_train_flags(CLI::App* cmd, TrainOptions& t, bool with_out) {
  cmd->add_option("--data", t.data, "dataset directory (train/test manifest+blob)")->required();
  if (with_out) cmd->add_option("--out", t.out, "output directory for checkpoints and log")->required();
  cmd->add_option("--epochs", t.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch", t.batch, "batch size")->capture_default_str();
  cmd->add_option("--lr", t.lr, "base learning rate (cosine-annealed)")->capture_default_str();
  cmd->add_option("--modalities", t.modalities, "both|image|point")->capture_default_str();
  cmd->add_option("--recon", t.recon, "off|i2p|p2i|both|bi")->capture_default_str();
  cmd->add_option("--fusion", t.fusion, "cqa|mlp")->capture_default_str();
  cmd->add_option("--loss", t.loss, "hn_nce|info_nce")->capture_default_str();
  cmd->add_option("--hn-mirror", t.hn_mirror, "pool|literal")->capture_default_str();
  cmd->add_option("--beta", t.beta, "hard-negative concentration")->capture_default_str();
  cmd->add_option("--seed", t.seed, "training seed")->capture_default_str();
  cmd->add_option("--precision", t.precision, "f32|f64")->capture_default_str();
  cmd->add_option("--dim", t.dim, "embedding width D")->capture_default_str();
  cmd->add_option("--n-features", t.n_features, "point feature count N")->capture_default_str();
  cmd->add_option("--hidden", t.hidden, "MLP hidden width")->capture_default_str();
  cmd->add_option("--eval-every", t.eval_every, "evaluation cadence in epochs")
      ->capture_default_str();
  cmd->add_option("--tau-init", t.tau_init, "initial temperature")->capture_default_str();
  cmd->add_option("--tau-floor", t.tau_floor, "temperature clamp floor")->capture_default_str();
  cmd->add_option("--weight-decay", t.weight_decay, "AdamW decoupled decay")
      ->capture_default_str();
  cmd->add_option("--preset", t.preset, "hyperparameter preset: paper (full-scale values)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-modal 3D shape / text retrieval pipeline"};
  app.require_subcommand(1);

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic tri-modal dataset");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--train-shapes", synth.train_shapes)->capture_default_str();
  synth_cmd->add_option("--test-shapes", synth.test_shapes)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--n-points", synth.n_points)->capture_default_str();
  synth_cmd->add_option("--views", synth.views)->capture_default_str();
  synth_cmd->add_option("--view-dim", synth.view_dim)->capture_default_str();
  synth_cmd->add_option("--vocab", synth.vocab)->capture_default_str();
  synth_cmd->add_option("--captions", synth.captions)->capture_default_str();
  synth_cmd->add_flag("--force", synth.force, "overwrite existing output");

  TrainOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "train the retrieval model");
  add_train_flags(train_cmd, train_opt, true);

  EvalOptions eval_opt;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--data", eval_opt.data)->required();
  eval_cmd->add_option("--ckpt", eval_opt.ckpt)->required();
  eval_cmd->add_option("--split", eval_opt.split, "test|train")->capture_default_str();

  RetrieveOptions ret_opt;
  CLI::App* ret_cmd = app.add_subcommand("retrieve", "single-query retrieval");
  ret_cmd->add_option("--data", ret_opt.data)->required();
  ret_cmd->add_option("--ckpt", ret_opt.ckpt)->required();
  ret_cmd->add_option("--split", ret_opt.split)->capture_default_str();
  ret_cmd->add_option("--query-text", ret_opt.query_text, "caption words, space separated");
  ret_cmd->add_option("--query-shape", ret_opt.query_shape, "shape id");
  ret_cmd->add_option("--topk", ret_opt.topk)->capture_default_str();

  GradcheckOptions gc_opt;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc_cmd->set_help_flag("--help", "print help");  // frees -h for the step size
  gc_cmd->add_option("--scope", gc_opt.scope, "tensor|fusion|loss|recon|full")
      ->capture_default_str();
  gc_cmd->add_option("--h", gc_opt.h, "central difference step")->capture_default_str();
  gc_cmd->add_option("--tol", gc_opt.tol, "max relative error (0 = scope default)");
  gc_cmd->add_option("--seed", gc_opt.seed)->capture_default_str();

  AblateOptions ab_opt;
  CLI::App* ab_cmd = app.add_subcommand("ablate", "train a grid of ablation arms");
  ab_cmd->add_option("--grid", ab_opt.grid, "grid JSON file")->required();
  ab_cmd->add_option("--seeds", ab_opt.seeds, "seed count when the grid does not pin seeds")
      ->capture_default_str();
  ab_cmd->add_option("--jobs", ab_opt.jobs, "parallel training runs")->capture_default_str();
  ab_cmd->add_option("--out", ab_opt.out, "write per-arm JSON here");
  add_train_flags(ab_cmd, ab_opt.base, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed()) return run_train(train_opt);
    if (eval_cmd->parsed()) return run_eval(eval_opt);
    if (ret_cmd->parsed()) return run_retrieve(ret_opt);
    if (gc_cmd->parsed()) return run_gradcheck(gc_opt);
    if (ab_cmd->parsed()) {
      ab_opt.data = ab_opt.base.data;
      return run_ablate(ab_opt);
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
