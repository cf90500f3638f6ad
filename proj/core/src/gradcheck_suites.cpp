#include "tmr/gradcheck_suites.hpp"

#include "tmr/data.hpp"
#include "tmr/fusion.hpp"
#include "tmr/loss.hpp"
#include "tmr/model.hpp"
#include "tmr/reconstruction.hpp"
#include "tmr/rng.hpp"
#include "tmr/trainer.hpp"

namespace tmr {

namespace {

using D = double;
using Id = Tape<D>::Id;

void fill_uniform(Tensor<D>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = rng.uniform(lo, hi);
}

Tensor<D>& make_param(ParamSet<D>& params, const std::string& name, std::size_t r, std::size_t c,
                      Rng& rng) {
  Tensor<D>& t = params.create(name, r, c);
  fill_uniform(t, rng);
  return t;
}

}  // namespace

GradCheckReport gradcheck_tensor_ops(double h, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet<D> params;
  make_param(params, "a", 3, 4, rng);
  make_param(params, "b", 4, 2, rng);
  make_param(params, "c", 3, 4, rng);
  make_param(params, "d", 1, 5, rng);
  make_param(params, "e", 1, 5, rng);
  make_param(params, "f", 2, 3, rng);

  auto loss = [&params](bool with_grad) -> double {
    Tape<D> tape;
    Id a = tape.param(params.get("a"));
    Id b = tape.param(params.get("b"));
    Id c = tape.param(params.get("c"));
    Id d = tape.param(params.get("d"));
    Id e = tape.param(params.get("e"));
    Id f = tape.param(params.get("f"));

    Id m = tape.matmul(a, b);                       // 3x2
    Id t = tape.transpose(m);                       // 2x3
    Id sr = tape.softmax(c, Axis::Rows);
    Id sc = tape.softmax(c, Axis::Cols);
    Id cc = tape.concat_cols({a, sr});              // 3x8
    Id sl = tape.slice_cols(cc, 2, 6);              // 3x4
    Id cr = tape.concat_rows({f, t});               // 4x3
    Id mixed = tape.mul(tape.add(sl, sc), tape.sub(a, c));
    Id safe_div = tape.div(mixed, tape.exp(tape.scale(c, D(0.25))));
    Id r = tape.relu(mixed);
    Id lg = tape.log(tape.add(tape.exp(c), tape.input(Tensor<D>::ones(3, 4))));
    Id mx = tape.max_rows(safe_div);
    Id mn = tape.mean_rows(lg);
    Id csm = tape.cosine_sim_matrix(a, c);          // 3x3

    Id total = tape.sum_all(r);
    total = tape.add(total, tape.sum_all(cr));
    total = tape.add(total, tape.sum_all(mx));
    total = tape.add(total, tape.sum_all(mn));
    total = tape.add(total, tape.sum_all(csm));
    total = tape.add(total, tape.l2_distance(d, e));
    total = tape.add(total, tape.cosine_similarity(d, e));
    double v = tape.value(total).data[0];
    if (with_grad) tape.backward(total);
    return v;
  };
  return grad_check(params, loss, h);
}

GradCheckReport gradcheck_fusion(double h, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 4, m = 3, dim = 6;
  ParamSet<D> params;
  make_param(params, "P", n, dim, rng);
  make_param(params, "I", m, dim, rng);
  {
    Tensor<D>& w0 = params.create("fusion.w0", 1, 3 * dim);
    fill_uniform(w0, rng, -0.5, 0.5);
    create_mlp(params, "fusion.pool", 4 * dim, dim, dim, rng);
  }

  auto loss = [&](bool with_grad) -> double {
    Tape<D> tape;
    Id p = tape.param(params.get("P"));
    Id i = tape.param(params.get("I"));
    SimilarityGrid<D> grid = trilinear_scores(tape, p, i, params);
    auto [attn_v, attn_p] = attention_aggregate(tape, grid, p, i);
    Id emb = fuse(tape, p, attn_v, attn_p, params);
    Id total = tape.sum_all(tape.mul(emb, emb));
    double v = tape.value(total).data[0];
    if (with_grad) tape.backward(total);
    return v;
  };
  return grad_check(params, loss, h);
}

GradCheckReport gradcheck_loss(double h, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 4, dim = 6;
  ParamSet<D> params;
  make_param(params, "shape_embs", n, dim, rng);
  make_param(params, "text_embs", n, dim, rng);
  Tensor<D>& tau = params.create("tau", 1, 1);
  tau.data[0] = 0.07;

  LossConfig cfg;
  cfg.beta = 0.5;
  auto loss = [&](bool with_grad) -> double {
    Tape<D> tape;
    Id s = tape.param(params.get("shape_embs"));
    Id t = tape.param(params.get("text_embs"));
    Id sim = build_sim_matrix(tape, s, t);
    Id total = contrastive_loss(tape, sim, tape.param(params.get("tau")), cfg);
    double v = tape.value(total).data[0];
    if (with_grad) tape.backward(total);
    return v;
  };
  return grad_check(params, loss, h);
}

GradCheckReport gradcheck_recon(double h, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t dim = 6;
  ParamSet<D> params;
  make_param(params, "pooled_p", 1, dim, rng);
  make_param(params, "pooled_i", 1, dim, rng);
  make_param(params, "text", 1, dim, rng);
  create_mlp(params, "recon.p2i", 2 * dim, 2 * dim, dim, rng);
  create_mlp(params, "recon.i2p", 2 * dim, 2 * dim, dim, rng);

  auto loss = [&](bool with_grad) -> double {
    Tape<D> tape;
    Id p = tape.param(params.get("pooled_p"));
    Id i = tape.param(params.get("pooled_i"));
    Id t = tape.param(params.get("text"));
    ReconOutput<D> rec = reconstruct(tape, p, i, t, params, ReconMode::Both);
    Id total = tape.add(rec.loss_i2p, rec.loss_p2i);
    double v = tape.value(total).data[0];
    if (with_grad) tape.backward(total);
    return v;
  };
  return grad_check(params, loss, h);
}

GradCheckReport gradcheck_full(double h, std::uint64_t seed) {
  DataConfig data_cfg;
  data_cfg.train_shapes = 4;
  data_cfg.test_shapes = 2;
  data_cfg.n_points = 16;
  data_cfg.n_views = 3;
  data_cfg.view_dim = 5;
  data_cfg.vocab = 24;
  data_cfg.categories = 2;
  data_cfg.colors = 2;
  data_cfg.sizes = 2;
  data_cfg.part_counts = 2;
  data_cfg.seed = seed;

  EncoderConfig enc;
  enc.n_points = 16;
  enc.point_dim = 6;
  enc.n_groups = 4;
  enc.n_views = 3;
  enc.view_dim = 5;
  enc.dim = 8;
  enc.hidden = 8;
  enc.vocab = 24;

  PipelineFlags flags;  // both modalities, recon both, cqa, hn_nce
  GeneratedData data = generate_records(data_cfg);
  ParamSet<D> params = init_params<D>(enc, flags, seed);

  BatchPlan plan;
  for (std::uint32_t i = 0; i < 4; ++i) plan.items.emplace_back(i, i % 5);

  auto loss = [&](bool with_grad) -> double {
    Tape<D> tape;
    BatchForward<D> fwd = forward_batch(tape, data.train, plan, params, enc, flags);
    double v = tape.value(fwd.total).data[0];
    if (with_grad) tape.backward(fwd.total);
    return v;
  };
  return grad_check(params, loss, h);
}

GradCheckReport gradcheck_scope(const std::string& scope, double h, std::uint64_t seed) {
  if (scope == "tensor") return gradcheck_tensor_ops(h, seed);
  if (scope == "fusion") return gradcheck_fusion(h, seed);
  if (scope == "loss") return gradcheck_loss(h, seed);
  if (scope == "recon") return gradcheck_recon(h, seed);
  if (scope == "full") return gradcheck_full(h, seed);
  throw ConfigError("unknown gradcheck scope '" + scope + "' (tensor|fusion|loss|recon|full)");
}

}  // namespace tmr
