#include "tmr/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tmr/rng.hpp"

namespace tmr {
namespace {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

const char* kCategoryWords[][2] = {
    {"table", "desk"},     {"chair", "seat"},    {"sofa", "couch"},    {"bench", "pew"},
    {"stool", "perch"},    {"shelf", "rack"},    {"cabinet", "cupboard"}, {"bed", "bunk"},
    {"lamp", "light"},     {"crate", "box"},     {"barrel", "drum"},   {"cart", "trolley"},
    {"easel", "stand"},    {"podium", "lectern"}, {"hammock", "swing"}, {"ladder", "steps"},
};
const char* kColorWords[][2] = {
    {"red", "crimson"}, {"blue", "azure"}, {"green", "emerald"}, {"gray", "ashen"}};
const char* kSizeWords[][2] = {{"small", "little"}, {"large", "big"}};
const char* kPartWords[][2] = {{"three", "triple"}, {"four", "quad"}};
const char* kFillerWords[] = {"a", "the", "with", "legs", "colored", "wooden", "top", "sturdy"};
constexpr std::uint32_t kFillerCount = 8;

std::string fallback_word(const char* stem, std::uint32_t value, std::uint32_t syn) {
  return std::string(stem) + std::to_string(value) + (syn == 0 ? "a" : "b");
}

}  // namespace

std::vector<std::string> build_vocab(const DataConfig& cfg) {
  std::vector<std::string> words;
  for (std::uint32_t v = 0; v < cfg.categories; ++v)
    for (std::uint32_t s = 0; s < 2; ++s)
      words.push_back(v < 16 ? kCategoryWords[v][s] : fallback_word("shape", v, s));
  for (std::uint32_t v = 0; v < cfg.colors; ++v)
    for (std::uint32_t s = 0; s < 2; ++s)
      words.push_back(v < 4 ? kColorWords[v][s] : fallback_word("hue", v, s));
  for (std::uint32_t v = 0; v < cfg.sizes; ++v)
    for (std::uint32_t s = 0; s < 2; ++s)
      words.push_back(v < 2 ? kSizeWords[v][s] : fallback_word("scale", v, s));
  for (std::uint32_t v = 0; v < cfg.part_counts; ++v)
    for (std::uint32_t s = 0; s < 2; ++s)
      words.push_back(v < 2 ? kPartWords[v][s] : fallback_word("legs", v, s));
  for (std::uint32_t f = 0; f < kFillerCount; ++f) words.push_back(kFillerWords[f]);
  if (words.size() > cfg.vocab) {
    throw ConfigError("vocab too small: need at least " + std::to_string(words.size()) +
                      " tokens, got " + std::to_string(cfg.vocab));
  }
  for (std::uint32_t i = static_cast<std::uint32_t>(words.size()); i < cfg.vocab; ++i)
    words.push_back("tok" + std::to_string(i));
  return words;
}

std::pair<std::uint32_t, std::uint32_t> synonym_range(const DataConfig& cfg,
                                                      const std::string& attribute,
                                                      std::uint32_t value) {
  std::uint32_t base = 0;
  if (attribute == "category") {
    // base stays 0
  } else if (attribute == "color") {
    base = 2 * cfg.categories;
  } else if (attribute == "size") {
    base = 2 * (cfg.categories + cfg.colors);
  } else if (attribute == "parts") {
    base = 2 * (cfg.categories + cfg.colors + cfg.sizes);
  } else {
    throw ConfigError("unknown attribute: " + attribute);
  }
  std::uint32_t lo = base + 2 * value;
  return {lo, lo + 2};
}

namespace {

std::uint32_t filler_base(const DataConfig& cfg) {
  return 2 * (cfg.categories + cfg.colors + cfg.sizes + cfg.part_counts);
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct Box {
  float cx, cy, cz;  // center
  float hx, hy, hz;  // half extents
};

// Category-dependent archetype: a top slab over three or four legs. The
// modulus mix makes all 16 default categories geometrically distinct.
std::vector<Box> archetype_boxes(const ShapeConcept& c) {
  float wx = 0.35f + 0.03f * static_cast<float>(c.category % 4);
  float wz = 0.25f + 0.04f * static_cast<float>((c.category / 4) % 4);
  float thick = 0.05f + 0.01f * static_cast<float>(c.category % 3);
  float top_y = 0.30f + 0.04f * static_cast<float>(c.category % 5);
  float lw = 0.03f + 0.01f * static_cast<float>(c.category % 2);

  std::vector<Box> boxes;
  boxes.push_back({0.f, top_y - thick / 2, 0.f, wx, thick / 2, wz});  // top slab
  float leg_top = top_y - thick;
  float leg_cy = (leg_top - 0.5f) / 2;
  float leg_hy = (leg_top + 0.5f) / 2;
  float px = wx - lw, pz = wz - lw;
  if (c.parts == 0) {  // three legs
    boxes.push_back({px, leg_cy, pz, lw, leg_hy, lw});
    boxes.push_back({px, leg_cy, -pz, lw, leg_hy, lw});
    boxes.push_back({-px, leg_cy, 0.f, lw, leg_hy, lw});
  } else {  // four legs
    boxes.push_back({px, leg_cy, pz, lw, leg_hy, lw});
    boxes.push_back({px, leg_cy, -pz, lw, leg_hy, lw});
    boxes.push_back({-px, leg_cy, pz, lw, leg_hy, lw});
    boxes.push_back({-px, leg_cy, -pz, lw, leg_hy, lw});
  }
  return boxes;
}

void color_rgb(std::uint32_t color, float* rgb) {
  static const float palette[4][3] = {
      {0.85f, 0.10f, 0.10f}, {0.10f, 0.20f, 0.85f}, {0.10f, 0.75f, 0.20f}, {0.55f, 0.55f, 0.55f}};
  if (color < 4) {
    rgb[0] = palette[color][0];
    rgb[1] = palette[color][1];
    rgb[2] = palette[color][2];
  } else {
    rgb[0] = static_cast<float>((color * 37u) % 256u) / 255.f;
    rgb[1] = static_cast<float>((color * 73u) % 256u) / 255.f;
    rgb[2] = static_cast<float>((color * 151u) % 256u) / 255.f;
  }
}

// Kronecker (R3) low-discrepancy sequence; concept-deterministic positions so
// zero jitter means bit-identical clouds for equal concepts.
void r3_point(std::size_t k, float* u) {
  static const double g[3] = {0.8191725133961645, 0.6710436067037893, 0.5497004779019703};
  for (int a = 0; a < 3; ++a) {
    double v = static_cast<double>(k + 1) * g[a];
    u[a] = static_cast<float>(v - std::floor(v));
  }
}

std::vector<float> base_points(const ShapeConcept& c, const DataConfig& cfg) {
  std::vector<Box> boxes = archetype_boxes(c);
  float scale = c.size == 0 ? 0.6f : 1.0f;
  float rgb[3];
  color_rgb(c.color, rgb);

  // Half the points on the top slab, the rest split across legs.
  std::vector<std::uint32_t> counts(boxes.size(), 0);
  counts[0] = cfg.n_points / 2;
  std::uint32_t rest = cfg.n_points - counts[0];
  std::uint32_t legs = static_cast<std::uint32_t>(boxes.size()) - 1;
  for (std::uint32_t l = 0; l < legs; ++l) counts[1 + l] = rest / legs;
  for (std::uint32_t r = 0; r < rest % legs; ++r) counts[1 + r] += 1;

  std::vector<float> pts;
  pts.reserve(static_cast<std::size_t>(cfg.n_points) * cfg.point_dim);
  std::size_t k = 0;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Box& box = boxes[b];
    for (std::uint32_t i = 0; i < counts[b]; ++i, ++k) {
      float u[3];
      r3_point(k, u);
      pts.push_back((box.cx + (2 * u[0] - 1) * box.hx) * scale);
      pts.push_back((box.cy + (2 * u[1] - 1) * box.hy) * scale);
      pts.push_back((box.cz + (2 * u[2] - 1) * box.hz) * scale);
      pts.push_back(rgb[0]);
      pts.push_back(rgb[1]);
      pts.push_back(rgb[2]);
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// View descriptor machinery
// ---------------------------------------------------------------------------

struct ViewBases {
  // one template vector per attribute value
  std::vector<std::vector<double>> category, color, size, parts;
  // one orthogonal mixing matrix per view, shared across shapes
  std::vector<std::vector<double>> mixing;  // n_views x (d_v*d_v)
  std::vector<std::uint32_t> point_perm;    // dataset-level point shuffle
};

std::vector<std::vector<double>> draw_bases(Rng& rng, std::uint32_t values, std::uint32_t dim) {
  std::vector<std::vector<double>> out(values);
  for (auto& v : out) {
    v.resize(dim);
    for (auto& x : v) x = rng.gaussian();
  }
  return out;
}

// Modified Gram-Schmidt orthogonalization of a random Gaussian matrix.
std::vector<double> random_orthogonal(Rng& rng, std::uint32_t d) {
  std::vector<double> m(static_cast<std::size_t>(d) * d);
  for (auto& x : m) x = rng.gaussian();
  for (std::uint32_t i = 0; i < d; ++i) {
    double* row = m.data() + static_cast<std::size_t>(i) * d;
    for (std::uint32_t j = 0; j < i; ++j) {
      const double* prev = m.data() + static_cast<std::size_t>(j) * d;
      double dot = 0;
      for (std::uint32_t k = 0; k < d; ++k) dot += row[k] * prev[k];
      for (std::uint32_t k = 0; k < d; ++k) row[k] -= dot * prev[k];
    }
    double norm = 0;
    for (std::uint32_t k = 0; k < d; ++k) norm += row[k] * row[k];
    norm = std::sqrt(norm);
    if (norm < 1e-9) norm = 1;  // essentially impossible for Gaussian draws
    for (std::uint32_t k = 0; k < d; ++k) row[k] /= norm;
  }
  return m;
}

ViewBases draw_view_bases(const DataConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, 1));
  ViewBases vb;
  vb.category = draw_bases(rng, cfg.categories, cfg.view_dim);
  vb.color = draw_bases(rng, cfg.colors, cfg.view_dim);
  vb.size = draw_bases(rng, cfg.sizes, cfg.view_dim);
  vb.parts = draw_bases(rng, cfg.part_counts, cfg.view_dim);
  for (std::uint32_t m = 0; m < cfg.n_views; ++m)
    vb.mixing.push_back(random_orthogonal(rng, cfg.view_dim));
  vb.point_perm.resize(cfg.n_points);
  for (std::uint32_t i = 0; i < cfg.n_points; ++i) vb.point_perm[i] = i;
  rng.shuffle(vb.point_perm.begin(), vb.point_perm.end());
  return vb;
}

std::vector<double> concept_template(const ViewBases& vb, const ShapeConcept& c,
                                     std::uint32_t dim) {
  std::vector<double> g(dim, 0.0);
  for (std::uint32_t k = 0; k < dim; ++k) {
    g[k] = vb.category[c.category][k] + vb.color[c.color][k] + vb.size[c.size][k] +
           vb.parts[c.parts][k];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Record synthesis
// ---------------------------------------------------------------------------

std::vector<ShapeConcept> concept_pool(const DataConfig& cfg) {
  std::vector<ShapeConcept> pool;
  for (std::uint32_t c = 0; c < cfg.categories; ++c)
    for (std::uint32_t col = 0; col < cfg.colors; ++col)
      for (std::uint32_t s = 0; s < cfg.sizes; ++s)
        for (std::uint32_t p = 0; p < cfg.part_counts; ++p) pool.push_back({c, col, s, p});
  return pool;
}

std::vector<std::uint32_t> make_caption(const DataConfig& cfg, const ShapeConcept& c, Rng& rng) {
  std::vector<std::uint32_t> tokens;
  tokens.push_back(synonym_range(cfg, "category", c.category).first + rng.index(2));
  tokens.push_back(synonym_range(cfg, "color", c.color).first + rng.index(2));
  tokens.push_back(synonym_range(cfg, "size", c.size).first + rng.index(2));
  tokens.push_back(synonym_range(cfg, "parts", c.parts).first + rng.index(2));
  std::size_t fillers = rng.index(3);
  for (std::size_t f = 0; f < fillers && tokens.size() < cfg.max_caption_len; ++f)
    tokens.push_back(filler_base(cfg) + static_cast<std::uint32_t>(rng.index(kFillerCount)));
  rng.shuffle(tokens.begin(), tokens.end());
  return tokens;
}

ShapeRecord synthesize(const DataConfig& cfg, const ViewBases& vb, const ShapeConcept& attrs,
                       std::uint32_t id, Rng& rng) {
  ShapeRecord rec;
  rec.id = id;
  rec.attrs = attrs;

  std::vector<float> base = base_points(attrs, cfg);
  rec.points.resize(base.size());
  for (std::uint32_t i = 0; i < cfg.n_points; ++i) {
    const float* src = base.data() + static_cast<std::size_t>(vb.point_perm[i]) * cfg.point_dim;
    float* dst = rec.points.data() + static_cast<std::size_t>(i) * cfg.point_dim;
    for (std::uint32_t d = 0; d < 3; ++d) {
      float v = src[d] + cfg.xyz_jitter * static_cast<float>(rng.gaussian());
      dst[d] = std::clamp(v, -1.0f, 1.0f);
    }
    for (std::uint32_t d = 3; d < cfg.point_dim; ++d) dst[d] = src[d];
  }

  std::vector<double> g = concept_template(vb, attrs, cfg.view_dim);
  rec.views.resize(static_cast<std::size_t>(cfg.n_views) * cfg.view_dim);
  for (std::uint32_t m = 0; m < cfg.n_views; ++m) {
    const std::vector<double>& R = vb.mixing[m];
    for (std::uint32_t r = 0; r < cfg.view_dim; ++r) {
      double acc = 0;
      const double* row = R.data() + static_cast<std::size_t>(r) * cfg.view_dim;
      for (std::uint32_t k = 0; k < cfg.view_dim; ++k) acc += row[k] * g[k];
      acc += cfg.view_noise * rng.gaussian();
      rec.views[static_cast<std::size_t>(m) * cfg.view_dim + r] = static_cast<float>(acc);
    }
  }

  for (std::uint32_t cap = 0; cap < cfg.captions_per_shape; ++cap)
    rec.captions.push_back(make_caption(cfg, attrs, rng));
  return rec;
}

// ---------------------------------------------------------------------------
// Binary encoding (little-endian regardless of host)
// ---------------------------------------------------------------------------

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void encode_record(std::vector<std::uint8_t>& out, const ShapeRecord& rec) {
  put_u32(out, rec.id);
  put_u32(out, rec.attrs.category);
  put_u32(out, rec.attrs.color);
  put_u32(out, rec.attrs.size);
  put_u32(out, rec.attrs.parts);
  for (float v : rec.points) put_f32(out, v);
  for (float v : rec.views) put_f32(out, v);
  put_u32(out, static_cast<std::uint32_t>(rec.captions.size()));
  for (const auto& cap : rec.captions) {
    put_u32(out, static_cast<std::uint32_t>(cap.size()));
    for (std::uint32_t t : cap) put_u32(out, t);
  }
}

/// Bounds-checked little-endian reader over one record's extent.
class RecordReader {
 public:
  RecordReader(const std::uint8_t* base, std::uint64_t begin, std::uint64_t end,
               std::size_t record_index)
      : p_(base + begin), end_(base + end), index_(record_index) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(p_[0]) | (static_cast<std::uint32_t>(p_[1]) << 8) |
                      (static_cast<std::uint32_t>(p_[2]) << 16) |
                      (static_cast<std::uint32_t>(p_[3]) << 24);
    p_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void f32_array(std::vector<float>& out, std::size_t count) {
    need(4 * count);
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = f32_unchecked();
  }

 private:
  float f32_unchecked() {
    std::uint32_t v = static_cast<std::uint32_t>(p_[0]) | (static_cast<std::uint32_t>(p_[1]) << 8) |
                      (static_cast<std::uint32_t>(p_[2]) << 16) |
                      (static_cast<std::uint32_t>(p_[3]) << 24);
    p_ += 4;
    return std::bit_cast<float>(v);
  }

  void need(std::size_t bytes) {
    if (static_cast<std::size_t>(end_ - p_) < bytes) {
      throw DatasetError(DatasetErrorKind::Truncated,
                         "record " + std::to_string(index_) + " truncated: needs " +
                             std::to_string(bytes) + " more bytes");
    }
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
  std::size_t index_;
};

ShapeRecord parse_record(const std::vector<std::uint8_t>& blob, const DatasetManifest& mf,
                         std::size_t i) {
  std::uint64_t begin = mf.offsets[i];
  std::uint64_t end = (i + 1 < mf.offsets.size()) ? mf.offsets[i + 1] : mf.blob_bytes;
  if (begin >= end || end > blob.size()) {
    throw DatasetError(DatasetErrorKind::OffsetOutOfBounds,
                       "record " + std::to_string(i) + " extent [" + std::to_string(begin) +
                           ", " + std::to_string(end) + ") out of blob of " +
                           std::to_string(blob.size()) + " bytes");
  }
  RecordReader rd(blob.data(), begin, end, i);
  ShapeRecord rec;
  rec.id = rd.u32();
  rec.attrs.category = rd.u32();
  rec.attrs.color = rd.u32();
  rec.attrs.size = rd.u32();
  rec.attrs.parts = rd.u32();
  const DataConfig& cfg = mf.config;
  rd.f32_array(rec.points, static_cast<std::size_t>(cfg.n_points) * cfg.point_dim);
  rd.f32_array(rec.views, static_cast<std::size_t>(cfg.n_views) * cfg.view_dim);
  std::uint32_t caps = rd.u32();
  rec.captions.resize(caps);
  for (auto& cap : rec.captions) {
    std::uint32_t len = rd.u32();
    cap.resize(len);
    for (auto& t : cap) t = rd.u32();
  }
  return rec;
}

void validate_record(const ShapeRecord& rec, const DataConfig& cfg, std::size_t i) {
  for (std::uint32_t p = 0; p < cfg.n_points; ++p) {
    const float* pt = rec.points.data() + static_cast<std::size_t>(p) * cfg.point_dim;
    for (int d = 0; d < 3; ++d) {
      if (pt[d] < -1.0f || pt[d] > 1.0f)
        throw DatasetError(DatasetErrorKind::Io,
                           "record " + std::to_string(i) + ": xyz out of [-1,1]");
    }
    for (std::uint32_t d = 3; d < cfg.point_dim; ++d) {
      if (pt[d] < 0.0f || pt[d] > 1.0f)
        throw DatasetError(DatasetErrorKind::Io,
                           "record " + std::to_string(i) + ": rgb out of [0,1]");
    }
  }
  if (rec.captions.empty())
    throw DatasetError(DatasetErrorKind::Io, "record " + std::to_string(i) + ": no captions");
  for (const auto& cap : rec.captions) {
    if (cap.empty())
      throw DatasetError(DatasetErrorKind::Io, "record " + std::to_string(i) + ": empty caption");
    for (std::uint32_t t : cap) {
      if (t >= cfg.vocab)
        throw DatasetError(DatasetErrorKind::Io,
                           "record " + std::to_string(i) + ": token " + std::to_string(t) +
                               " outside vocab of " + std::to_string(cfg.vocab));
    }
  }
}

json config_to_json(const DataConfig& cfg) {
  return json{{"train_shapes", cfg.train_shapes},
              {"test_shapes", cfg.test_shapes},
              {"n_points", cfg.n_points},
              {"point_dim", cfg.point_dim},
              {"n_views", cfg.n_views},
              {"view_dim", cfg.view_dim},
              {"vocab", cfg.vocab},
              {"captions_per_shape", cfg.captions_per_shape},
              {"max_caption_len", cfg.max_caption_len},
              {"categories", cfg.categories},
              {"colors", cfg.colors},
              {"sizes", cfg.sizes},
              {"part_counts", cfg.part_counts},
              {"xyz_jitter", cfg.xyz_jitter},
              {"view_noise", cfg.view_noise},
              {"seed", cfg.seed}};
}

DataConfig config_from_json(const json& j) {
  DataConfig cfg;
  cfg.train_shapes = j.at("train_shapes").get<std::uint32_t>();
  cfg.test_shapes = j.at("test_shapes").get<std::uint32_t>();
  cfg.n_points = j.at("n_points").get<std::uint32_t>();
  cfg.point_dim = j.at("point_dim").get<std::uint32_t>();
  cfg.n_views = j.at("n_views").get<std::uint32_t>();
  cfg.view_dim = j.at("view_dim").get<std::uint32_t>();
  cfg.vocab = j.at("vocab").get<std::uint32_t>();
  cfg.captions_per_shape = j.at("captions_per_shape").get<std::uint32_t>();
  cfg.max_caption_len = j.at("max_caption_len").get<std::uint32_t>();
  cfg.categories = j.at("categories").get<std::uint32_t>();
  cfg.colors = j.at("colors").get<std::uint32_t>();
  cfg.sizes = j.at("sizes").get<std::uint32_t>();
  cfg.part_counts = j.at("part_counts").get<std::uint32_t>();
  cfg.xyz_jitter = j.at("xyz_jitter").get<float>();
  cfg.view_noise = j.at("view_noise").get<float>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

void write_split(const std::vector<ShapeRecord>& records, const DataConfig& cfg,
                 const std::string& dir, const std::string& split, bool force) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string manifest_path = dir + "/" + split + ".manifest.json";
  std::string blob_path = dir + "/" + split + ".blob";
  if (!force && (fs::exists(manifest_path) || fs::exists(blob_path))) {
    throw ConfigError("output exists: " + manifest_path + " (use --force to overwrite)");
  }

  std::vector<std::uint8_t> blob;
  std::vector<std::uint64_t> offsets;
  for (const auto& rec : records) {
    offsets.push_back(blob.size());
    encode_record(blob, rec);
  }

  json mf;
  mf["version"] = kDatasetVersion;
  mf["split"] = split;
  mf["shape_count"] = records.size();
  mf["train_shapes"] = cfg.train_shapes;
  mf["test_shapes"] = cfg.test_shapes;
  mf["config"] = config_to_json(cfg);
  mf["offsets"] = offsets;
  mf["blob_bytes"] = blob.size();
  mf["vocab_words"] = build_vocab(cfg);

  std::ofstream bf(blob_path, std::ios::binary | std::ios::trunc);
  bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!bf) throw DatasetError(DatasetErrorKind::Io, "cannot write " + blob_path);
  std::ofstream mfs(manifest_path, std::ios::trunc);
  mfs << mf.dump(2) << "\n";
  if (!mfs) throw DatasetError(DatasetErrorKind::Io, "cannot write " + manifest_path);
}

}  // namespace

GeneratedData generate_records(const DataConfig& cfg) {
  if (cfg.n_points == 0 || cfg.n_views == 0 || cfg.view_dim == 0 || cfg.captions_per_shape == 0)
    throw ConfigError("dataset config: all counts must be positive");
  build_vocab(cfg);  // validates the vocab budget

  ViewBases vb = draw_view_bases(cfg);
  std::vector<ShapeConcept> pool = concept_pool(cfg);

  GeneratedData out;
  {
    Rng rng(Rng::mix(cfg.seed, 2));
    std::vector<ShapeConcept> order = pool;
    rng.shuffle(order.begin(), order.end());
    for (std::uint32_t i = 0; i < cfg.train_shapes; ++i) {
      out.train.push_back(synthesize(cfg, vb, order[i % order.size()], i, rng));
    }
  }
  {
    Rng rng(Rng::mix(cfg.seed, 3));
    std::vector<ShapeConcept> order = pool;
    rng.shuffle(order.begin(), order.end());
    for (std::uint32_t i = 0; i < cfg.test_shapes; ++i) {
      out.test.push_back(
          synthesize(cfg, vb, order[i % order.size()], cfg.train_shapes + i, rng));
    }
  }
  return out;
}

std::pair<std::string, std::string> write_dataset(const GeneratedData& data,
                                                  const DataConfig& cfg, const std::string& dir,
                                                  bool force) {
  write_split(data.train, cfg, dir, "train", force);
  write_split(data.test, cfg, dir, "test", force);
  return {dir + "/train.manifest.json", dir + "/test.manifest.json"};
}

Dataset Dataset::open(const std::string& manifest_path) {
  std::ifstream mfs(manifest_path);
  if (!mfs) throw DatasetError(DatasetErrorKind::Io, "cannot open " + manifest_path);
  json mf;
  try {
    mfs >> mf;
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::Io,
                       "malformed manifest " + manifest_path + ": " + e.what());
  }

  Dataset ds;
  ds.manifest_.version = mf.value("version", "");
  if (ds.manifest_.version != kDatasetVersion) {
    throw DatasetError(DatasetErrorKind::VersionMismatch,
                       "dataset version '" + ds.manifest_.version + "' != '" + kDatasetVersion +
                           "' in " + manifest_path);
  }
  ds.manifest_.split = mf.value("split", "");
  ds.manifest_.shape_count = mf.at("shape_count").get<std::uint32_t>();
  ds.manifest_.train_shapes = mf.at("train_shapes").get<std::uint32_t>();
  ds.manifest_.test_shapes = mf.at("test_shapes").get<std::uint32_t>();
  ds.manifest_.config = config_from_json(mf.at("config"));
  ds.manifest_.offsets = mf.at("offsets").get<std::vector<std::uint64_t>>();
  ds.manifest_.blob_bytes = mf.at("blob_bytes").get<std::uint64_t>();
  ds.manifest_.vocab_words = mf.at("vocab_words").get<std::vector<std::string>>();

  if (ds.manifest_.offsets.size() != ds.manifest_.shape_count)
    throw DatasetError(DatasetErrorKind::Io, "offset count != shape count in " + manifest_path);
  for (std::size_t i = 0; i < ds.manifest_.offsets.size(); ++i) {
    bool bad = ds.manifest_.offsets[i] >= ds.manifest_.blob_bytes ||
               (i > 0 && ds.manifest_.offsets[i] <= ds.manifest_.offsets[i - 1]);
    if (bad) {
      throw DatasetError(DatasetErrorKind::OffsetOutOfBounds,
                         "record " + std::to_string(i) + " offset " +
                             std::to_string(ds.manifest_.offsets[i]) + " invalid for blob of " +
                             std::to_string(ds.manifest_.blob_bytes) + " bytes");
    }
  }

  std::string blob_path = manifest_path;
  auto pos = blob_path.rfind(".manifest.json");
  if (pos == std::string::npos)
    throw DatasetError(DatasetErrorKind::Io, "manifest path must end in .manifest.json");
  blob_path = blob_path.substr(0, pos) + ".blob";

  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw DatasetError(DatasetErrorKind::Io, "cannot open " + blob_path);
  ds.blob_.assign(std::istreambuf_iterator<char>(bf), std::istreambuf_iterator<char>());

  if (ds.blob_.size() < ds.manifest_.blob_bytes) {
    // Locate which record the truncation falls into.
    std::size_t victim = ds.manifest_.offsets.size() - 1;
    for (std::size_t i = 0; i < ds.manifest_.offsets.size(); ++i) {
      std::uint64_t end = (i + 1 < ds.manifest_.offsets.size()) ? ds.manifest_.offsets[i + 1]
                                                                : ds.manifest_.blob_bytes;
      if (end > ds.blob_.size()) {
        victim = i;
        break;
      }
    }
    throw DatasetError(DatasetErrorKind::Truncated,
                       "blob truncated at record " + std::to_string(victim) + ": " +
                           std::to_string(ds.blob_.size()) + " of " +
                           std::to_string(ds.manifest_.blob_bytes) + " bytes");
  }

  // Spot-check 1% of records (always at least one, always the last).
  std::size_t n = ds.manifest_.offsets.size();
  if (n > 0) {
    std::size_t step = std::max<std::size_t>(1, n / (n / 100 + 1));
    for (std::size_t i = 0; i < n; i += step)
      validate_record(parse_record(ds.blob_, ds.manifest_, i), ds.manifest_.config, i);
    validate_record(parse_record(ds.blob_, ds.manifest_, n - 1), ds.manifest_.config, n - 1);
  }
  return ds;
}

ShapeRecord Dataset::record(std::size_t i) const {
  if (i >= manifest_.offsets.size())
    throw DatasetError(DatasetErrorKind::OffsetOutOfBounds,
                       "record index " + std::to_string(i) + " out of " +
                           std::to_string(manifest_.offsets.size()));
  return parse_record(blob_, manifest_, i);
}

std::vector<ShapeRecord> Dataset::load_all() const {
  std::vector<ShapeRecord> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(record(i));
  return out;
}

std::vector<BatchPlan> make_batches(std::size_t record_count, std::size_t captions_per_shape,
                                    std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 for contrastive training");
  if (record_count < batch_size)
    throw ConfigError("dataset of " + std::to_string(record_count) +
                      " shapes is smaller than batch size " + std::to_string(batch_size));
  Rng rng(epoch_seed);
  std::vector<std::uint32_t> ids(record_count);
  for (std::size_t i = 0; i < record_count; ++i) ids[i] = static_cast<std::uint32_t>(i);
  rng.shuffle(ids.begin(), ids.end());

  std::vector<BatchPlan> plans;
  std::size_t full = record_count / batch_size;  // final short batch dropped
  for (std::size_t b = 0; b < full; ++b) {
    BatchPlan plan;
    for (std::size_t k = 0; k < batch_size; ++k) {
      std::uint32_t rec = ids[b * batch_size + k];
      std::uint32_t cap = static_cast<std::uint32_t>(rng.index(captions_per_shape));
      plan.items.emplace_back(rec, cap);
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace tmr
