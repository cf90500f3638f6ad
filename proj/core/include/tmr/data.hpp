#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tmr/errors.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

/// Generation parameters for the synthetic tri-modal dataset.
struct DataConfig {
  std::uint32_t train_shapes = 256;
  std::uint32_t test_shapes = 64;
  std::uint32_t n_points = 256;   // points per cloud
  std::uint32_t point_dim = 6;    // xyzrgb
  std::uint32_t n_views = 6;      // view descriptors per shape
  std::uint32_t view_dim = 32;
  std::uint32_t vocab = 64;
  std::uint32_t captions_per_shape = 5;
  std::uint32_t max_caption_len = 12;
  std::uint32_t categories = 16;
  std::uint32_t colors = 4;
  std::uint32_t sizes = 2;
  std::uint32_t part_counts = 2;
  float xyz_jitter = 0.01f;
  float view_noise = 0.05f;
  std::uint64_t seed = 42;
};

/// Attribute tuple a shape is built from; every modality derives from it.
struct ShapeConcept {
  std::uint32_t category = 0;
  std::uint32_t color = 0;
  std::uint32_t size = 0;   // 0 = small, 1 = large
  std::uint32_t parts = 0;  // 0 = three legs, 1 = four legs

  bool operator==(const ShapeConcept&) const = default;
};

/// One 3D object: point cloud, per-view descriptors, captions, concept.
struct ShapeRecord {
  std::uint32_t id = 0;
  ShapeConcept attrs;
  std::vector<float> points;  // n_points x 6, row-major
  std::vector<float> views;   // n_views x view_dim, row-major
  std::vector<std::vector<std::uint32_t>> captions;
};

struct DatasetManifest {
  std::string version;  // must be "TMR1"
  std::string split;
  std::uint32_t shape_count = 0;
  std::uint32_t train_shapes = 0;
  std::uint32_t test_shapes = 0;
  DataConfig config;
  std::vector<std::uint64_t> offsets;  // strictly increasing, one per record
  std::uint64_t blob_bytes = 0;
  std::vector<std::string> vocab_words;
};

inline constexpr char kDatasetVersion[] = "TMR1";

/// The caption vocabulary: two synonyms per attribute value plus fillers,
/// padded to cfg.vocab entries. Token sets of distinct attribute values are
/// disjoint by construction.
std::vector<std::string> build_vocab(const DataConfig& cfg);

/// First/last+1 token id for the synonyms of one attribute value.
std::pair<std::uint32_t, std::uint32_t> synonym_range(const DataConfig& cfg,
                                                      const std::string& attribute,
                                                      std::uint32_t value);

/// Deterministically generates both splits in memory. Same (cfg, seed) gives
/// identical records.
struct GeneratedData {
  std::vector<ShapeRecord> train;
  std::vector<ShapeRecord> test;
};
GeneratedData generate_records(const DataConfig& cfg);

/// Writes `<dir>/<split>.manifest.json` + `<dir>/<split>.blob` for both
/// splits. Refuses to overwrite unless `force`. Returns the two manifest
/// paths (train, test).
std::pair<std::string, std::string> write_dataset(const GeneratedData& data,
                                                  const DataConfig& cfg, const std::string& dir,
                                                  bool force = false);

/// Read-only handle over one split. The blob is loaded into memory at open
/// and records are parsed lazily per access; concurrent readers are safe.
class Dataset {
 public:
  /// Opens and validates a manifest+blob pair. Verifies the version tag,
  /// offset monotonicity and bounds, the blob size, and fully parses a 1%
  /// sample of records (at least one, always including the last).
  static Dataset open(const std::string& manifest_path);

  const DatasetManifest& manifest() const { return manifest_; }
  std::size_t size() const { return manifest_.offsets.size(); }

  /// Parses record i from the blob. All reads are bounds-checked against the
  /// record's manifest extent.
  ShapeRecord record(std::size_t i) const;

  /// Eagerly parses every record.
  std::vector<ShapeRecord> load_all() const;

 private:
  DatasetManifest manifest_;
  std::vector<std::uint8_t> blob_;
};

/// One training batch: per-shape record indices plus the caption sampled for
/// each (fresh draw per epoch).
struct BatchPlan {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> items;  // (record index, caption index)
};

/// Epoch-seeded shuffle into batches of exactly `batch_size`; the final short
/// batch is dropped. batch_size must be >= 2 (the contrastive loss needs a
/// negative) and <= record count.
std::vector<BatchPlan> make_batches(std::size_t record_count, std::size_t captions_per_shape,
                                    std::size_t batch_size, std::uint64_t epoch_seed);

/// Converts a record's raw buffers to tensors of the active precision.
template <class T>
Tensor<T> to_tensor(const std::vector<float>& data, std::size_t rows, std::size_t cols) {
  if (data.size() != rows * cols) {
    throw ShapeError("to_tensor: buffer of " + std::to_string(data.size()) +
                     " values vs shape " + shape_str(rows, cols));
  }
  Tensor<T> t(rows, cols);
  for (std::size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T>(data[i]);
  return t;
}

}  // namespace tmr
