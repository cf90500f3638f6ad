#pragma once

#include <fstream>
#include <string>

#include "tmr/binio.hpp"
#include "tmr/model.hpp"
#include "tmr/trainer.hpp"

namespace tmr {

inline constexpr char kCheckpointVersion[] = "TMRC1";

template <class T>
constexpr std::uint8_t dtype_code();
template <>
constexpr std::uint8_t dtype_code<float>() {
  return 0;
}
template <>
constexpr std::uint8_t dtype_code<double>() {
  return 1;
}

struct CheckpointInfo {
  std::string version;
  Precision precision = Precision::F32;
  std::uint64_t step = 0;
  std::string config_json;
};

/// Reads just the header (version, dtype, step, config echo).
CheckpointInfo read_checkpoint_info(const std::string& path);

namespace ckpt_detail {

template <class T>
void put_value(std::ostream& os, T v) {
  if constexpr (sizeof(T) == 4) binio::put_f32(os, static_cast<float>(v));
  else binio::put_f64(os, static_cast<double>(v));
}

template <class T>
T get_value(std::istream& is) {
  if constexpr (sizeof(T) == 4) return static_cast<T>(binio::get_f32(is));
  else return static_cast<T>(binio::get_f64(is));
}

}  // namespace ckpt_detail

/// Writes a complete training snapshot: the config echo, every named
/// parameter tensor in creation order, and the optimizer moments. Parameter
/// data is stored in the precision it was trained in, so a round trip
/// reproduces forward outputs bit-exactly within that mode.
template <class T>
void save_checkpoint(const std::string& path, const TrainConfig& cfg, std::size_t step,
                     const ParamSet<T>& params, const AdamState<T>& adam) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  os.write(kCheckpointVersion, 5);
  os.put(static_cast<char>(dtype_code<T>()));
  binio::put_u64(os, step);
  binio::put_string(os, train_config_to_json(cfg));
  binio::put_u32(os, static_cast<std::uint32_t>(params.count()));
  std::size_t idx = 0;
  for (const auto& name : params.names()) {
    const Tensor<T>& p = params.get(name);
    binio::put_string(os, name);
    os.put(p.requires_grad ? 1 : 0);
    binio::put_u64(os, p.rows);
    binio::put_u64(os, p.cols);
    for (T v : p.data) ckpt_detail::put_value<T>(os, v);
    for (T v : adam.m[idx].data) ckpt_detail::put_value<T>(os, v);
    for (T v : adam.v[idx].data) ckpt_detail::put_value<T>(os, v);
    ++idx;
  }
  if (!os) throw ConfigError("failed writing checkpoint " + path);
}

template <class T>
struct LoadedCheckpoint {
  TrainConfig cfg;
  std::size_t step = 0;
  ParamSet<T> params;
  AdamState<T> adam;
};

/// Loads a checkpoint of matching precision and verifies that the stored
/// parameter set is exactly the one the echoed config would create (names,
/// shapes, trainability, order).
template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::string(magic, 5) != kCheckpointVersion) {
    throw ConfigError("not a " + std::string(kCheckpointVersion) + " checkpoint: " + path);
  }
  int dtype = is.get();
  if (dtype != dtype_code<T>()) {
    throw ConfigError("checkpoint " + path + " stores " +
                      (dtype == 0 ? std::string("f32") : std::string("f64")) +
                      " parameters; requested precision does not match");
  }
  LoadedCheckpoint<T> out;
  out.step = binio::get_u64(is);
  out.cfg = train_config_from_json(binio::get_string(is));

  std::uint32_t count = binio::get_u32(is);
  out.adam.step = out.step;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = binio::get_string(is);
    bool trainable = is.get() == 1;
    std::uint64_t rows = binio::get_u64(is);
    std::uint64_t cols = binio::get_u64(is);
    Tensor<T>& p = out.params.create(name, rows, cols, trainable);
    for (auto& v : p.data) v = ckpt_detail::get_value<T>(is);
    Tensor<T> m(rows, cols), mv(rows, cols);
    for (auto& v : m.data) v = ckpt_detail::get_value<T>(is);
    for (auto& v : mv.data) v = ckpt_detail::get_value<T>(is);
    out.adam.m.push_back(std::move(m));
    out.adam.v.push_back(std::move(mv));
  }

  // The stored tensors must be exactly the model the config echo describes.
  ParamSet<T> expected = init_params<T>(out.cfg.enc, out.cfg.flags, out.cfg.seed);
  if (expected.names() != out.params.names()) {
    throw ConfigError("checkpoint " + path + " parameter set does not match its config echo");
  }
  for (const auto& name : expected.names()) {
    const Tensor<T>& a = expected.get(name);
    const Tensor<T>& b = out.params.get(name);
    if (a.rows != b.rows || a.cols != b.cols || a.requires_grad != b.requires_grad) {
      throw ConfigError("checkpoint " + path + ": tensor '" + name + "' shape mismatch");
    }
  }
  return out;
}

}  // namespace tmr
