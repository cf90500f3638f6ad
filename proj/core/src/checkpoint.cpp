#include "tmr/checkpoint.hpp"

namespace tmr {

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::string(magic, 5) != kCheckpointVersion) {
    throw ConfigError("not a " + std::string(kCheckpointVersion) + " checkpoint: " + path);
  }
  CheckpointInfo info;
  info.version = kCheckpointVersion;
  int dtype = is.get();
  if (dtype != 0 && dtype != 1) throw ConfigError("checkpoint " + path + ": unknown dtype");
  info.precision = dtype == 0 ? Precision::F32 : Precision::F64;
  info.step = binio::get_u64(is);
  info.config_json = binio::get_string(is);
  return info;
}

}  // namespace tmr
