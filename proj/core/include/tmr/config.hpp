#pragma once

#include <cstdint>
#include <string>

#include "tmr/errors.hpp"

namespace tmr {

enum class Modalities { Both, Image, Point };
enum class ReconMode { Off, I2p, P2i, Both, Bi };
enum class FusionMode { Cqa, Mlp };
enum class LossMode { HnNce, InfoNce };
enum class HnMirror { Pool, Literal };
enum class Precision { F32, F64 };

std::string to_string(Modalities m);
std::string to_string(ReconMode m);
std::string to_string(FusionMode m);
std::string to_string(LossMode m);
std::string to_string(HnMirror m);
std::string to_string(Precision p);

Modalities modalities_from_string(const std::string& s);
ReconMode recon_from_string(const std::string& s);
FusionMode fusion_from_string(const std::string& s);
LossMode loss_mode_from_string(const std::string& s);
HnMirror hn_mirror_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

/// Structural dimensions of the encoder stack.
struct EncoderConfig {
  std::size_t n_points = 256;       // points per cloud (n_p)
  std::size_t point_dim = 6;        // xyzrgb
  std::size_t n_groups = 32;        // point feature count (N)
  std::size_t n_views = 6;          // view count (M)
  std::size_t view_dim = 32;        // view descriptor width (d_v)
  std::size_t dim = 64;             // shared embedding width (D)
  std::size_t hidden = 64;          // adapter / MLP hidden width
  std::size_t vocab = 64;
  std::size_t max_caption_len = 12;
};

/// Pipeline composition switches (the ablation axes).
struct PipelineFlags {
  Modalities modalities = Modalities::Both;
  ReconMode recon = ReconMode::Both;
  FusionMode fusion = FusionMode::Cqa;
  LossMode loss_mode = LossMode::HnNce;
  HnMirror mirror = HnMirror::Pool;
  double beta = 0.5;
  double tau_init = 0.07;
  double tau_floor = 1e-3;
};

/// Rejects invalid combinations before any compute happens.
void validate_flags(const EncoderConfig& enc, const PipelineFlags& flags);

}  // namespace tmr
