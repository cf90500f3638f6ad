#include "tmr/config.hpp"

namespace tmr {

std::string to_string(Modalities m) {
  switch (m) {
    case Modalities::Both: return "both";
    case Modalities::Image: return "image";
    case Modalities::Point: return "point";
  }
  return "?";
}

std::string to_string(ReconMode m) {
  switch (m) {
    case ReconMode::Off: return "off";
    case ReconMode::I2p: return "i2p";
    case ReconMode::P2i: return "p2i";
    case ReconMode::Both: return "both";
    case ReconMode::Bi: return "bi";
  }
  return "?";
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Cqa: return "cqa";
    case FusionMode::Mlp: return "mlp";
  }
  return "?";
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::HnNce: return "hn_nce";
    case LossMode::InfoNce: return "info_nce";
  }
  return "?";
}

std::string to_string(HnMirror m) {
  switch (m) {
    case HnMirror::Pool: return "pool";
    case HnMirror::Literal: return "literal";
  }
  return "?";
}

std::string to_string(Precision p) {
  switch (p) {
    case Precision::F32: return "f32";
    case Precision::F64: return "f64";
  }
  return "?";
}

Modalities modalities_from_string(const std::string& s) {
  if (s == "both") return Modalities::Both;
  if (s == "image") return Modalities::Image;
  if (s == "point") return Modalities::Point;
  throw ConfigError("unknown modalities '" + s + "' (both|image|point)");
}

ReconMode recon_from_string(const std::string& s) {
  if (s == "off") return ReconMode::Off;
  if (s == "i2p") return ReconMode::I2p;
  if (s == "p2i") return ReconMode::P2i;
  if (s == "both") return ReconMode::Both;
  if (s == "bi") return ReconMode::Bi;
  throw ConfigError("unknown recon mode '" + s + "' (off|i2p|p2i|both|bi)");
}

FusionMode fusion_from_string(const std::string& s) {
  if (s == "cqa") return FusionMode::Cqa;
  if (s == "mlp") return FusionMode::Mlp;
  throw ConfigError("unknown fusion mode '" + s + "' (cqa|mlp)");
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "hn_nce") return LossMode::HnNce;
  if (s == "info_nce") return LossMode::InfoNce;
  throw ConfigError("unknown loss mode '" + s + "' (hn_nce|info_nce)");
}

HnMirror hn_mirror_from_string(const std::string& s) {
  if (s == "pool") return HnMirror::Pool;
  if (s == "literal") return HnMirror::Literal;
  throw ConfigError("unknown hn-mirror '" + s + "' (pool|literal)");
}

Precision precision_from_string(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw ConfigError("unknown precision '" + s + "' (f32|f64)");
}

void validate_flags(const EncoderConfig& enc, const PipelineFlags& flags) {
  if (enc.n_groups == 0 || enc.dim == 0 || enc.hidden == 0 || enc.n_views == 0 ||
      enc.view_dim == 0 || enc.vocab == 0) {
    throw ConfigError("encoder config: all dimensions must be positive");
  }
  if (enc.n_points % enc.n_groups != 0) {
    throw ConfigError("n_points (" + std::to_string(enc.n_points) +
                      ") not divisible by point feature count (" + std::to_string(enc.n_groups) +
                      ")");
  }
  if (flags.modalities != Modalities::Both && flags.recon != ReconMode::Off) {
    throw ConfigError("reconstruction '" + to_string(flags.recon) +
                      "' needs both modalities; got modalities=" + to_string(flags.modalities));
  }
  if (flags.beta < 0) throw ConfigError("beta must be >= 0");
  if (flags.tau_floor <= 0) throw ConfigError("tau floor must be > 0");
  if (flags.tau_init < flags.tau_floor) throw ConfigError("tau init below tau floor");
}

}  // namespace tmr
