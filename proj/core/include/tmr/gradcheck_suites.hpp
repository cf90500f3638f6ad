#pragma once

#include <cstdint>
#include <string>

#include "tmr/grad_check.hpp"

namespace tmr {

/// Finite-difference suites over fixed random instances, all in double.
/// `tensor_ops` drives every tape op through one composite graph; the module
/// scopes check the assembled fusion / loss / reconstruction paths with their
/// inputs registered as parameters; `full` differentiates the entire pipeline
/// objective on a 4-shape micro-batch against every trainable tensor.
GradCheckReport gradcheck_tensor_ops(double h, std::uint64_t seed);
GradCheckReport gradcheck_fusion(double h, std::uint64_t seed);
GradCheckReport gradcheck_loss(double h, std::uint64_t seed);
GradCheckReport gradcheck_recon(double h, std::uint64_t seed);
GradCheckReport gradcheck_full(double h, std::uint64_t seed);

/// Dispatch by scope name: tensor | fusion | loss | recon | full.
GradCheckReport gradcheck_scope(const std::string& scope, double h, std::uint64_t seed);

}  // namespace tmr
