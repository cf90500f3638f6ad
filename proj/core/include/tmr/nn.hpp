#pragma once

#include <cmath>
#include <string>

#include "tmr/params.hpp"
#include "tmr/rng.hpp"
#include "tmr/tape.hpp"

namespace tmr {

/// Registers W (in x out) with uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)),
/// and a zero bias (1 x out).
template <class T>
void create_dense(ParamSet<T>& params, const std::string& prefix, std::size_t in,
                  std::size_t out, Rng& rng, bool trainable = true) {
  Tensor<T>& w = params.create(prefix + ".w", in, out, trainable);
  T s = static_cast<T>(std::sqrt(6.0 / static_cast<double>(in + out)));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-s, s));
  params.create(prefix + ".b", 1, out, trainable);
}

/// One hidden layer with relu: in -> hidden -> out. Layer names are
/// <prefix>.l1 and <prefix>.l2.
template <class T>
void create_mlp(ParamSet<T>& params, const std::string& prefix, std::size_t in,
                std::size_t hidden, std::size_t out, Rng& rng, bool trainable = true) {
  create_dense(params, prefix + ".l1", in, hidden, rng, trainable);
  create_dense(params, prefix + ".l2", hidden, out, rng, trainable);
}

/// x*W + b with the bias broadcast across rows (ones-column trick keeps the
/// tape's op set minimal).
template <class T>
typename Tape<T>::Id affine(Tape<T>& tape, typename Tape<T>::Id x, ParamSet<T>& params,
                            const std::string& prefix) {
  auto w = tape.param(params.get(prefix + ".w"));
  auto b = tape.param(params.get(prefix + ".b"));
  auto xw = tape.matmul(x, w);
  std::size_t rows = tape.value(xw).rows;
  if (rows == 1) return tape.add(xw, b);
  auto ones = tape.input(Tensor<T>::ones(rows, 1));
  return tape.add(xw, tape.matmul(ones, b));
}

template <class T>
typename Tape<T>::Id apply_mlp(Tape<T>& tape, typename Tape<T>::Id x, ParamSet<T>& params,
                               const std::string& prefix) {
  auto h = tape.relu(affine(tape, x, params, prefix + ".l1"));
  return affine(tape, h, params, prefix + ".l2");
}

}  // namespace tmr
