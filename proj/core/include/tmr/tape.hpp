#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmr/errors.hpp"
#include "tmr/tensor.hpp"

namespace tmr {

enum class Axis { Rows, Cols };

enum class OpKind : std::uint8_t {
  Input,
  Param,
  Matmul,
  Transpose,
  Softmax,
  ConcatCols,
  ConcatRows,
  SliceCols,
  Add,
  Sub,
  Mul,
  Div,
  Relu,
  Exp,
  Log,
  Scale,
  MaxRows,
  MeanRows,
  SumAll,
  L2Distance,
  CosineSimilarity,
  CosineSimMatrix,
};

/// Reverse-mode autodiff tape over dense 2-D tensors.
///
/// Nodes are appended in topological order and values are computed eagerly at
/// construction; backward() walks the list exactly once in reverse. A tape is
/// built fresh for every forward pass and is confined to one thread.
///
/// Binary arithmetic (add/sub/mul/div) accepts equal shapes or a 1x1 operand
/// on either side, which broadcasts against the other shape; no other
/// broadcasting exists.
template <class T>
class Tape {
 public:
  using Id = std::uint32_t;

  static constexpr T kNormFloor = T(1e-12);

  /// Constant leaf; receives no gradient.
  Id input(Tensor<T> value);

  /// Leaf backed by external storage (a model parameter). Gradients
  /// accumulate into p.grad when p.requires_grad is set.
  Id param(Tensor<T>& p);

  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id softmax(Id a, Axis axis);
  Id concat_cols(std::span<const Id> parts);
  Id concat_rows(std::span<const Id> parts);
  Id concat_cols(std::initializer_list<Id> parts) { return concat_cols(std::span<const Id>(parts.begin(), parts.size())); }
  Id concat_rows(std::initializer_list<Id> parts) { return concat_rows(std::span<const Id>(parts.begin(), parts.size())); }
  /// Columns [begin, end) of a.
  Id slice_cols(Id a, std::size_t begin, std::size_t end);

  Id add(Id a, Id b) { return binary(OpKind::Add, a, b); }
  Id sub(Id a, Id b) { return binary(OpKind::Sub, a, b); }
  Id mul(Id a, Id b) { return binary(OpKind::Mul, a, b); }
  Id div(Id a, Id b) { return binary(OpKind::Div, a, b); }

  Id relu(Id a) { return unary(OpKind::Relu, a); }
  Id exp(Id a) { return unary(OpKind::Exp, a); }
  Id log(Id a) { return unary(OpKind::Log, a); }
  /// Multiplication by a compile-time constant (not a tape node).
  Id scale(Id a, T factor);

  /// Per-column maximum -> 1 x c. Gradient routes to the lowest row index
  /// among tied maxima.
  Id max_rows(Id a);
  /// Per-column mean -> 1 x c.
  Id mean_rows(Id a);
  /// Sum of all entries -> 1 x 1.
  Id sum_all(Id a);

  /// Euclidean norm of (a - b) for two 1 x d tensors -> 1 x 1.
  /// Gradient is (a - b) / dist, defined as zero when dist == 0.
  Id l2_distance(Id a, Id b);

  /// Cosine similarity of two 1 x d tensors -> 1 x 1 in [-1, 1]; norms are
  /// floored at kNormFloor so a zero vector never divides by zero.
  Id cosine_similarity(Id a, Id b);

  /// Pairwise cosine similarities of the rows of a (n x d) and b (m x d)
  /// -> n x m. Same norm floor as cosine_similarity.
  Id cosine_sim_matrix(Id a, Id b);

  const Tensor<T>& value(Id id) const { return node_value(nodes_[id]); }

  /// Gradient buffer of a node after backward(); empty if untouched.
  const std::vector<T>& grad_of(Id id) const { return node_value(nodes_[id]).grad; }

  /// Reverse accumulation from a scalar loss node. Seeds d(loss)/d(loss)=1;
  /// gradients add up across fan-out and accumulate into the grad buffers of
  /// all reachable requires_grad leaves.
  void backward(Id loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind op;
    std::vector<Id> in;
    Tensor<T> out;               // unused for Param nodes
    Tensor<T>* external = nullptr;  // Param storage
    Axis axis = Axis::Rows;
    T scalar = T(0);
    std::size_t begin = 0, end = 0;       // SliceCols range
    std::vector<std::uint32_t> argrows;   // MaxRows winners per column
    std::vector<T> cache;                 // op-specific forward values
  };

  std::vector<Node> nodes_;

  Tensor<T>& node_value(Node& n) { return n.external ? *n.external : n.out; }
  const Tensor<T>& node_value(const Node& n) const { return n.external ? *n.external : n.out; }

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  const Tensor<T>& val(Id id) const { return node_value(nodes_[id]); }

  Id unary(OpKind op, Id a);
  Id binary(OpKind op, Id a, Id b);

  void backprop_node(Node& n);
  void add_grad(Id target, const std::vector<T>& g);
  std::vector<T>* grad_buffer(Id target);
};

// ---------------------------------------------------------------------------
// Forward construction
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::Id Tape<T>::input(Tensor<T> value) {
  Node n;
  n.op = OpKind::Input;
  n.out = std::move(value);
  n.out.requires_grad = false;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::param(Tensor<T>& p) {
  Node n;
  n.op = OpKind::Param;
  n.external = &p;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::matmul(Id a, Id b) {
  const Tensor<T>& A = val(a);
  const Tensor<T>& B = val(b);
  if (A.cols != B.rows) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(A) + " * " + shape_str(B));
  }
  Node n;
  n.op = OpKind::Matmul;
  n.in = {a, b};
  n.out = Tensor<T>::zeros(A.rows, B.cols);
  matmul_nn_acc(A.data.data(), B.data.data(), n.out.data.data(), A.rows, A.cols, B.cols);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::transpose(Id a) {
  const Tensor<T>& A = val(a);
  Node n;
  n.op = OpKind::Transpose;
  n.in = {a};
  n.out = Tensor<T>::zeros(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) n.out.at(j, i) = A.at(i, j);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::softmax(Id a, Axis axis) {
  const Tensor<T>& A = val(a);
  Node n;
  n.op = OpKind::Softmax;
  n.in = {a};
  n.axis = axis;
  n.out = Tensor<T>::zeros(A.rows, A.cols);
  // Max-subtraction per slice keeps exp() in range for any finite input.
  if (axis == Axis::Rows) {
    for (std::size_t i = 0; i < A.rows; ++i) {
      T m = A.at(i, 0);
      for (std::size_t j = 1; j < A.cols; ++j) m = std::max(m, A.at(i, j));
      T sum = T(0);
      for (std::size_t j = 0; j < A.cols; ++j) {
        T e = std::exp(A.at(i, j) - m);
        n.out.at(i, j) = e;
        sum += e;
      }
      for (std::size_t j = 0; j < A.cols; ++j) n.out.at(i, j) /= sum;
    }
  } else {
    for (std::size_t j = 0; j < A.cols; ++j) {
      T m = A.at(0, j);
      for (std::size_t i = 1; i < A.rows; ++i) m = std::max(m, A.at(i, j));
      T sum = T(0);
      for (std::size_t i = 0; i < A.rows; ++i) {
        T e = std::exp(A.at(i, j) - m);
        n.out.at(i, j) = e;
        sum += e;
      }
      for (std::size_t i = 0; i < A.rows; ++i) n.out.at(i, j) /= sum;
    }
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::size_t rows = val(parts[0]).rows;
  std::size_t total = 0;
  for (Id p : parts) {
    const Tensor<T>& t = val(p);
    if (t.rows != rows) {
      throw ShapeError("concat_cols: row counts differ, " + shape_str(val(parts[0])) + " vs " +
                       shape_str(t));
    }
    total += t.cols;
  }
  Node n;
  n.op = OpKind::ConcatCols;
  n.in.assign(parts.begin(), parts.end());
  n.out = Tensor<T>::zeros(rows, total);
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor<T>& t = val(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < t.cols; ++j) n.out.at(i, off + j) = t.at(i, j);
    off += t.cols;
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  std::size_t cols = val(parts[0]).cols;
  std::size_t total = 0;
  for (Id p : parts) {
    const Tensor<T>& t = val(p);
    if (t.cols != cols) {
      throw ShapeError("concat_rows: column counts differ, " + shape_str(val(parts[0])) +
                       " vs " + shape_str(t));
    }
    total += t.rows;
  }
  Node n;
  n.op = OpKind::ConcatRows;
  n.in.assign(parts.begin(), parts.end());
  n.out = Tensor<T>::zeros(total, cols);
  std::size_t off = 0;
  for (Id p : parts) {
    const Tensor<T>& t = val(p);
    for (std::size_t i = 0; i < t.rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) n.out.at(off + i, j) = t.at(i, j);
    off += t.rows;
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::slice_cols(Id a, std::size_t begin, std::size_t end) {
  const Tensor<T>& A = val(a);
  if (begin >= end || end > A.cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + shape_str(A));
  }
  Node n;
  n.op = OpKind::SliceCols;
  n.in = {a};
  n.begin = begin;
  n.end = end;
  n.out = Tensor<T>::zeros(A.rows, end - begin);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = begin; j < end; ++j) n.out.at(i, j - begin) = A.at(i, j);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::unary(OpKind op, Id a) {
  const Tensor<T>& A = val(a);
  Node n;
  n.op = op;
  n.in = {a};
  n.out = Tensor<T>::zeros(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) {
    T x = A.data[i];
    switch (op) {
      case OpKind::Relu: n.out.data[i] = x > T(0) ? x : T(0); break;
      case OpKind::Exp: n.out.data[i] = std::exp(x); break;
      case OpKind::Log: n.out.data[i] = std::log(x); break;
      default: break;
    }
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::binary(OpKind op, Id a, Id b) {
  const Tensor<T>& A = val(a);
  const Tensor<T>& B = val(b);
  const bool a_scalar = A.is_scalar();
  const bool b_scalar = B.is_scalar();
  if (!A.same_shape(B) && !a_scalar && !b_scalar) {
    throw ShapeError("elementwise: shapes differ, " + shape_str(A) + " vs " + shape_str(B));
  }
  Node n;
  n.op = op;
  n.in = {a, b};
  const Tensor<T>& big = a_scalar ? B : A;
  n.out = Tensor<T>::zeros(big.rows, big.cols);
  for (std::size_t i = 0; i < big.size(); ++i) {
    T x = a_scalar ? A.data[0] : A.data[i];
    T y = b_scalar ? B.data[0] : B.data[i];
    switch (op) {
      case OpKind::Add: n.out.data[i] = x + y; break;
      case OpKind::Sub: n.out.data[i] = x - y; break;
      case OpKind::Mul: n.out.data[i] = x * y; break;
      case OpKind::Div: n.out.data[i] = x / y; break;
      default: break;
    }
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::scale(Id a, T factor) {
  const Tensor<T>& A = val(a);
  Node n;
  n.op = OpKind::Scale;
  n.in = {a};
  n.scalar = factor;
  n.out = Tensor<T>::zeros(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) n.out.data[i] = A.data[i] * factor;
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::max_rows(Id a) {
  const Tensor<T>& A = val(a);
  if (A.rows == 0) throw ShapeError("max_rows: empty tensor");
  Node n;
  n.op = OpKind::MaxRows;
  n.in = {a};
  n.out = Tensor<T>::zeros(1, A.cols);
  n.argrows.resize(A.cols);
  for (std::size_t j = 0; j < A.cols; ++j) {
    T best = A.at(0, j);
    std::uint32_t arg = 0;
    for (std::size_t i = 1; i < A.rows; ++i) {
      if (A.at(i, j) > best) {  // strict: ties keep the lowest row index
        best = A.at(i, j);
        arg = static_cast<std::uint32_t>(i);
      }
    }
    n.out.at(0, j) = best;
    n.argrows[j] = arg;
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::mean_rows(Id a) {
  const Tensor<T>& A = val(a);
  if (A.rows == 0) throw ShapeError("mean_rows: empty tensor");
  Node n;
  n.op = OpKind::MeanRows;
  n.in = {a};
  n.out = Tensor<T>::zeros(1, A.cols);
  for (std::size_t j = 0; j < A.cols; ++j) {
    T sum = T(0);
    for (std::size_t i = 0; i < A.rows; ++i) sum += A.at(i, j);
    n.out.at(0, j) = sum / static_cast<T>(A.rows);
  }
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::sum_all(Id a) {
  const Tensor<T>& A = val(a);
  if (A.size() == 0) throw ShapeError("sum_all: empty tensor");
  Node n;
  n.op = OpKind::SumAll;
  n.in = {a};
  T sum = T(0);
  for (T v : A.data) sum += v;
  n.out = Tensor<T>::scalar(sum);
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::l2_distance(Id a, Id b) {
  const Tensor<T>& A = val(a);
  const Tensor<T>& B = val(b);
  if (!A.same_shape(B)) {
    throw ShapeError("l2_distance: shapes differ, " + shape_str(A) + " vs " + shape_str(B));
  }
  Node n;
  n.op = OpKind::L2Distance;
  n.in = {a, b};
  T sq = T(0);
  for (std::size_t i = 0; i < A.size(); ++i) {
    T d = A.data[i] - B.data[i];
    sq += d * d;
  }
  n.out = Tensor<T>::scalar(std::sqrt(sq));
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::cosine_similarity(Id a, Id b) {
  const Tensor<T>& A = val(a);
  const Tensor<T>& B = val(b);
  if (!A.same_shape(B)) {
    throw ShapeError("cosine_similarity: shapes differ, " + shape_str(A) + " vs " + shape_str(B));
  }
  Node n;
  n.op = OpKind::CosineSimilarity;
  n.in = {a, b};
  T dot = T(0), na = T(0), nb = T(0);
  for (std::size_t i = 0; i < A.size(); ++i) {
    dot += A.data[i] * B.data[i];
    na += A.data[i] * A.data[i];
    nb += B.data[i] * B.data[i];
  }
  na = std::max(std::sqrt(na), kNormFloor);
  nb = std::max(std::sqrt(nb), kNormFloor);
  n.cache = {na, nb};
  n.out = Tensor<T>::scalar(dot / (na * nb));
  return push(std::move(n));
}

template <class T>
typename Tape<T>::Id Tape<T>::cosine_sim_matrix(Id a, Id b) {
  const Tensor<T>& A = val(a);
  const Tensor<T>& B = val(b);
  if (A.cols != B.cols) {
    throw ShapeError("cosine_sim_matrix: widths differ, " + shape_str(A) + " vs " + shape_str(B));
  }
  Node n;
  n.op = OpKind::CosineSimMatrix;
  n.in = {a, b};
  n.out = Tensor<T>::zeros(A.rows, B.rows);
  n.cache.resize(A.rows + B.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < A.cols; ++j) s += A.at(i, j) * A.at(i, j);
    n.cache[i] = std::max(std::sqrt(s), kNormFloor);
  }
  for (std::size_t i = 0; i < B.rows; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < B.cols; ++j) s += B.at(i, j) * B.at(i, j);
    n.cache[A.rows + i] = std::max(std::sqrt(s), kNormFloor);
  }
  matmul_nt_acc(A.data.data(), B.data.data(), n.out.data.data(), A.rows, A.cols, B.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < B.rows; ++j) n.out.at(i, j) /= n.cache[i] * n.cache[A.rows + j];
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

template <class T>
std::vector<T>* Tape<T>::grad_buffer(Id target) {
  Node& tn = nodes_[target];
  if (tn.op == OpKind::Input) return nullptr;
  if (tn.op == OpKind::Param) {
    if (!tn.external->requires_grad) return nullptr;
    tn.external->ensure_grad();
    return &tn.external->grad;
  }
  tn.out.ensure_grad();
  return &tn.out.grad;
}

template <class T>
void Tape<T>::add_grad(Id target, const std::vector<T>& g) {
  std::vector<T>* buf = grad_buffer(target);
  if (!buf) return;
  for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
}

template <class T>
void Tape<T>::backward(Id loss) {
  const Tensor<T>& L = val(loss);
  if (!L.is_scalar()) {
    throw ShapeError("backward: loss must be 1x1, got " + shape_str(L));
  }
  if (std::vector<T>* buf = grad_buffer(loss)) (*buf)[0] += T(1);
  else return;  // loss is a constant; nothing to do
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    backprop_node(nodes_[k]);
  }
}

template <class T>
void Tape<T>::backprop_node(Node& n) {
  if (n.op == OpKind::Input || n.op == OpKind::Param) return;
  if (n.out.grad.empty()) return;  // no downstream contribution
  const std::vector<T>& dY = n.out.grad;
  const Tensor<T>& Y = n.out;

  switch (n.op) {
    case OpKind::Matmul: {
      const Tensor<T>& A = val(n.in[0]);
      const Tensor<T>& B = val(n.in[1]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        matmul_nt_acc(dY.data(), B.data.data(), da->data(), A.rows, B.cols, A.cols);
      }
      if (std::vector<T>* db = grad_buffer(n.in[1])) {
        matmul_tn_acc(A.data.data(), dY.data(), db->data(), A.rows, A.cols, B.cols);
      }
      break;
    }
    case OpKind::Transpose: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < Y.rows; ++i)
          for (std::size_t j = 0; j < Y.cols; ++j) (*da)[j * A.cols + i] += dY[i * Y.cols + j];
      }
      break;
    }
    case OpKind::Softmax: {
      std::vector<T>* da = grad_buffer(n.in[0]);
      if (!da) break;
      // dX = y .* (dY - sum(dY .* y) per slice)
      if (n.axis == Axis::Rows) {
        for (std::size_t i = 0; i < Y.rows; ++i) {
          T dot = T(0);
          for (std::size_t j = 0; j < Y.cols; ++j) dot += dY[i * Y.cols + j] * Y.at(i, j);
          for (std::size_t j = 0; j < Y.cols; ++j)
            (*da)[i * Y.cols + j] += Y.at(i, j) * (dY[i * Y.cols + j] - dot);
        }
      } else {
        for (std::size_t j = 0; j < Y.cols; ++j) {
          T dot = T(0);
          for (std::size_t i = 0; i < Y.rows; ++i) dot += dY[i * Y.cols + j] * Y.at(i, j);
          for (std::size_t i = 0; i < Y.rows; ++i)
            (*da)[i * Y.cols + j] += Y.at(i, j) * (dY[i * Y.cols + j] - dot);
        }
      }
      break;
    }
    case OpKind::ConcatCols: {
      std::size_t off = 0;
      for (Id p : n.in) {
        const Tensor<T>& t = val(p);
        if (std::vector<T>* dp = grad_buffer(p)) {
          for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t j = 0; j < t.cols; ++j)
              (*dp)[i * t.cols + j] += dY[i * Y.cols + off + j];
        }
        off += t.cols;
      }
      break;
    }
    case OpKind::ConcatRows: {
      std::size_t off = 0;
      for (Id p : n.in) {
        const Tensor<T>& t = val(p);
        if (std::vector<T>* dp = grad_buffer(p)) {
          for (std::size_t i = 0; i < t.rows; ++i)
            for (std::size_t j = 0; j < t.cols; ++j)
              (*dp)[i * t.cols + j] += dY[(off + i) * Y.cols + j];
        }
        off += t.rows;
      }
      break;
    }
    case OpKind::SliceCols: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < Y.rows; ++i)
          for (std::size_t j = 0; j < Y.cols; ++j)
            (*da)[i * A.cols + n.begin + j] += dY[i * Y.cols + j];
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
      const Tensor<T>& A = val(n.in[0]);
      const Tensor<T>& B = val(n.in[1]);
      const bool a_scalar = A.is_scalar() && !Y.is_scalar();
      const bool b_scalar = B.is_scalar() && !Y.is_scalar();
      std::vector<T>* da = grad_buffer(n.in[0]);
      std::vector<T>* db = grad_buffer(n.in[1]);
      for (std::size_t i = 0; i < Y.size(); ++i) {
        T x = a_scalar ? A.data[0] : A.data[i];
        T y = b_scalar ? B.data[0] : B.data[i];
        T gx = T(0), gy = T(0);
        switch (n.op) {
          case OpKind::Add: gx = dY[i]; gy = dY[i]; break;
          case OpKind::Sub: gx = dY[i]; gy = -dY[i]; break;
          case OpKind::Mul: gx = dY[i] * y; gy = dY[i] * x; break;
          case OpKind::Div: gx = dY[i] / y; gy = -dY[i] * x / (y * y); break;
          default: break;
        }
        if (da) (*da)[a_scalar ? 0 : i] += gx;
        if (db) (*db)[b_scalar ? 0 : i] += gy;
      }
      break;
    }
    case OpKind::Relu: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        // relu'(0) = 0
        for (std::size_t i = 0; i < A.size(); ++i)
          (*da)[i] += A.data[i] > T(0) ? dY[i] : T(0);
      }
      break;
    }
    case OpKind::Exp: {
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < Y.size(); ++i) (*da)[i] += dY[i] * Y.data[i];
      }
      break;
    }
    case OpKind::Log: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < A.size(); ++i) (*da)[i] += dY[i] / A.data[i];
      }
      break;
    }
    case OpKind::Scale: {
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < Y.size(); ++i) (*da)[i] += dY[i] * n.scalar;
      }
      break;
    }
    case OpKind::MaxRows: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t j = 0; j < A.cols; ++j) (*da)[n.argrows[j] * A.cols + j] += dY[j];
      }
      break;
    }
    case OpKind::MeanRows: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        T inv = T(1) / static_cast<T>(A.rows);
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) (*da)[i * A.cols + j] += dY[j] * inv;
      }
      break;
    }
    case OpKind::SumAll: {
      const Tensor<T>& A = val(n.in[0]);
      if (std::vector<T>* da = grad_buffer(n.in[0])) {
        for (std::size_t i = 0; i < A.size(); ++i) (*da)[i] += dY[0];
      }
      break;
    }
    case OpKind::L2Distance: {
      const Tensor<T>& A = val(n.in[0]);
      const Tensor<T>& B = val(n.in[1]);
      T dist = Y.data[0];
      if (dist == T(0)) break;  // subgradient 0 at the cusp
      std::vector<T>* da = grad_buffer(n.in[0]);
      std::vector<T>* db = grad_buffer(n.in[1]);
      for (std::size_t i = 0; i < A.size(); ++i) {
        T g = dY[0] * (A.data[i] - B.data[i]) / dist;
        if (da) (*da)[i] += g;
        if (db) (*db)[i] -= g;
      }
      break;
    }
    case OpKind::CosineSimilarity: {
      const Tensor<T>& A = val(n.in[0]);
      const Tensor<T>& B = val(n.in[1]);
      T na = n.cache[0], nb = n.cache[1];
      T s = Y.data[0];
      std::vector<T>* da = grad_buffer(n.in[0]);
      std::vector<T>* db = grad_buffer(n.in[1]);
      // When a norm sits on the floor it is treated as a constant.
      T ra = T(0), rb = T(0);
      {
        T sq = T(0);
        for (T v : A.data) sq += v * v;
        if (std::sqrt(sq) > kNormFloor) ra = T(1);
      }
      {
        T sq = T(0);
        for (T v : B.data) sq += v * v;
        if (std::sqrt(sq) > kNormFloor) rb = T(1);
      }
      for (std::size_t i = 0; i < A.size(); ++i) {
        if (da) (*da)[i] += dY[0] * (B.data[i] / (na * nb) - ra * s * A.data[i] / (na * na));
        if (db) (*db)[i] += dY[0] * (A.data[i] / (na * nb) - rb * s * B.data[i] / (nb * nb));
      }
      break;
    }
    case OpKind::CosineSimMatrix: {
      const Tensor<T>& A = val(n.in[0]);
      const Tensor<T>& B = val(n.in[1]);
      std::vector<T>* da = grad_buffer(n.in[0]);
      std::vector<T>* db = grad_buffer(n.in[1]);
      const std::size_t d = A.cols;
      for (std::size_t i = 0; i < A.rows; ++i) {
        T nx = n.cache[i];
        for (std::size_t j = 0; j < B.rows; ++j) {
          T g = dY[i * B.rows + j];
          if (g == T(0)) continue;
          T ny = n.cache[A.rows + j];
          T s = Y.at(i, j);
          for (std::size_t k = 0; k < d; ++k) {
            if (da) (*da)[i * d + k] += g * (B.at(j, k) / (nx * ny) - s * A.at(i, k) / (nx * nx));
            if (db) (*db)[j * d + k] += g * (A.at(i, k) / (nx * ny) - s * B.at(j, k) / (ny * ny));
          }
        }
      }
      break;
    }
    default:
      break;
  }
}

}  // namespace tmr
