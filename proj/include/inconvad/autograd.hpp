#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "inconvad/matrix.hpp"

// Tape-based reverse-mode differentiation over fp64 matrices.
//
// A Graph records every operation of one forward pass (one sample). Nodes are
// appended in creation order, so reverse creation order is a valid
// topological order for backward. Trainable tensors live outside the graph
// as Parameters and enter it as leaves; backward adds their gradients into a
// caller-owned GradStore so several graphs (threads) can accumulate
// independently and be reduced in a fixed order.
namespace inconvad::ag {

// Learning-rate group. Backbone covers encoders, Conformer, FiLM and
// embeddings; heads cover projections, pooling and prediction layers.
enum class ParamGroup { backbone, heads };

struct Parameter {
  std::string name;
  Matrix value;
  ParamGroup group = ParamGroup::heads;
  // Decoupled weight decay applies only to weight matrices.
  bool decay = true;
};

using ParamList = std::vector<Parameter*>;

class GradStore {
 public:
  Matrix& at(const Parameter* p);
  const Matrix* find(const Parameter* p) const;
  void clear() { grads_.clear(); }
  // this += other, for every parameter in `params` (fixed order).
  void accumulate(const GradStore& other, const ParamList& params);

 private:
  std::unordered_map<const Parameter*, Matrix> grads_;
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  explicit Graph(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix m);
  // A leaf whose gradient is kept on the node (finite-difference checks).
  Var input(Matrix m);
  Var param(const Parameter& p);

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates. Parameter
  // gradients are added into `grads`.
  void backward(Var out, GradStore& grads);
  void backward(Var out);

  // Gradient of the last backward pass with respect to v (zeros if none).
  Matrix grad(Var v) const;

  bool training() const { return training_; }
  std::mt19937_64& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

  // Op construction interface.
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;
  Var push(Matrix value, bool requires_grad, BackwardFn fn);
  const Matrix& value_of(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id]->requires_grad; }
  const Matrix& grad_of(std::uint32_t id) const { return nodes_[id]->grad; }
  // Returns a zero-initialized gradient buffer for accumulation.
  Matrix& grad_buffer(std::uint32_t id);

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<std::unique_ptr<Node>> nodes_;
  bool training_;
  std::mt19937_64 rng_;
};

// ---- elementwise / structural ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a (T x C) + b (1 x C), broadcast over rows.
Var add_row(Var a, Var b);
// a (T x C) * b (1 x C), broadcast over rows.
Var mul_row(Var a, Var b);
// a (T x C) * b (T x 1), broadcast over columns.
Var mul_col(Var a, Var b);
// Elementwise product with a constant matrix of the same shape.
Var mul_const(Var a, const Matrix& c);
// Adds a constant matrix of the same shape.
Var add_const(Var a, const Matrix& c);

Var matmul(Var a, Var b);     // A B
Var matmul_nt(Var a, Var b);  // A B^T
Var transpose(Var a);

Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var sum_all(Var a);
Var sum_rows(Var a);  // 1 x C column sums

// ---- nonlinearities ----
Var gelu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var swish(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
// max(a, lo); gradient is zero where the floor binds (a < lo).
Var clamp_min(Var a, double lo);
// min(max(a, lo), hi); zero gradient outside [lo, hi].
Var clamp(Var a, double lo, double hi);
// Gated linear unit over columns: first half * sigmoid(second half).
Var glu(Var a);

// ---- sequence ops ----
// Row-wise layer normalization with affine gain/bias (1 x C each).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Row-wise softmax restricted to columns with mask[c] == true.
Var masked_softmax_rows(Var scores, const std::vector<bool>& col_mask);
// Zero every row whose mask entry is false.
Var mask_rows(Var x, const std::vector<bool>& row_mask);
// Mean over rows with mask true -> 1 x C.
Var masked_mean_rows(Var x, const std::vector<bool>& row_mask);
// Depthwise 1-D convolution along rows, "same" zero padding.
// weight: K x C (K odd), bias: 1 x C.
Var depthwise_conv1d(Var x, Var weight, Var bias);
// Row gather from an embedding table.
Var embedding(Var table, const std::vector<std::size_t>& ids);
// Inverted dropout; identity when the graph is not training or rate == 0.
Var dropout(Var x, double rate);

}  // namespace inconvad::ag
