#pragma once

// Reverse-mode automatic differentiation over row-major Eigen matrices.
//
// A Tape records every operation of one forward pass. Values live on the
// tape; Var is a light handle (tape pointer + node id). Calling
// Tape::backward on a 1x1 loss walks the nodes in reverse creation order and
// accumulates gradients into the Parameters that were bound with
// Tape::param. Tapes are single-use and single-threaded.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "attnhtr/rng.hpp"

namespace attnhtr::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Non-trainable parameters are bound as constants (frozen weights, batch
  // norm running statistics).
  bool trainable = true;

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& create(const std::string& name, Matrix init, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  // Insertion order; stable across runs so checkpoints and optimizers agree.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  void set_trainable_prefix(const std::string& prefix, bool trainable);
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  // Op-author interface: records a node whose inputs are `inputs`. The
  // backward closure is dropped when no input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  const Matrix& value(int id) const { return nodes_[id].value; }

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(loss)/d(loss) = 1; loss must be 1x1.
  void backward(const Var& loss);

  // Gradient of an intermediate node after backward(); zero if none flowed.
  Matrix gradient(const Var& v) const;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

// ---- elementwise / structural ops ----------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
Var add_const(const Var& a, const Matrix& c);
Var mul_const(const Var& a, const Matrix& c);
// Multiplies row r of a by factors[r].
Var scale_rows(const Var& a, const Eigen::VectorXd& factors);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var matmul(const Var& a, const Var& b);
// x * W^T, the usual dense layer with W stored as (out x in).
Var linear(const Var& x, const Var& weight);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var sum(const Var& a);
Var softmax_rows(const Var& a);
// Row b of a becomes rows [b*n, (b+1)*n) of the result.
Var repeat_rows(const Var& a, Eigen::Index n);
// Rows {b*n + index} for every b: (B*n x D) -> (B x D).
Var select_position(const Var& a, Eigen::Index n, Eigen::Index index);
// Inverse of select_position over all positions: n vars of (B x D) -> (B*n x D).
Var stack_positions(const std::vector<Var>& positions);
// Row lookup; indices must be valid rows of table.
Var gather_rows(const Var& table, std::span<const int> indices);
// Inverted dropout with a fixed Bernoulli mask drawn from rng.
Var dropout(const Var& a, double p, Rng& rng);

// ---- sequence ops ---------------------------------------------------------

// weights (B x N), values (B*N x D) -> (B x D), row b = sum_i w[b,i] v[b*N+i].
Var weighted_sum(const Var& weights, const Var& values);
// Zero-padded "same" 1-D correlation of every row of weights (B x N) with
// each column of kernel (k x r), k odd: out[b*N+i, j] = sum_m K[m,j] w[b,i+m-(k-1)/2].
Var location_conv(const Var& weights, const Var& kernel);

// ---- image ops: rows are samples, columns are channel-major C*H*W ---------

struct MapShape {
  int channels = 1;
  int height = 1;
  int width = 1;
  int size() const { return channels * height * width; }
};

// "Same" convolution, odd square kernel, stride 1. weight is
// (Cout x Cin*k*k) with column index (c*k + ky)*k + kx; bias is 1 x Cout.
Var conv2d(const Var& x, const MapShape& in, const Var& weight, const Var& bias, int kernel);
// Non-overlapping max pooling; trailing rows/columns that do not fill a
// window are dropped.
Var max_pool2d(const Var& x, const MapShape& in, int pool_h, int pool_w);
// (B x C*H*W) -> (B*W x C*H): one row per image column, element c*H + h.
Var columns(const Var& x, const MapShape& in);

// Batch normalization over `channels` channels of `spatial` contiguous
// values each (spatial = 1 for flat features). Training mode normalizes with
// batch statistics over rows and spatial positions and updates the running
// estimates; eval mode uses the running estimates. A non-empty `active` (one
// flag per row) restricts the training statistics to the flagged rows; the
// others are normalized with those statistics but do not shape them.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, int channels, int spatial,
               Parameter& running_mean, Parameter& running_var, bool training,
               double momentum = 0.1, double eps = 1e-5, std::span<const std::uint8_t> active = {});

// ---- losses ---------------------------------------------------------------

// Sum over rows with targets[r] >= 0 of -sum_j q_j log softmax(logits_r)_j,
// q = (1-eps) on the target and eps/(V-1) elsewhere. Returns 1x1.
Var smoothed_cross_entropy(const Var& logits, std::span<const int> targets, double eps);

// Row-wise numerically stable softmax of a plain matrix.
Matrix softmax(const Matrix& logits);

}  // namespace attnhtr::ad
