#pragma once

// Parameterized building blocks shared by the encoder, decoder and language
// model. Layers own pointers into a ParameterStore; the store outlives them.

#include <string>
#include <vector>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/rng.hpp"

namespace attnhtr::nn {

using ad::Matrix;
using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
// Glorot-uniform for a (fan_out x fan_in) weight.
Matrix glorot(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
         bool with_bias = true);

  Var forward(Tape& tape, const Var& x) const;

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  int in_ = 0;
  int out_ = 0;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

// Gated recurrent unit, gate order (reset, update, candidate):
//   r = sigmoid(W_r x + b_r + U_r h + c_r)
//   z = sigmoid(W_z x + b_z + U_z h + c_z)
//   n = tanh(W_n x + b_n + r * (U_n h + c_n))
//   h' = (1 - z) * n + z * h
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  Var step(Tape& tape, const Var& x, const Var& h) const;
  // W_ih x + b_ih for a block of inputs (any number of rows); lets a
  // sequence pay for one matrix product instead of one per position.
  Var project_input(Tape& tape, const Var& x) const;
  // step() with the input projection already applied.
  Var step_projected(Tape& tape, const Var& input_projection, const Var& h) const;

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  Parameter& w_ih() const { return *w_ih_; }
  Parameter& w_hh() const { return *w_hh_; }
  Parameter& b_ih() const { return *b_ih_; }
  Parameter& b_hh() const { return *b_hh_; }

 private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  Parameter* w_ih_ = nullptr;
  Parameter* w_hh_ = nullptr;
  Parameter* b_ih_ = nullptr;
  Parameter* b_hh_ = nullptr;
};

// Per-layer hidden states, bottom layer first. Each entry is (batch x hidden).
struct RecurrentState {
  std::vector<Var> layers;

  const Var& top() const { return layers.back(); }
};

class GruStack {
 public:
  GruStack() = default;
  GruStack(ParameterStore& store, const std::string& name, int input_dim, int hidden_dim, int layers,
           Rng& rng);

  RecurrentState zero_state(Tape& tape, Eigen::Index batch) const;
  // Dropout (training only) is applied to the output of every layer that
  // feeds another layer; the last layer's output is left untouched.
  RecurrentState step(Tape& tape, const Var& x, const RecurrentState& prev, double dropout,
                      bool training, Rng* rng) const;

  int layers() const { return static_cast<int>(cells_.size()); }
  int hidden_dim() const { return hidden_dim_; }
  int input_dim() const { return cells_.empty() ? 0 : cells_.front().input_dim(); }
  const GruCell& cell(int i) const { return cells_[static_cast<std::size_t>(i)]; }

 private:
  int hidden_dim_ = 0;
  std::vector<GruCell> cells_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, int channels);

  Var forward(Tape& tape, const Var& x, int spatial, bool training) const;
  // Shared affine parameters, separate running statistics.
  Var forward(Tape& tape, const Var& x, int spatial, bool training, Parameter& running_mean,
              Parameter& running_var, std::span<const std::uint8_t> active = {}) const;

  int channels() const { return channels_; }
  Parameter& running_mean() const { return *running_mean_; }
  Parameter& running_var() const { return *running_var_; }

 private:
  int channels_ = 0;
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  Parameter* running_mean_ = nullptr;
  Parameter* running_var_ = nullptr;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, int count, int dim, Rng& rng);

  Var forward(Tape& tape, std::span<const int> indices) const;

  int count() const { return count_; }
  int dim() const { return dim_; }
  Parameter& table() const { return *table_; }

 private:
  int count_ = 0;
  int dim_ = 0;
  Parameter* table_ = nullptr;
};

}  // namespace attnhtr::nn
