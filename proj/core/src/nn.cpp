#include "attnhtr/nn.hpp"

#include <cmath>

#include "attnhtr/error.hpp"

namespace attnhtr::nn {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(fan_out, fan_in, bound, rng);
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
               bool with_bias)
    : in_(in), out_(out) {
  weight_ = &store.create(name + ".weight", glorot(out, in, rng));
  if (with_bias) bias_ = &store.create(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::forward(Tape& tape, const Var& x) const {
  Var y = ad::linear(x, tape.param(*weight_));
  if (bias_ != nullptr) y = ad::add_row(y, tape.param(*bias_));
  return y;
}

GruCell::GruCell(ParameterStore& store, const std::string& name, int input_dim, int hidden_dim,
                 Rng& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  w_ih_ = &store.create(name + ".w_ih", uniform_matrix(3 * hidden_dim, input_dim, bound, rng));
  w_hh_ = &store.create(name + ".w_hh", uniform_matrix(3 * hidden_dim, hidden_dim, bound, rng));
  b_ih_ = &store.create(name + ".b_ih", uniform_matrix(1, 3 * hidden_dim, bound, rng));
  b_hh_ = &store.create(name + ".b_hh", uniform_matrix(1, 3 * hidden_dim, bound, rng));
}

Var GruCell::step(Tape& tape, const Var& x, const Var& h) const {
  return step_projected(tape, project_input(tape, x), h);
}

Var GruCell::project_input(Tape& tape, const Var& x) const {
  require(x.cols() == input_dim_, ErrorCode::DimensionMismatch,
          "GRU input width " + std::to_string(x.cols()) + ", expected " + std::to_string(input_dim_));
  return ad::add_row(ad::linear(x, tape.param(*w_ih_)), tape.param(*b_ih_));
}

Var GruCell::step_projected(Tape& tape, const Var& gi, const Var& h) const {
  require(gi.cols() == 3 * hidden_dim_, ErrorCode::DimensionMismatch, "GRU projection width mismatch");
  require(h.cols() == hidden_dim_ && h.rows() == gi.rows(), ErrorCode::DimensionMismatch,
          "GRU state shape mismatch");
  const Eigen::Index s = hidden_dim_;
  Var gh = ad::add_row(ad::linear(h, tape.param(*w_hh_)), tape.param(*b_hh_));
  Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, s), ad::slice_cols(gh, 0, s)));
  Var z = ad::sigmoid(ad::add(ad::slice_cols(gi, s, s), ad::slice_cols(gh, s, s)));
  Var n = ad::tanh(ad::add(ad::slice_cols(gi, 2 * s, s), ad::mul(r, ad::slice_cols(gh, 2 * s, s))));
  return ad::add(n, ad::mul(z, ad::sub(h, n)));
}

GruStack::GruStack(ParameterStore& store, const std::string& name, int input_dim, int hidden_dim,
                   int layers, Rng& rng)
    : hidden_dim_(hidden_dim) {
  require(layers >= 1, ErrorCode::InvalidConfig, "recurrent stack needs at least one layer");
  for (int l = 0; l < layers; ++l) {
    cells_.emplace_back(store, name + "." + std::to_string(l), l == 0 ? input_dim : hidden_dim,
                        hidden_dim, rng);
  }
}

RecurrentState GruStack::zero_state(Tape& tape, Eigen::Index batch) const {
  RecurrentState state;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    state.layers.push_back(tape.constant(Matrix::Zero(batch, hidden_dim_)));
  }
  return state;
}

RecurrentState GruStack::step(Tape& tape, const Var& x, const RecurrentState& prev, double dropout,
                              bool training, Rng* rng) const {
  require(prev.layers.size() == cells_.size(), ErrorCode::DimensionMismatch,
          "recurrent state has wrong layer count");
  RecurrentState next;
  Var input = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    Var h = cells_[l].step(tape, input, prev.layers[l]);
    next.layers.push_back(h);
    input = h;
    if (training && dropout > 0.0 && rng != nullptr && l + 1 < cells_.size()) {
      input = ad::dropout(h, dropout, *rng);
    }
  }
  return next;
}

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, int channels)
    : channels_(channels) {
  gamma_ = &store.create(name + ".gamma", Matrix::Ones(1, channels));
  beta_ = &store.create(name + ".beta", Matrix::Zero(1, channels));
  running_mean_ = &store.create(name + ".running_mean", Matrix::Zero(1, channels), false);
  running_var_ = &store.create(name + ".running_var", Matrix::Ones(1, channels), false);
}

Var BatchNorm::forward(Tape& tape, const Var& x, int spatial, bool training) const {
  return forward(tape, x, spatial, training, *running_mean_, *running_var_);
}

Var BatchNorm::forward(Tape& tape, const Var& x, int spatial, bool training, Parameter& running_mean,
                       Parameter& running_var, std::span<const std::uint8_t> active) const {
  return ad::batch_norm(x, tape.param(*gamma_), tape.param(*beta_), channels_, spatial, running_mean,
                        running_var, training, 0.1, 1e-5, active);
}

Embedding::Embedding(ParameterStore& store, const std::string& name, int count, int dim, Rng& rng)
    : count_(count), dim_(dim) {
  table_ = &store.create(name + ".table", uniform_matrix(count, dim, 0.1, rng));
}

Var Embedding::forward(Tape& tape, std::span<const int> indices) const {
  return ad::gather_rows(tape.param(*table_), indices);
}

}  // namespace attnhtr::nn
