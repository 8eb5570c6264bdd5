#include "attnhtr/attention.hpp"

#include <cmath>

#include "attnhtr/error.hpp"
#include "attnhtr/nn.hpp"

namespace attnhtr {

Attention::Attention(ad::ParameterStore& store, const std::string& name, int feature_dim, int state_dim,
                     const AttentionConfig& config, Rng& rng)
    : config_(config), feature_dim_(feature_dim), state_dim_(state_dim) {
  if (config_.attn_dim <= 0) config_.attn_dim = state_dim;
  require(config_.kernel >= 1 && config_.kernel % 2 == 1, ErrorCode::InvalidConfig,
          "attention kernel length must be odd");
  require(config_.filters >= 1, ErrorCode::InvalidConfig, "attention filters must be >= 1");
  const int a = config_.attn_dim;
  w_ = &store.create(name + ".w", nn::glorot(1, a, rng));
  W_ = &store.create(name + ".W", nn::glorot(a, feature_dim, rng));
  V_ = &store.create(name + ".V", nn::glorot(a, state_dim, rng));
  b_ = &store.create(name + ".b", ad::Matrix::Zero(1, a));
  if (config_.kind == AttentionKind::Location) {
    U_ = &store.create(name + ".U", nn::glorot(a, config_.filters, rng));
    F_ = &store.create(name + ".F", nn::glorot(config_.kernel, config_.filters, rng));
  }
}

AttentionKeys Attention::keys(ad::Tape& tape, const ad::Var& features, int steps) const {
  require(features.cols() == feature_dim_, ErrorCode::DimensionMismatch,
          "attention expects features of width " + std::to_string(feature_dim_) + ", got " +
              std::to_string(features.cols()));
  require(steps >= 1 && features.rows() % steps == 0, ErrorCode::DimensionMismatch,
          "feature rows are not a multiple of the sequence length");
  return {ad::linear(features, tape.param(*W_)), features, steps};
}

ad::Var Attention::combine(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                           const ad::Var* location) const {
  require(state.cols() == state_dim_, ErrorCode::DimensionMismatch,
          "attention expects a state of width " + std::to_string(state_dim_) + ", got " +
              std::to_string(state.cols()));
  require(state.rows() * keys.steps == keys.projected.rows(), ErrorCode::DimensionMismatch,
          "state batch does not match the feature batch");
  ad::Var query = ad::add_row(ad::linear(state, tape.param(*V_)), tape.param(*b_));
  ad::Var pre = ad::add(keys.projected, ad::repeat_rows(query, keys.steps));
  if (location != nullptr) pre = ad::add(pre, ad::linear(*location, tape.param(*U_)));
  ad::Var energies = ad::linear(ad::tanh(pre), tape.param(*w_));
  return ad::reshape(energies, state.rows(), keys.steps);
}

ad::Var Attention::score_content(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state) const {
  return combine(tape, keys, state, nullptr);
}

ad::Var Attention::score_location(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                                  const ad::Var& previous_weights) const {
  require(F_ != nullptr, ErrorCode::InvalidConfig, "content attention has no location parameters");
  require(previous_weights.rows() == state.rows() && previous_weights.cols() == keys.steps,
          ErrorCode::DimensionMismatch, "previous attention mask has the wrong shape");
  ad::Var location = ad::location_conv(previous_weights, tape.param(*F_));
  return combine(tape, keys, state, &location);
}

ad::Var Attention::score(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                         const ad::Var& previous_weights) const {
  if (config_.kind == AttentionKind::Location) {
    return score_location(tape, keys, state, previous_weights);
  }
  return score_content(tape, keys, state);
}

AttentionStep attend(const ad::Var& energies, const ad::Matrix& mask, const ad::Var& values) {
  require(energies.rows() > 0 && values.rows() == energies.rows() * energies.cols(),
          ErrorCode::DimensionMismatch, "energies and values disagree on the sequence length");
  ad::Var masked = energies;
  if (mask.size() != 0) {
    require(mask.rows() == energies.rows() && mask.cols() == energies.cols(), ErrorCode::DimensionMismatch,
            "attention mask shape mismatch");
    masked = ad::add_const(energies, mask);
  }
  ad::Var weights = ad::softmax_rows(masked);
  return {weights, ad::weighted_sum(weights, values)};
}

ad::Matrix initial_weights(const FeatureBatch& features) {
  ad::Matrix alpha = ad::Matrix::Zero(features.batch(), features.steps);
  for (int b = 0; b < features.batch(); ++b) {
    const int n = features.lengths[static_cast<std::size_t>(b)];
    alpha.row(b).head(n).setConstant(1.0 / n);
  }
  return alpha;
}

}  // namespace attnhtr
