#pragma once

// Additive attention over an encoded feature sequence, with an optional
// location term computed from the previous step's mask.
//
//   content:  e_i = w . tanh(W h_i + V s + b)
//   location: e_i = w . tanh(W h_i + V s + U l_i + b),  l = F * alpha_prev

#include <string>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/encoder.hpp"
#include "attnhtr/rng.hpp"

namespace attnhtr {

enum class AttentionKind { Content, Location };

struct AttentionConfig {
  AttentionKind kind = AttentionKind::Location;
  int attn_dim = 0;  // 0 = same as the decoder state width
  int kernel = 11;   // k, odd
  int filters = 8;   // r
};

// W h_i for every position, computed once per sequence.
struct AttentionKeys {
  ad::Var projected;  // (B*N x attn_dim)
  ad::Var values;     // the features themselves (B*N x D)
  int steps = 0;
};

struct AttentionStep {
  ad::Var weights;  // alpha_t, (B x N)
  ad::Var context;  // c_t, (B x D)
};

class Attention {
 public:
  Attention() = default;
  Attention(ad::ParameterStore& store, const std::string& name, int feature_dim, int state_dim,
            const AttentionConfig& config, Rng& rng);

  AttentionKeys keys(ad::Tape& tape, const ad::Var& features, int steps) const;

  // Energies (B x N). Throws DimensionMismatch.
  ad::Var score_content(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state) const;
  ad::Var score_location(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                         const ad::Var& previous_weights) const;
  // Dispatches on the configured kind.
  ad::Var score(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                const ad::Var& previous_weights) const;

  const AttentionConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }
  int state_dim() const { return state_dim_; }

  ad::Parameter& w() const { return *w_; }
  ad::Parameter& W() const { return *W_; }
  ad::Parameter& V() const { return *V_; }
  ad::Parameter& U() const { return *U_; }
  ad::Parameter& b() const { return *b_; }
  ad::Parameter& F() const { return *F_; }

 private:
  ad::Var combine(ad::Tape& tape, const AttentionKeys& keys, const ad::Var& state,
                  const ad::Var* location) const;

  AttentionConfig config_;
  int feature_dim_ = 0;
  int state_dim_ = 0;
  ad::Parameter* w_ = nullptr;
  ad::Parameter* W_ = nullptr;
  ad::Parameter* V_ = nullptr;
  ad::Parameter* U_ = nullptr;
  ad::Parameter* b_ = nullptr;
  ad::Parameter* F_ = nullptr;
};

// alpha = softmax(energies + mask) row-wise, c = sum_i alpha_i h_i.
// mask holds 0 for valid positions and -infinity for padding; pass an empty
// matrix when every position is valid.
AttentionStep attend(const ad::Var& energies, const ad::Matrix& mask, const ad::Var& values);

// Uniform mask over each sample's valid positions, used as alpha_0.
ad::Matrix initial_weights(const FeatureBatch& features);

}  // namespace attnhtr
