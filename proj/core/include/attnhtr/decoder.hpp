#pragma once

// Multi-layer GRU decoder: s_t = GRU([c_t, emb(y_{t-1}), extra], s_{t-1}),
// logits = omega(s_t) (proposed unit) or omega([s_t, c_t]) (conventional).

#include <span>
#include <string>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/nn.hpp"

namespace attnhtr {

enum class UnitStyle { Proposed, Conventional };

struct DecoderConfig {
  int state_dim = 256;
  int layers = 2;
  int max_steps = 0;  // 0 = 2 + longest training transcription
  UnitStyle unit_style = UnitStyle::Proposed;
  int embedding_dim = 128;
  double label_smoothing = 0.1;
  double dropout = 0.5;
};

class Decoder {
 public:
  Decoder() = default;
  // extra_input_dim widens the recurrent input for a fused language model
  // block; it is appended after the context and the embedding.
  Decoder(ad::ParameterStore& store, const std::string& name, int vocab_size, int context_dim,
          const DecoderConfig& config, Rng& rng, int extra_input_dim = 0);

  // Rows of the embedding table. Throws IndexOutOfRange.
  ad::Var embed(ad::Tape& tape, std::span<const int> tokens) const;

  nn::RecurrentState initial_state(ad::Tape& tape, Eigen::Index batch) const;

  // Recurrent update on concat(context, embedding[, extra]).
  nn::RecurrentState step(ad::Tape& tape, const ad::Var& context, const ad::Var& embedding,
                          const nn::RecurrentState& prev, bool training, Rng* rng,
                          const ad::Var& extra = ad::Var()) const;
  // Recurrent update on an already assembled input row block.
  nn::RecurrentState step_input(ad::Tape& tape, const ad::Var& input, const nn::RecurrentState& prev,
                                bool training, Rng* rng) const;

  // omega over the top layer; the conventional unit also reads the context.
  ad::Var logits(ad::Tape& tape, const nn::RecurrentState& state, const ad::Var& context) const;

  const DecoderConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  int context_dim() const { return context_dim_; }
  int input_dim() const { return context_dim_ + config_.embedding_dim + extra_dim_; }
  int extra_dim() const { return extra_dim_; }
  const nn::Embedding& embedding() const { return embedding_; }
  const nn::GruStack& recurrent() const { return gru_; }
  const nn::Linear& output() const { return output_; }

 private:
  DecoderConfig config_;
  int vocab_size_ = 0;
  int context_dim_ = 0;
  int extra_dim_ = 0;
  nn::Embedding embedding_;
  nn::GruStack gru_;
  nn::Linear output_;
};

// Index of the largest value; the lowest index wins ties.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);
std::vector<int> argmax_rows(const ad::Matrix& m);

}  // namespace attnhtr
