#pragma once

// Character language model and the three ways of combining it with the
// recognizer: shallow (probability sum at inference), deep (joint output
// head over both states) and candidate (LM prediction as an extra decoder
// input, trained jointly).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/decoder.hpp"
#include "attnhtr/nn.hpp"
#include "attnhtr/vocab.hpp"

namespace attnhtr {

struct LMConfig {
  int embedding_dim = 64;
  int state_dim = 256;
  int layers = 2;
};

class CharLM {
 public:
  struct Output {
    ad::Var logits;  // p^lm, (B x V)
    nn::RecurrentState state;
  };

  CharLM() = default;
  CharLM(ad::ParameterStore& store, const std::string& name, int vocab_size, const LMConfig& config, Rng& rng);

  nn::RecurrentState initial_state(ad::Tape& tape, Eigen::Index batch) const;
  // Consumes one token per row. Throws IndexOutOfRange.
  Output step(ad::Tape& tape, std::span<const int> tokens, const nn::RecurrentState& prev) const;

  const LMConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  LMConfig config_;
  int vocab_size_ = 0;
  nn::Embedding embedding_;
  nn::GruStack gru_;
  nn::Linear output_;
};

struct PretrainConfig {
  int epochs = 10;
  int batch_size = 32;
  int window = 32;  // predicted tokens per training window
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  std::vector<double> epoch_loss;        // mean negative log-likelihood per token
  std::vector<double> epoch_perplexity;  // exp(epoch_loss)
  double final_perplexity = 0.0;         // eval-mode pass over the corpus after training
  std::size_t tokens = 0;
  std::size_t dropped_characters = 0;
};

// Training windows: every whitespace token becomes GO, chars..., END and is
// cut into overlapping windows of window + 1 symbols (the last symbol of one
// window starts the next). Characters outside the vocabulary are dropped.
std::vector<TokenSequence> lm_windows(std::span<const std::string> corpus, const Vocabulary& vocab, int window,
                                      std::size_t* dropped = nullptr);

// Next-character training of the LM parameters held in `store` with Adam.
// Throws EmptyCorpus when no trainable window remains.
PretrainReport lm_pretrain(const CharLM& lm, ad::ParameterStore& store, std::span<const std::string> corpus,
                           const Vocabulary& vocab, const PretrainConfig& config);

// Next-token distribution after feeding `context` (GO is prepended) in
// evaluation mode.
Eigen::RowVectorXd lm_next_distribution(const CharLM& lm, std::span<const int> context);

// argmax of softmax(recognizer) + beta * softmax(lm). Throws DimensionMismatch.
int fuse_shallow(const Eigen::Ref<const Eigen::RowVectorXd>& recognizer_logits,
                 const Eigen::Ref<const Eigen::RowVectorXd>& lm_logits, double beta);

// logits = L2(tanh(L1([s_top, s_lm_top, c]))).
class DeepFusionHead {
 public:
  DeepFusionHead() = default;
  DeepFusionHead(ad::ParameterStore& store, const std::string& name, int state_dim, int lm_state_dim,
                 int context_dim, int hidden_dim, int vocab_size, Rng& rng);

  ad::Var forward(ad::Tape& tape, const ad::Var& state_top, const ad::Var& lm_top, const ad::Var& context) const;

  int input_dim() const { return state_dim_ + lm_state_dim_ + context_dim_; }
  const nn::Linear& hidden() const { return hidden_; }
  const nn::Linear& output() const { return output_; }

 private:
  int state_dim_ = 0;
  int lm_state_dim_ = 0;
  int context_dim_ = 0;
  nn::Linear hidden_;
  nn::Linear output_;
};

enum class Injection { Softmax, Sigmoid, Embedding, Raw, RawBatchNorm };

// g(p^lm). The embedding variant looks up the argmax token in `embedding`.
ad::Var inject_activation(ad::Tape& tape, const ad::Var& lm_logits, Injection variant,
                          const nn::Embedding* embedding = nullptr);
// Width of g(p^lm) for a vocabulary of `vocab_size` and embedding width `embedding_dim`.
int injection_width(Injection variant, int vocab_size, int embedding_dim);

// Decoder step on [c_t, emb(y_{t-1}), g(p^lm_{t-1})]. For raw_batchnorm the
// whole concatenated input passes through batch normalization first.
class CandidateFusion {
 public:
  CandidateFusion() = default;
  CandidateFusion(ad::ParameterStore& store, const std::string& name, Injection injection, int decoder_input_dim);

  // The input distribution differs a lot between decoding steps (step 0
  // always sees GO and the LM's unconditioned guess), so raw_batchnorm keeps
  // running statistics per step; steps past the last slot share it.
  static constexpr int kNormSteps = 32;

  ad::Var decoder_input(ad::Tape& tape, const Decoder& decoder, const ad::Var& context, const ad::Var& embedding,
                        const ad::Var& lm_logits, bool training, int step = 0,
                        std::span<const std::uint8_t> active = {}) const;
  nn::RecurrentState candidate_step(ad::Tape& tape, const Decoder& decoder, const ad::Var& context,
                                    const ad::Var& embedding, const ad::Var& lm_logits,
                                    const nn::RecurrentState& prev, bool training, Rng* rng, int step = 0,
                                    std::span<const std::uint8_t> active = {}) const;

  Injection injection() const { return injection_; }
  const nn::BatchNorm* norm() const { return has_norm_ ? &norm_ : nullptr; }

 private:
  Injection injection_ = Injection::RawBatchNorm;
  nn::BatchNorm norm_;  // its own running statistics serve step 0
  std::vector<std::pair<ad::Parameter*, ad::Parameter*>> step_stats_;  // steps 1 .. kNormSteps-1
  bool has_norm_ = false;
};

enum class FusionMode { None, Shallow, Deep, Candidate };

struct FusionConfig {
  FusionMode mode = FusionMode::None;
  double shallow_weight = 0.3;
  Injection injection = Injection::RawBatchNorm;
  // Unset: trainable for candidate fusion, frozen for deep fusion.
  std::optional<bool> lm_trainable;
  bool lm_is_trainable() const { return lm_trainable.value_or(mode == FusionMode::Candidate); }
};

}  // namespace attnhtr
