#pragma once

// The full word recognizer: encoder, attention, decoder and the optional
// language model with its fusion head. Owns its parameters.

#include <memory>
#include <span>
#include <vector>

#include "attnhtr/attention.hpp"
#include "attnhtr/config.hpp"
#include "attnhtr/decoder.hpp"
#include "attnhtr/encoder.hpp"
#include "attnhtr/langmodel.hpp"
#include "attnhtr/vocab.hpp"

namespace attnhtr {

struct ModelConfig {
  EncoderConfig encoder;
  AttentionConfig attention;
  DecoderConfig decoder;
  LMConfig lm;
  FusionConfig fusion;
  int deep_hidden = 0;  // 0 = decoder state width

  // Reads the encoder/attention/decoder/lm/fusion sections; train.dropout
  // and train.label_smoothing fill the per-module values left unset.
  static ModelConfig from(const Config& config);
};

struct Decoded {
  TokenSequence tokens;  // without END
  std::string text;
  // One row per decoding step, END step included; columns are this
  // image's valid feature positions.
  ad::Matrix attention;
};

struct BatchLoss {
  ad::Var loss;  // mean smoothed cross-entropy per target token
  std::size_t tokens = 0;
};

class Recognizer {
 public:
  Recognizer(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed);
  Recognizer(const Recognizer&) = delete;
  Recognizer& operator=(const Recognizer&) = delete;

  // Teacher-forced loss. targets are vocabulary encodings ending with END.
  BatchLoss loss(ad::Tape& tape, const ImageBatch& images, std::span<const TokenSequence> targets, bool training,
                 Rng* rng) const;

  // Greedy decoding in evaluation mode; stops at END or after max_steps.
  std::vector<Decoded> decode(const ImageBatch& images) const;
  Decoded decode(const GrayImage& image) const;

  ImageBatch collate(std::span<const GrayImage> images) const;

  void set_max_steps(int steps);
  int max_steps() const { return config_.decoder.max_steps; }
  // Applies fusion.lm_trainable to the language model parameters.
  void refresh_trainable();

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ad::ParameterStore& store() { return *store_; }
  const ad::ParameterStore& store() const { return *store_; }
  const Encoder& encoder() const { return *encoder_; }
  const Attention& attention() const { return attention_; }
  const Decoder& decoder() const { return decoder_; }
  const CharLM* lm() const { return lm_ ? lm_.get() : nullptr; }
  const DeepFusionHead* deep_head() const { return deep_ ? deep_.get() : nullptr; }
  const CandidateFusion* candidate() const { return candidate_ ? candidate_.get() : nullptr; }

 private:
  struct StepOutput {
    ad::Var logits;
    ad::Var lm_logits;
  };
  struct Running;

  StepOutput advance(ad::Tape& tape, Running& run, std::span<const int> previous_tokens,
                     std::span<const int> lm_tokens, int step, bool training, Rng* rng,
                     std::span<const std::uint8_t> active = {}) const;

  ModelConfig config_;
  Vocabulary vocab_;
  std::unique_ptr<ad::ParameterStore> store_;
  std::unique_ptr<Encoder> encoder_;
  Attention attention_;
  Decoder decoder_;
  std::unique_ptr<CharLM> lm_;
  std::unique_ptr<DeepFusionHead> deep_;
  std::unique_ptr<CandidateFusion> candidate_;
};

// Name conversions used by configuration files and the command line.
PositionalMode parse_positional_mode(const std::string& s);
AttentionKind parse_attention_kind(const std::string& s);
UnitStyle parse_unit_style(const std::string& s);
FusionMode parse_fusion_mode(const std::string& s);
Injection parse_injection(const std::string& s);
std::string to_string(FusionMode mode);
std::string to_string(Injection injection);

}  // namespace attnhtr
