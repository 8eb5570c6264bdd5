#include "attnhtr/langmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "attnhtr/error.hpp"
#include "attnhtr/log.hpp"
#include "attnhtr/optim.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

CharLM::CharLM(ad::ParameterStore& store, const std::string& name, int vocab_size, const LMConfig& config,
               Rng& rng)
    : name_(name), config_(config), vocab_size_(vocab_size) {
  require(config.embedding_dim > 0 && config.state_dim > 0 && config.layers >= 1, ErrorCode::InvalidConfig,
          "language model widths and depth must be positive");
  embedding_ = nn::Embedding(store, name + ".embedding", vocab_size, config.embedding_dim, rng);
  gru_ = nn::GruStack(store, name + ".gru", config.embedding_dim, config.state_dim, config.layers, rng);
  output_ = nn::Linear(store, name + ".output", config.state_dim, vocab_size, rng);
}

nn::RecurrentState CharLM::initial_state(ad::Tape& tape, Eigen::Index batch) const {
  return gru_.zero_state(tape, batch);
}

CharLM::Output CharLM::step(ad::Tape& tape, std::span<const int> tokens, const nn::RecurrentState& prev) const {
  for (int y : tokens) {
    require(y >= 0 && y < vocab_size_, ErrorCode::IndexOutOfRange,
            "token " + std::to_string(y) + " outside vocabulary of size " + std::to_string(vocab_size_));
  }
  nn::RecurrentState next = gru_.step(tape, embedding_.forward(tape, tokens), prev, 0.0, false, nullptr);
  ad::Var logits = output_.forward(tape, next.top());
  return {logits, std::move(next)};
}

std::vector<TokenSequence> lm_windows(std::span<const std::string> corpus, const Vocabulary& vocab, int window,
                                      std::size_t* dropped) {
  require(window >= 1, ErrorCode::InvalidConfig, "LM window must be >= 1");
  std::size_t unknown = 0;
  std::vector<TokenSequence> windows;
  for (const std::string& line : corpus) {
    for (const std::string& word : utf8::split_whitespace(line)) {
      TokenSequence seq{Vocabulary::kGo};
      for (char32_t ch : utf8::decode(word)) {
        const int idx = vocab.index_of(ch);
        if (idx < 0) {
          ++unknown;
          continue;
        }
        seq.push_back(idx);
      }
      if (seq.size() == 1) continue;
      seq.push_back(Vocabulary::kEnd);
      for (std::size_t start = 0; start + 1 < seq.size(); start += static_cast<std::size_t>(window)) {
        const std::size_t stop = std::min(seq.size(), start + static_cast<std::size_t>(window) + 1);
        windows.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(start),
                             seq.begin() + static_cast<std::ptrdiff_t>(stop));
      }
    }
  }
  if (unknown > 0) {
    log::warn("language model corpus: dropped " + std::to_string(unknown) + " characters outside the vocabulary");
  }
  if (dropped != nullptr) *dropped = unknown;
  return windows;
}

namespace {

struct BatchLoss {
  double nll = 0.0;
  std::size_t tokens = 0;
};

// Teacher-forced loss of one batch of windows; gradients land in the store
// when the tape records them.
BatchLoss window_loss(const CharLM& lm, ad::Tape& tape, std::span<const TokenSequence* const> batch,
                      bool backward) {
  std::size_t longest = 0;
  for (const TokenSequence* w : batch) longest = std::max(longest, w->size());
  const Eigen::Index rows = static_cast<Eigen::Index>(batch.size());
  nn::RecurrentState state = lm.initial_state(tape, rows);
  std::vector<ad::Var> losses;
  BatchLoss result;
  for (std::size_t t = 0; t + 1 < longest; ++t) {
    std::vector<int> inputs(batch.size(), Vocabulary::kPad);
    std::vector<int> targets(batch.size(), -1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const TokenSequence& w = *batch[b];
      if (t + 1 < w.size()) {
        inputs[b] = w[t];
        targets[b] = w[t + 1];
        ++result.tokens;
      }
    }
    CharLM::Output out = lm.step(tape, inputs, state);
    state = std::move(out.state);
    losses.push_back(ad::smoothed_cross_entropy(out.logits, targets, 0.0));
  }
  ad::Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
  result.nll = total.value()(0, 0);
  if (backward && result.tokens > 0) tape.backward(ad::scale(total, 1.0 / static_cast<double>(result.tokens)));
  return result;
}

}  // namespace

PretrainReport lm_pretrain(const CharLM& lm, ad::ParameterStore& store, std::span<const std::string> corpus,
                           const Vocabulary& vocab, const PretrainConfig& config) {
  require(lm.vocab_size() == vocab.size(), ErrorCode::VocabularyMismatch,
          "language model and vocabulary sizes differ");
  require(config.epochs >= 1 && config.batch_size >= 1, ErrorCode::InvalidConfig,
          "LM pretraining needs epochs >= 1 and batch_size >= 1");
  PretrainReport report;
  const std::vector<TokenSequence> windows = lm_windows(corpus, vocab, config.window, &report.dropped_characters);
  require(!windows.empty(), ErrorCode::EmptyCorpus, "language model corpus has no usable text");

  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.clip_norm = config.clip_norm;
  Adam adam(adam_config);
  Rng rng(config.seed);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const TokenSequence*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&windows[order[i]]);
      store.zero_grad();
      ad::Tape tape;
      const BatchLoss loss = window_loss(lm, tape, batch, true);
      require(std::isfinite(loss.nll), ErrorCode::DivergenceDetected, "language model loss is not finite");
      adam.step(store);
      nll += loss.nll;
      tokens += loss.tokens;
    }
    const double mean = nll / static_cast<double>(tokens);
    report.epoch_loss.push_back(mean);
    report.epoch_perplexity.push_back(std::exp(mean));
    std::ostringstream msg;
    msg << "lm epoch " << epoch + 1 << " loss " << mean << " perplexity " << std::exp(mean);
    log::info(msg.str());
  }

  double nll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < windows.size(); start += static_cast<std::size_t>(config.batch_size)) {
    const std::size_t stop = std::min(windows.size(), start + static_cast<std::size_t>(config.batch_size));
    std::vector<const TokenSequence*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&windows[i]);
    ad::Tape tape(false);
    const BatchLoss loss = window_loss(lm, tape, batch, false);
    nll += loss.nll;
    tokens += loss.tokens;
  }
  report.tokens = tokens;
  report.final_perplexity = std::exp(nll / static_cast<double>(tokens));
  log::info("lm final perplexity " + std::to_string(report.final_perplexity));
  return report;
}

Eigen::RowVectorXd lm_next_distribution(const CharLM& lm, std::span<const int> context) {
  ad::Tape tape(false);
  nn::RecurrentState state = lm.initial_state(tape, 1);
  int token = Vocabulary::kGo;
  CharLM::Output out = lm.step(tape, std::span<const int>(&token, 1), state);
  for (int y : context) {
    out = lm.step(tape, std::span<const int>(&y, 1), out.state);
  }
  return ad::softmax(out.logits.value()).row(0);
}

int fuse_shallow(const Eigen::Ref<const Eigen::RowVectorXd>& recognizer_logits,
                 const Eigen::Ref<const Eigen::RowVectorXd>& lm_logits, double beta) {
  require(recognizer_logits.size() == lm_logits.size(), ErrorCode::DimensionMismatch,
          "shallow fusion needs logits of equal length");
  const ad::Matrix rec = ad::softmax(recognizer_logits);
  const ad::Matrix lm = ad::softmax(lm_logits);
  const Eigen::RowVectorXd fused = rec.row(0) + beta * lm.row(0);
  return argmax(fused);
}

DeepFusionHead::DeepFusionHead(ad::ParameterStore& store, const std::string& name, int state_dim,
                               int lm_state_dim, int context_dim, int hidden_dim, int vocab_size, Rng& rng)
    : state_dim_(state_dim), lm_state_dim_(lm_state_dim), context_dim_(context_dim) {
  hidden_ = nn::Linear(store, name + ".hidden", input_dim(), hidden_dim, rng);
  output_ = nn::Linear(store, name + ".output", hidden_dim, vocab_size, rng);
}

ad::Var DeepFusionHead::forward(ad::Tape& tape, const ad::Var& state_top, const ad::Var& lm_top,
                                const ad::Var& context) const {
  require(state_top.cols() == state_dim_ && lm_top.cols() == lm_state_dim_ && context.cols() == context_dim_,
          ErrorCode::DimensionMismatch, "deep fusion inputs have unexpected widths");
  ad::Var joint = ad::concat_cols({state_top, lm_top, context});
  return output_.forward(tape, ad::tanh(hidden_.forward(tape, joint)));
}

ad::Var inject_activation(ad::Tape& tape, const ad::Var& lm_logits, Injection variant,
                          const nn::Embedding* embedding) {
  switch (variant) {
    case Injection::Softmax:
      return ad::softmax_rows(lm_logits);
    case Injection::Sigmoid:
      return ad::sigmoid(lm_logits);
    case Injection::Embedding: {
      require(embedding != nullptr, ErrorCode::InvalidConfig, "embedding injection needs an embedding table");
      const std::vector<int> best = argmax_rows(lm_logits.value());
      return embedding->forward(tape, best);
    }
    case Injection::Raw:
    case Injection::RawBatchNorm:
      return lm_logits;
  }
  return lm_logits;
}

int injection_width(Injection variant, int vocab_size, int embedding_dim) {
  return variant == Injection::Embedding ? embedding_dim : vocab_size;
}

CandidateFusion::CandidateFusion(ad::ParameterStore& store, const std::string& name, Injection injection,
                                 int decoder_input_dim)
    : injection_(injection) {
  if (injection == Injection::RawBatchNorm) {
    norm_ = nn::BatchNorm(store, name + ".input_norm", decoder_input_dim);
    has_norm_ = true;
    for (int t = 1; t < kNormSteps; ++t) {
      const std::string prefix = name + ".input_norm.step" + std::to_string(t);
      step_stats_.emplace_back(&store.create(prefix + ".running_mean", ad::Matrix::Zero(1, decoder_input_dim), false),
                               &store.create(prefix + ".running_var", ad::Matrix::Ones(1, decoder_input_dim), false));
    }
  }
}

ad::Var CandidateFusion::decoder_input(ad::Tape& tape, const Decoder& decoder, const ad::Var& context,
                                       const ad::Var& embedding, const ad::Var& lm_logits, bool training,
                                       int step, std::span<const std::uint8_t> active) const {
  ad::Var injected = inject_activation(tape, lm_logits, injection_, &decoder.embedding());
  require(injected.cols() == decoder.extra_dim(), ErrorCode::DimensionMismatch,
          "language model block width does not match the decoder input");
  ad::Var input = ad::concat_cols({context, embedding, injected});
  if (!has_norm_) return input;
  if (step <= 0) return norm_.forward(tape, input, 1, training, norm_.running_mean(), norm_.running_var(), active);
  const auto& [mean, var] = step_stats_[std::min<std::size_t>(step, step_stats_.size()) - 1];
  return norm_.forward(tape, input, 1, training, *mean, *var, active);
}

nn::RecurrentState CandidateFusion::candidate_step(ad::Tape& tape, const Decoder& decoder, const ad::Var& context,
                                                   const ad::Var& embedding, const ad::Var& lm_logits,
                                                   const nn::RecurrentState& prev, bool training, Rng* rng,
                                                   int step, std::span<const std::uint8_t> active) const {
  return decoder.step_input(tape, decoder_input(tape, decoder, context, embedding, lm_logits, training, step, active),
                            prev, training, rng);
}

}  // namespace attnhtr
