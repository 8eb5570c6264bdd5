#include "attnhtr/recognizer.hpp"

#include "attnhtr/error.hpp"

namespace attnhtr {

PositionalMode parse_positional_mode(const std::string& s) {
  if (s == "recurrent") return PositionalMode::Recurrent;
  if (s == "positional_encoding") return PositionalMode::PositionalEncoding;
  fail(ErrorCode::InvalidConfig, "positional_mode must be recurrent|positional_encoding, got '" + s + "'");
}

AttentionKind parse_attention_kind(const std::string& s) {
  if (s == "location") return AttentionKind::Location;
  if (s == "content") return AttentionKind::Content;
  fail(ErrorCode::InvalidConfig, "attention must be content|location, got '" + s + "'");
}

UnitStyle parse_unit_style(const std::string& s) {
  if (s == "proposed") return UnitStyle::Proposed;
  if (s == "conventional") return UnitStyle::Conventional;
  fail(ErrorCode::InvalidConfig, "unit_style must be proposed|conventional, got '" + s + "'");
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "none") return FusionMode::None;
  if (s == "shallow") return FusionMode::Shallow;
  if (s == "deep") return FusionMode::Deep;
  if (s == "candidate") return FusionMode::Candidate;
  fail(ErrorCode::InvalidConfig, "fusion.mode must be none|shallow|deep|candidate, got '" + s + "'");
}

Injection parse_injection(const std::string& s) {
  if (s == "softmax") return Injection::Softmax;
  if (s == "sigmoid") return Injection::Sigmoid;
  if (s == "embedding") return Injection::Embedding;
  if (s == "raw") return Injection::Raw;
  if (s == "raw_batchnorm") return Injection::RawBatchNorm;
  fail(ErrorCode::InvalidConfig,
       "fusion.injection must be softmax|sigmoid|embedding|raw|raw_batchnorm, got '" + s + "'");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::None: return "none";
    case FusionMode::Shallow: return "shallow";
    case FusionMode::Deep: return "deep";
    case FusionMode::Candidate: return "candidate";
  }
  return "none";
}

std::string to_string(Injection injection) {
  switch (injection) {
    case Injection::Softmax: return "softmax";
    case Injection::Sigmoid: return "sigmoid";
    case Injection::Embedding: return "embedding";
    case Injection::Raw: return "raw";
    case Injection::RawBatchNorm: return "raw_batchnorm";
  }
  return "raw";
}

ModelConfig ModelConfig::from(const Config& c) {
  ModelConfig m;
  const double dropout = c.get_double("train.dropout");
  m.encoder.backbone = c.get("encoder.backbone");
  m.encoder.positional_mode = parse_positional_mode(c.get("encoder.positional_mode"));
  m.encoder.feature_dim = c.get_int("encoder.feature_dim");
  m.encoder.recurrent_layers = c.get_int("encoder.recurrent_layers");
  m.encoder.input_height = c.get_int("encoder.input_height");
  m.encoder.batch_norm = c.get_bool("encoder.batch_norm");
  m.encoder.dropout = c.get("encoder.dropout").empty() ? dropout : c.get_double("encoder.dropout");

  m.attention.kind = parse_attention_kind(c.get("attention.kind"));
  m.attention.attn_dim = c.get_int("attention.attn_dim");
  m.attention.kernel = c.get_int("attention.kernel");
  m.attention.filters = c.get_int("attention.filters");

  m.decoder.state_dim = c.get_int("decoder.state_dim");
  m.decoder.layers = c.get_int("decoder.layers");
  m.decoder.max_steps = c.get_int("decoder.max_steps");
  m.decoder.unit_style = parse_unit_style(c.get("decoder.unit_style"));
  m.decoder.embedding_dim = c.get_int("decoder.embedding_dim");
  m.decoder.label_smoothing = c.get_double("train.label_smoothing");
  m.decoder.dropout = c.get("decoder.dropout").empty() ? dropout : c.get_double("decoder.dropout");

  m.lm.embedding_dim = c.get_int("lm.embedding_dim");
  m.lm.state_dim = c.get_int("lm.state_dim");
  m.lm.layers = c.get_int("lm.layers");

  m.fusion.mode = parse_fusion_mode(c.get("fusion.mode"));
  m.fusion.shallow_weight = c.get_double("fusion.shallow_weight");
  require(m.fusion.shallow_weight >= 0.0, ErrorCode::InvalidConfig, "fusion.shallow_weight must be >= 0");
  m.fusion.injection = parse_injection(c.get("fusion.injection"));
  if (!c.get("fusion.lm_trainable").empty()) m.fusion.lm_trainable = c.get_bool("fusion.lm_trainable");
  m.deep_hidden = c.get_int("fusion.deep_hidden");
  return m;
}

Recognizer::Recognizer(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab), store_(std::make_unique<ad::ParameterStore>()) {
  require(vocab.size() > Vocabulary::kSpecials, ErrorCode::InvalidConfig, "vocabulary has no characters");
  Rng rng(seed);
  const int v = vocab.size();
  const int d = config.encoder.feature_dim;
  const int s = config.decoder.state_dim;
  encoder_ = std::make_unique<Encoder>(config.encoder, *store_, rng);
  attention_ = Attention(*store_, "attention", d, s, config.attention, rng);
  const FusionMode mode = config.fusion.mode;
  const int extra = mode == FusionMode::Candidate
                        ? injection_width(config.fusion.injection, v, config.decoder.embedding_dim)
                        : 0;
  decoder_ = Decoder(*store_, "decoder", v, d, config.decoder, rng, extra);
  if (mode != FusionMode::None) lm_ = std::make_unique<CharLM>(*store_, "lm", v, config.lm, rng);
  if (mode == FusionMode::Deep) {
    const int hidden = config.deep_hidden > 0 ? config.deep_hidden : s;
    deep_ = std::make_unique<DeepFusionHead>(*store_, "fusion.deep", s, config.lm.state_dim, d, hidden, v, rng);
  }
  if (mode == FusionMode::Candidate) {
    candidate_ = std::make_unique<CandidateFusion>(*store_, "fusion.candidate", config.fusion.injection,
                                                   decoder_.input_dim());
  }
  refresh_trainable();
}

void Recognizer::refresh_trainable() {
  if (lm_) store_->set_trainable_prefix("lm.", config_.fusion.lm_is_trainable());
}

void Recognizer::set_max_steps(int steps) {
  require(steps >= 1, ErrorCode::InvalidConfig, "max_steps must be >= 1");
  config_.decoder.max_steps = steps;
}

ImageBatch Recognizer::collate(std::span<const GrayImage> images) const {
  return collate_images(images, config_.encoder.input_height, encoder_->horizontal_stride());
}

struct Recognizer::Running {
  FeatureBatch features;
  AttentionKeys keys;
  ad::Matrix mask;
  ad::Var alpha;
  nn::RecurrentState state;
  nn::RecurrentState lm_state;
};

Recognizer::StepOutput Recognizer::advance(ad::Tape& tape, Running& run, std::span<const int> previous_tokens,
                                           std::span<const int> lm_tokens, int step, bool training,
                                           Rng* rng, std::span<const std::uint8_t> active) const {
  ad::Var energies = attention_.score(tape, run.keys, run.state.top(), run.alpha);
  AttentionStep att = attend(energies, run.mask, run.features.features);
  run.alpha = att.weights;
  ad::Var embedding = decoder_.embed(tape, previous_tokens);
  StepOutput out;
  const FusionMode mode = config_.fusion.mode;
  const bool use_lm = lm_ && !lm_tokens.empty();
  if (use_lm) {
    CharLM::Output lm_out = lm_->step(tape, lm_tokens, run.lm_state);
    run.lm_state = std::move(lm_out.state);
    out.lm_logits = lm_out.logits;
  }
  if (mode == FusionMode::Candidate) {
    run.state = candidate_->candidate_step(tape, decoder_, att.context, embedding, out.lm_logits, run.state,
                                           training, rng, step, active);
  } else {
    run.state = decoder_.step(tape, att.context, embedding, run.state, training, rng);
  }
  if (mode == FusionMode::Deep) {
    out.logits = deep_->forward(tape, run.state.top(), run.lm_state.top(), att.context);
  } else {
    out.logits = decoder_.logits(tape, run.state, att.context);
  }
  return out;
}

BatchLoss Recognizer::loss(ad::Tape& tape, const ImageBatch& images, std::span<const TokenSequence> targets,
                           bool training, Rng* rng) const {
  require(static_cast<int>(targets.size()) == images.size(), ErrorCode::DimensionMismatch,
          "one target sequence per image is required");
  const std::size_t batch = targets.size();
  Running run;
  run.features = encoder_->forward(tape, images, training, rng);
  run.keys = attention_.keys(tape, run.features.features, run.features.steps);
  run.mask = run.features.energy_mask();
  run.alpha = tape.constant(initial_weights(run.features));
  run.state = decoder_.initial_state(tape, static_cast<Eigen::Index>(batch));
  const FusionMode mode = config_.fusion.mode;
  const bool lm_active = mode == FusionMode::Deep || mode == FusionMode::Candidate;
  if (lm_active) run.lm_state = lm_->initial_state(tape, static_cast<Eigen::Index>(batch));

  std::size_t longest = 0;
  for (const TokenSequence& t : targets) longest = std::max(longest, t.size());
  std::vector<int> previous(batch, Vocabulary::kGo);
  std::vector<int> predicted(batch, Vocabulary::kGo);
  std::vector<ad::Var> losses;
  BatchLoss result;
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<int> step_targets(batch, -1);
    // Rows whose target has ended so far only carry padding.
    std::vector<std::uint8_t> active(batch, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (t < targets[b].size()) {
        step_targets[b] = targets[b][t];
        active[b] = 1;
        ++result.tokens;
      }
    }
    std::span<const int> lm_tokens;
    if (mode == FusionMode::Deep) lm_tokens = previous;
    if (mode == FusionMode::Candidate) lm_tokens = predicted;
    StepOutput out = advance(tape, run, previous, lm_tokens, static_cast<int>(t), training, rng, active);
    losses.push_back(ad::smoothed_cross_entropy(out.logits, step_targets, config_.decoder.label_smoothing));
    predicted = argmax_rows(out.logits.value());
    for (std::size_t b = 0; b < batch; ++b) {
      previous[b] = t < targets[b].size() ? targets[b][t] : Vocabulary::kPad;
    }
  }
  require(result.tokens > 0, ErrorCode::InvalidConfig, "empty target sequences");
  ad::Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
  result.loss = ad::scale(total, 1.0 / static_cast<double>(result.tokens));
  return result;
}

std::vector<Decoded> Recognizer::decode(const ImageBatch& images) const {
  require(config_.decoder.max_steps >= 1, ErrorCode::InvalidConfig, "max_steps is not set");
  ad::Tape tape(false);
  const std::size_t batch = static_cast<std::size_t>(images.size());
  Running run;
  run.features = encoder_->forward(tape, images, false, nullptr);
  run.keys = attention_.keys(tape, run.features.features, run.features.steps);
  run.mask = run.features.energy_mask();
  run.alpha = tape.constant(initial_weights(run.features));
  run.state = decoder_.initial_state(tape, static_cast<Eigen::Index>(batch));
  if (lm_) run.lm_state = lm_->initial_state(tape, static_cast<Eigen::Index>(batch));

  const FusionMode mode = config_.fusion.mode;
  std::vector<int> previous(batch, Vocabulary::kGo);
  std::vector<bool> done(batch, false);
  std::vector<std::vector<Eigen::RowVectorXd>> masks(batch);
  std::vector<Decoded> out(batch);
  std::size_t remaining = batch;
  for (int t = 0; t < config_.decoder.max_steps && remaining > 0; ++t) {
    std::span<const int> lm_tokens;
    if (lm_) lm_tokens = previous;
    StepOutput step = advance(tape, run, previous, lm_tokens, t, false, nullptr);
    const ad::Matrix& logits = step.logits.value();
    const ad::Matrix& alpha = run.alpha.value();
    for (std::size_t b = 0; b < batch; ++b) {
      int y = 0;
      if (mode == FusionMode::Shallow) {
        y = fuse_shallow(logits.row(static_cast<Eigen::Index>(b)),
                         step.lm_logits.value().row(static_cast<Eigen::Index>(b)), config_.fusion.shallow_weight);
      } else {
        y = argmax(logits.row(static_cast<Eigen::Index>(b)));
      }
      previous[b] = y;
      if (done[b]) continue;
      const int n = run.features.lengths[b];
      masks[b].push_back(alpha.row(static_cast<Eigen::Index>(b)).head(n));
      if (y == Vocabulary::kEnd) {
        done[b] = true;
        --remaining;
      } else {
        out[b].tokens.push_back(y);
      }
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    out[b].text = vocab_.decode(out[b].tokens);
    const int n = run.features.lengths[b];
    out[b].attention.resize(static_cast<Eigen::Index>(masks[b].size()), n);
    for (std::size_t t = 0; t < masks[b].size(); ++t) out[b].attention.row(static_cast<Eigen::Index>(t)) = masks[b][t];
  }
  return out;
}

Decoded Recognizer::decode(const GrayImage& image) const {
  const GrayImage* p = &image;
  return decode(collate(std::span<const GrayImage>(p, 1))).front();
}

}  // namespace attnhtr
