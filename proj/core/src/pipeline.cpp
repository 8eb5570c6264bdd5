#include "attnhtr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "attnhtr/error.hpp"
#include "attnhtr/log.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

namespace fs = std::filesystem;

namespace {

Range range_of(const Config& c, const std::string& key) {
  const auto [lo, hi] = c.get_range(key);
  return {lo, hi};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

AugmentConfig augment_config_from(const Config& c) {
  AugmentConfig a;
  a.blur_sigma = range_of(c, "augment.blur_sigma");
  a.sharpen_amount = range_of(c, "augment.sharpen_amount");
  a.elastic_cells_x = c.get_int("augment.elastic_cells_x");
  a.elastic_cells_y = c.get_int("augment.elastic_cells_y");
  a.elastic_magnitude = range_of(c, "augment.elastic_magnitude");
  a.shear_deg = range_of(c, "augment.shear_deg");
  a.rotation_deg = range_of(c, "augment.rotation_deg");
  a.translate = range_of(c, "augment.translate");
  a.scale = range_of(c, "augment.scale");
  a.gamma = range_of(c, "augment.gamma");
  a.background_blend = range_of(c, "augment.background_blend");
  a.apply_probability = c.get_double("train.augment_probability");
  a.validate();
  return a;
}

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("train.learning_rate");
  t.batch_size = c.get_int("train.batch_size");
  t.epochs = c.get_int("train.epochs");
  t.patience = c.get_int("train.patience");
  t.valid_every = c.get_int("train.valid_every");
  t.clip_norm = c.get_double("train.clip_norm");
  t.target_cer = c.get_double("train.target_cer");
  t.seed = c.seed();
  t.augment = augment_config_from(c);
  t.checkpoint_dir = c.get("train.checkpoint_dir");
  t.lm_checkpoint = c.get("train.lm_checkpoint");
  require(t.learning_rate > 0.0, ErrorCode::InvalidConfig, "train.learning_rate must be positive");
  require(t.batch_size >= 1 && t.epochs >= 0 && t.patience >= 1 && t.valid_every >= 1, ErrorCode::InvalidConfig,
          "train.batch_size, train.patience and train.valid_every must be >= 1");
  const double dropout = c.get_double("train.dropout");
  const double smoothing = c.get_double("train.label_smoothing");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidConfig, "train.dropout must be in [0, 1)");
  require(smoothing >= 0.0 && smoothing < 1.0, ErrorCode::InvalidConfig, "train.label_smoothing must be in [0, 1)");
  return t;
}

Dataset Dataset::load(const std::vector<WordSample>& samples) {
  Dataset d;
  for (const WordSample& s : samples) {
    d.ids.push_back(s.id);
    d.images.push_back(s.load());
    d.transcriptions.push_back(s.transcription);
  }
  return d;
}

namespace {

Dataset resized(const Dataset& data, int height) {
  Dataset out = data;
  for (GrayImage& img : out.images) {
    if (img.height != height) img = resize_to_height(img, height);
  }
  return out;
}

}  // namespace

Trainer::Trainer(const Config& config, const Dataset& train, const Checkpoint* init)
    : config_(config), train_(TrainConfig::from(config)) {
  require(train.size() > 0, ErrorCode::InvalidConfig, "training set is empty");
  const Vocabulary vocab = init != nullptr ? init->vocab : Vocabulary::build(train.transcriptions);
  std::size_t longest = 0;
  for (const std::string& t : train.transcriptions) {
    require(!t.empty(), ErrorCode::InvalidConfig, "empty transcription in training data");
    if (!vocab.covers(t)) {
      fail(ErrorCode::VocabularyMismatch, "vocabulary cannot encode training label '" + t + "'");
    }
    longest = std::max(longest, utf8::decode(t).size());
  }
  if (config_.get_int("decoder.max_steps") <= 0) {
    config_.set("decoder.max_steps", std::to_string(2 + longest));
  }
  model_ = std::make_unique<Recognizer>(ModelConfig::from(config_), vocab, mix_seed(train_.seed, 1));

  AdamConfig adam;
  adam.learning_rate = train_.learning_rate;
  adam.clip_norm = train_.clip_norm;
  adam_ = Adam(adam);

  if (init != nullptr) {
    const RestoreReport r = restore_parameters(*init, model_->store(), false);
    log::info("initialized " + std::to_string(r.restored) + " tensors from checkpoint (" +
              std::to_string(r.partial) + " partial, " + std::to_string(r.missing) + " new)");
    if (r.partial == 0 && r.missing == 0 && !init->moments.empty()) {
      adam_.restore(init->optimizer_steps, init->moments);
      start_epoch_ = init->epoch;
    }
  }
  bool lm_loaded = init != nullptr && init->tensors.count("lm.output.weight") != 0;
  if (!train_.lm_checkpoint.empty() && model_->lm() != nullptr) {
    const Checkpoint lm = load_checkpoint(train_.lm_checkpoint);
    require(lm.vocab == vocab, ErrorCode::VocabularyMismatch,
            "language model vocabulary differs from the recognizer vocabulary");
    const RestoreReport r = restore_parameters(lm, model_->store(), false, "lm.");
    require(r.partial == 0 && r.missing == 0, ErrorCode::DimensionMismatch,
            "language model checkpoint does not match the lm.* configuration");
    lm_loaded = true;
  }
  if (model_->lm() != nullptr && !lm_loaded) {
    log::warn("fusion mode " + to_string(model_->config().fusion.mode) + " with an untrained language model");
  }
}

Checkpoint Trainer::snapshot(int epoch) const {
  return attnhtr::snapshot(model_->store(), model_->vocab(), config_, epoch, &adam_);
}

double Trainer::train_epoch(const Dataset& train, int epoch) {
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(mix_seed(train_.seed, 0x5EED0000ull + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  Rng dropout_rng(mix_seed(train_.seed, 0xD0D0000ull + static_cast<std::uint64_t>(epoch)));
  const std::uint64_t augment_base = mix_seed(train_.seed ^ 0xA06E47ull, static_cast<std::uint64_t>(epoch));
  const bool augment = train_.augment.apply_probability > 0.0;
  const int height = model_->config().encoder.input_height;

  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(train_.batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(train_.batch_size));
    std::vector<GrayImage> images;
    std::vector<TokenSequence> targets;
    for (std::size_t k = start; k < stop; ++k) {
      const std::size_t i = order[k];
      GrayImage img = train.images[i];
      if (img.height != height) img = resize_to_height(img, height);
      if (augment) img = apply_pipeline(img, train_.augment, mix_seed(augment_base, i));
      images.push_back(std::move(img));
      targets.push_back(model_->vocab().encode(train.transcriptions[i]));
    }
    model_->store().zero_grad();
    ad::Tape tape;
    const BatchLoss loss = model_->loss(tape, model_->collate(images), targets, true, &dropout_rng);
    const double value = loss.loss.value()(0, 0);
    require(std::isfinite(value), ErrorCode::DivergenceDetected,
            "training loss is not finite at epoch " + std::to_string(epoch));
    tape.backward(loss.loss);
    adam_.step(model_->store());
    total += value * static_cast<double>(loss.tokens);
    tokens += loss.tokens;
  }
  return total / static_cast<double>(tokens);
}

TrainResult Trainer::fit(const Dataset& train_raw, const Dataset& valid_raw) {
  const int height = model_->config().encoder.input_height;
  const Dataset train = resized(train_raw, height);
  const Dataset valid = resized(valid_raw, height);
  const bool write = !train_.checkpoint_dir.empty();
  TrainResult result;
  std::map<std::string, ad::Matrix> best_tensors;
  const int first = start_epoch_ + 1;
  const int last = start_epoch_ + train_.epochs;
  for (int epoch = first; epoch <= last; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_epoch(train, epoch);
    result.epochs_run = epoch - start_epoch_;
    std::string line = "epoch " + std::to_string(epoch) + " loss " + format_double(entry.train_loss);
    const bool validate = valid.size() > 0 && ((epoch - start_epoch_) % train_.valid_every == 0 || epoch == last);
    if (validate) {
      const MetricsReport report = evaluate(*model_, valid, nullptr, train_.batch_size);
      entry.valid_cer = report.aggregate_cer;
      entry.valid_wer = report.aggregate_wer;
      line += " valid CER " + format_double(entry.valid_cer) + " WER " + format_double(entry.valid_wer);
      if (result.best_valid_cer < 0.0 || entry.valid_cer < result.best_valid_cer) {
        result.best_valid_cer = entry.valid_cer;
        result.best_epoch = epoch;
        for (const ad::Parameter* p : model_->store().all()) best_tensors[p->name] = p->value;
        if (write) {
          Checkpoint ck = snapshot(epoch);
          ck.best_valid_cer = entry.valid_cer;
          result.best_checkpoint = train_.checkpoint_dir / "best.ckpt";
          save_checkpoint(ck, result.best_checkpoint);
        }
      }
    }
    log::info(line);
    result.history.push_back(entry);
    if (validate && train_.target_cer >= 0.0 && entry.valid_cer <= train_.target_cer) break;
    if (result.best_epoch > 0 && epoch - result.best_epoch >= train_.patience) {
      log::info("early stop: no validation improvement for " + std::to_string(train_.patience) + " epochs");
      break;
    }
  }
  if (write) {
    Checkpoint ck = snapshot(start_epoch_ + result.epochs_run);
    ck.best_valid_cer = result.best_valid_cer;
    result.last_checkpoint = train_.checkpoint_dir / "last.ckpt";
    save_checkpoint(ck, result.last_checkpoint);
    if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
  }
  // Leave the model holding the best validation weights.
  for (ad::Parameter* p : model_->store().all()) {
    const auto it = best_tensors.find(p->name);
    if (it != best_tensors.end()) p->value = it->second;
  }
  return result;
}

std::unique_ptr<Recognizer> load_recognizer(const Checkpoint& ck) {
  auto model = std::make_unique<Recognizer>(ModelConfig::from(ck.config), ck.vocab, 0);
  restore_parameters(ck, model->store(), true);
  return model;
}

std::vector<Decoded> transcribe(const Recognizer& model, const Dataset& data, int batch_size) {
  require(batch_size >= 1, ErrorCode::InvalidConfig, "batch size must be >= 1");
  std::vector<Decoded> out;
  out.reserve(data.size());
  const std::size_t step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < data.size(); start += step) {
    const std::size_t stop = std::min(data.size(), start + step);
    std::span<const GrayImage> images(data.images.data() + start, stop - start);
    for (Decoded& d : model.decode(model.collate(images))) out.push_back(std::move(d));
  }
  return out;
}

MetricsReport evaluate(const Recognizer& model, const Dataset& data, const Lexicon* lexicon, int batch_size) {
  MetricsReport report;
  const std::vector<Decoded> decoded = transcribe(model, data, batch_size);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::string hyp = decoded[i].text;
    if (lexicon != nullptr) hyp = constrain(hyp, *lexicon);
    report.add(data.ids[i], data.transcriptions[i], std::move(hyp));
  }
  return report;
}

TrainResult train(const Config& config, const std::vector<WordSample>& train_samples,
                  const std::vector<WordSample>& valid_samples, const std::optional<fs::path>& init) {
  const Dataset train_data = Dataset::load(train_samples);
  const Dataset valid_data = Dataset::load(valid_samples);
  std::optional<Checkpoint> ck;
  if (init) ck = load_checkpoint(*init);
  Trainer trainer(config, train_data, ck ? &*ck : nullptr);
  return trainer.fit(train_data, valid_data);
}

PretrainReport pretrain_language_model(const Config& config, const std::vector<std::string>& corpus,
                                       const Vocabulary& vocab, const fs::path& out) {
  LMConfig lm_config;
  lm_config.embedding_dim = config.get_int("lm.embedding_dim");
  lm_config.state_dim = config.get_int("lm.state_dim");
  lm_config.layers = config.get_int("lm.layers");
  PretrainConfig pre;
  pre.epochs = config.get_int("lm.epochs");
  pre.batch_size = config.get_int("lm.batch_size");
  pre.window = config.get_int("lm.window");
  pre.learning_rate = config.get_double("lm.learning_rate");
  pre.seed = config.seed();
  ad::ParameterStore store;
  Rng rng(mix_seed(pre.seed, 7));
  CharLM lm(store, "lm", vocab.size(), lm_config, rng);
  PretrainReport report = lm_pretrain(lm, store, corpus, vocab, pre);
  if (!out.empty()) save_checkpoint(attnhtr::snapshot(store, vocab, config, pre.epochs), out);
  return report;
}

void export_attention(const Recognizer& model, const std::vector<WordSample>& samples, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream summary(out_dir / "summary.tsv");
  require(static_cast<bool>(summary), ErrorCode::IoError, "cannot write " + (out_dir / "summary.tsv").string());
  summary << "index\tid\thypothesis\tsteps\tgrid\n";
  const int height = model.config().encoder.input_height;
  const int stride = model.encoder().horizontal_stride();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const GrayImage original = samples[i].load();
    const GrayImage input = original.height == height ? original : resize_to_height(original, height);
    const Decoded d = model.decode(input);
    char prefix[32];
    std::snprintf(prefix, sizeof(prefix), "%04zu_", i);
    const std::string base = prefix + samples[i].image_path.stem().string();

    const fs::path grid = out_dir / (base + ".csv");
    std::ofstream csv(grid);
    require(static_cast<bool>(csv), ErrorCode::IoError, "cannot write " + grid.string());
    for (Eigen::Index t = 0; t < d.attention.rows(); ++t) {
      for (Eigen::Index j = 0; j < d.attention.cols(); ++j) {
        char cell[32];
        std::snprintf(cell, sizeof(cell), "%.9g", d.attention(t, j));
        csv << (j > 0 ? "," : "") << cell;
      }
      csv << "\n";
    }
    require(static_cast<bool>(csv), ErrorCode::IoError, "failed writing " + grid.string());

    const Eigen::Index n = d.attention.cols();
    for (Eigen::Index t = 0; t < d.attention.rows(); ++t) {
      const double peak = std::max(d.attention.row(t).maxCoeff(), 1e-12);
      GrayImage heat(input.height, input.width, 0.0f);
      for (int x = 0; x < input.width; ++x) {
        const Eigen::Index col = std::min<Eigen::Index>(x / stride, n - 1);
        const float v = static_cast<float>(d.attention(t, col) / peak);
        for (int y = 0; y < input.height; ++y) heat.at(y, x) = v;
      }
      if (heat.height != original.height || heat.width != original.width) {
        heat = resize(heat, original.height, original.width);
      }
      char name[48];
      std::snprintf(name, sizeof(name), "_step%03d.png", static_cast<int>(t));
      save_heat_overlay(original, heat, out_dir / (base + name));
    }
    summary << i << '\t' << samples[i].id << '\t' << d.text << '\t' << d.attention.rows() << '\t'
            << grid.filename().string() << '\n';
  }
  require(static_cast<bool>(summary), ErrorCode::IoError, "failed writing summary.tsv");
}

}  // namespace attnhtr
