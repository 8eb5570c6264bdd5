#pragma once

// Training, evaluation and attention export on top of the recognizer.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "attnhtr/augment.hpp"
#include "attnhtr/checkpoint.hpp"
#include "attnhtr/config.hpp"
#include "attnhtr/lexicon.hpp"
#include "attnhtr/manifest.hpp"
#include "attnhtr/metrics.hpp"
#include "attnhtr/recognizer.hpp"

namespace attnhtr {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 32;
  int epochs = 100;
  int patience = 20;
  int valid_every = 1;
  double clip_norm = 0.0;
  // Stop once validation CER drops to this value; negative disables it.
  double target_cer = -1.0;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path lm_checkpoint;

  static TrainConfig from(const Config& config);
};

AugmentConfig augment_config_from(const Config& config);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_cer = -1.0;  // -1 when not evaluated this epoch
  double valid_wer = -1.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double best_valid_cer = -1.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::filesystem::path best_checkpoint;  // empty when nothing was written
  std::filesystem::path last_checkpoint;
};

// In-memory data: images already decoded.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<GrayImage> images;
  std::vector<std::string> transcriptions;

  std::size_t size() const { return images.size(); }
  static Dataset load(const std::vector<WordSample>& samples);
};

class Trainer {
 public:
  // Builds the model from `config`. When `init` is given its vocabulary is
  // reused and its tensors copied (shape changes copy the overlapping
  // block); otherwise the vocabulary comes from the training labels.
  // Throws VocabularyMismatch if the vocabulary cannot encode every label.
  Trainer(const Config& config, const Dataset& train, const Checkpoint* init = nullptr);

  TrainResult fit(const Dataset& train, const Dataset& valid);
  // One pass over the training data; returns the mean token loss.
  double train_epoch(const Dataset& train, int epoch);

  Recognizer& model() { return *model_; }
  const Config& config() const { return config_; }
  Checkpoint snapshot(int epoch) const;

 private:
  Config config_;
  TrainConfig train_;
  std::unique_ptr<Recognizer> model_;
  Adam adam_;
  int start_epoch_ = 0;
};

// Rebuilds a recognizer from a checkpoint (strict tensor restore).
std::unique_ptr<Recognizer> load_recognizer(const Checkpoint& checkpoint);

// Greedy transcription of every sample, batched in dataset order.
std::vector<Decoded> transcribe(const Recognizer& model, const Dataset& data, int batch_size = 32);

MetricsReport evaluate(const Recognizer& model, const Dataset& data, const Lexicon* lexicon = nullptr,
                       int batch_size = 32);

TrainResult train(const Config& config, const std::vector<WordSample>& train_samples,
                  const std::vector<WordSample>& valid_samples, const std::optional<std::filesystem::path>& init = {});

// Language model pretraining driven by the lm.* keys; writes a checkpoint
// holding the lm.* tensors and the vocabulary.
PretrainReport pretrain_language_model(const Config& config, const std::vector<std::string>& corpus,
                                       const Vocabulary& vocab, const std::filesystem::path& out);

// Per sample: <out>/<index>_<stem>.csv with one row per decoding step and
// one column per feature position, plus <out>/<index>_<stem>_step<t>.png
// overlays of each mask on the input image, and <out>/summary.tsv.
void export_attention(const Recognizer& model, const std::vector<WordSample>& samples,
                      const std::filesystem::path& out_dir);

}  // namespace attnhtr
