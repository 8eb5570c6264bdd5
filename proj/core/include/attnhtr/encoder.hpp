#pragma once

#include <span>
#include <string>
#include <vector>

#include "attnhtr/autodiff.hpp"
#include "attnhtr/image.hpp"
#include "attnhtr/nn.hpp"

namespace attnhtr {

enum class PositionalMode { PositionalEncoding, Recurrent };

struct EncoderConfig {
  // "small" (6 conv / 4 pool), "vgg19bn" (VGG19 feature stack with batch
  // norm, final pool dropped), or a custom layer string such as "c16-p2-c32-p2x1",
  // where cN is a 3x3 conv with N filters (cNkK for a KxK kernel) and pH /
  // pHxW is a max pool.
  std::string backbone = "small";
  PositionalMode positional_mode = PositionalMode::Recurrent;
  int feature_dim = 256;
  int recurrent_layers = 2;
  double dropout = 0.5;
  int input_height = 64;
  // Batch norm after every conv; "vgg19bn" always uses it.
  bool batch_norm = true;
};

// One layer of a convolutional backbone.
struct BackboneLayer {
  enum class Kind { Conv, Pool } kind = Kind::Conv;
  int filters = 0;
  int kernel = 3;
  int pool_h = 2;
  int pool_w = 2;
};

std::vector<BackboneLayer> parse_backbone(const std::string& spec);

// Network input for a batch: rows are images flattened row-major, already
// inverted (ink = 1, background = 0) and right-padded to a common width.
struct ImageBatch {
  ad::Matrix pixels;
  int height = 0;
  int width = 0;
  std::vector<int> widths;  // per-image width before batch padding

  int size() const { return static_cast<int>(widths.size()); }
};

// Resizes to `height` (aspect preserved), pads every image to a multiple
// of `width_multiple` and then to the batch maximum with background.
ImageBatch collate_images(std::span<const GrayImage> images, int height, int width_multiple);

// Encoder output. features is (B*N x D): row b*N + i is h_i of image b.
// Rows at i >= lengths[b] come from padding and must be masked.
struct FeatureBatch {
  ad::Var features;
  int steps = 0;
  std::vector<int> lengths;

  int batch() const { return static_cast<int>(lengths.size()); }
  // 0 for valid positions, -infinity for padding; (B x N).
  ad::Matrix energy_mask() const;
};

// A single encoded image (N x D).
struct FeatureSequence {
  ad::Matrix vectors;

  int length() const { return static_cast<int>(vectors.rows()); }
};

// Sinusoidal table PE(pos, 2i) = sin(pos / 10000^(2i/d)),
// PE(pos, 2i+1) = cos(pos / 10000^(2i/d)). Throws OddFeatureDim.
ad::Matrix positional_table(int length, int dim);
FeatureSequence positional_encode(const FeatureSequence& seq);

class Encoder {
 public:
  Encoder(const EncoderConfig& config, ad::ParameterStore& store, Rng& rng,
          const std::string& prefix = "encoder");

  // Dropout is active only when training and rng is provided.
  FeatureBatch forward(ad::Tape& tape, const ImageBatch& batch, bool training, Rng* rng) const;

  // Evaluation-mode encoding of one image whose height equals the
  // configured input height. Throws ImageTooNarrow.
  FeatureSequence encode(const GrayImage& image) const;

  // Number of feature vectors produced for an input of this width.
  int output_length(int width) const;
  int horizontal_stride() const;
  int min_width() const;
  int feature_dim() const { return config_.feature_dim; }
  const EncoderConfig& config() const { return config_; }

 private:
  struct ConvBlock {
    ad::Parameter* weight = nullptr;
    ad::Parameter* bias = nullptr;
    nn::BatchNorm norm;
    bool has_norm = false;
  };

  ad::Var run_recurrent(ad::Tape& tape, ad::Var features, const FeatureBatch& shape, bool training,
                        Rng* rng) const;

  EncoderConfig config_;
  std::vector<BackboneLayer> layers_;
  std::vector<ConvBlock> convs_;
  int collapsed_dim_ = 0;
  int out_height_ = 0;
  nn::Linear projection_;
  std::vector<nn::GruCell> forward_cells_;
  std::vector<nn::GruCell> backward_cells_;
};

}  // namespace attnhtr
