#include "attnhtr/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "attnhtr/error.hpp"

namespace attnhtr {

namespace {

constexpr const char* kSmallBackbone = "c16-p2-c32-p2-c64-c64-p2-c128-c128-p2";
// VGG19 feature configuration without its fifth pool, so the horizontal
// stride stays at 16 like the small stack.
constexpr const char* kVgg19Backbone =
    "c64-c64-p2-c128-c128-p2-c256-c256-c256-c256-p2-c512-c512-c512-c512-p2-c512-c512-c512-c512";

int parse_int(const std::string& text, std::size_t& pos, const std::string& spec) {
  std::size_t start = pos;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  require(pos > start, ErrorCode::InvalidConfig, "bad backbone string '" + spec + "'");
  return std::stoi(text.substr(start, pos - start));
}

}  // namespace

std::vector<BackboneLayer> parse_backbone(const std::string& spec) {
  std::string text = spec;
  if (spec == "small") text = kSmallBackbone;
  if (spec == "vgg19bn") text = kVgg19Backbone;
  std::vector<BackboneLayer> layers;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, '-')) {
    if (token.empty()) continue;
    BackboneLayer layer;
    std::size_t pos = 1;
    if (token[0] == 'c') {
      layer.kind = BackboneLayer::Kind::Conv;
      layer.filters = parse_int(token, pos, spec);
      if (pos < token.size() && token[pos] == 'k') {
        ++pos;
        layer.kernel = parse_int(token, pos, spec);
      }
      require(layer.filters > 0 && layer.kernel % 2 == 1, ErrorCode::InvalidConfig,
              "conv layers need filters > 0 and an odd kernel: '" + token + "'");
    } else if (token[0] == 'p') {
      layer.kind = BackboneLayer::Kind::Pool;
      layer.pool_h = parse_int(token, pos, spec);
      layer.pool_w = layer.pool_h;
      if (pos < token.size() && token[pos] == 'x') {
        ++pos;
        layer.pool_w = parse_int(token, pos, spec);
      }
      require(layer.pool_h >= 1 && layer.pool_w >= 1, ErrorCode::InvalidConfig,
              "pool sizes must be >= 1: '" + token + "'");
    } else {
      fail(ErrorCode::InvalidConfig, "bad backbone token '" + token + "' in '" + spec + "'");
    }
    require(pos == token.size(), ErrorCode::InvalidConfig, "bad backbone token '" + token + "'");
    layers.push_back(layer);
  }
  require(!layers.empty(), ErrorCode::InvalidConfig, "empty backbone string");
  return layers;
}

ImageBatch collate_images(std::span<const GrayImage> images, int height, int width_multiple) {
  require(!images.empty(), ErrorCode::InvalidConfig, "cannot collate an empty batch");
  std::vector<GrayImage> prepared;
  prepared.reserve(images.size());
  ImageBatch batch;
  batch.height = height;
  for (const GrayImage& img : images) {
    require(!img.empty(), ErrorCode::InvalidConfig, "empty image in batch");
    GrayImage p = img.height == height ? img : resize_to_height(img, height);
    const int w = ((p.width + width_multiple - 1) / width_multiple) * width_multiple;
    p = pad_right(p, w);
    batch.widths.push_back(p.width);
    batch.width = std::max(batch.width, p.width);
    prepared.push_back(std::move(p));
  }
  batch.pixels = ad::Matrix::Zero(static_cast<Eigen::Index>(prepared.size()),
                                  static_cast<Eigen::Index>(height) * batch.width);
  for (std::size_t b = 0; b < prepared.size(); ++b) {
    const GrayImage& p = prepared[b];
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        batch.pixels(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(y) * batch.width + x) =
            1.0 - p.at(y, x);
      }
    }
  }
  return batch;
}

ad::Matrix FeatureBatch::energy_mask() const {
  ad::Matrix mask = ad::Matrix::Zero(batch(), steps);
  for (int b = 0; b < batch(); ++b) {
    for (int i = lengths[static_cast<std::size_t>(b)]; i < steps; ++i) {
      mask(b, i) = -std::numeric_limits<double>::infinity();
    }
  }
  return mask;
}

ad::Matrix positional_table(int length, int dim) {
  require(dim % 2 == 0, ErrorCode::OddFeatureDim,
          "positional encoding needs an even feature dimension, got " + std::to_string(dim));
  ad::Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * i) / dim);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

FeatureSequence positional_encode(const FeatureSequence& seq) {
  FeatureSequence out = seq;
  out.vectors += positional_table(seq.length(), static_cast<int>(seq.vectors.cols()));
  return out;
}

Encoder::Encoder(const EncoderConfig& config, ad::ParameterStore& store, Rng& rng,
                 const std::string& prefix)
    : config_(config), layers_(parse_backbone(config.backbone)) {
  require(config.feature_dim > 0, ErrorCode::InvalidConfig, "feature_dim must be positive");
  require(config.dropout >= 0.0 && config.dropout < 1.0, ErrorCode::InvalidConfig,
          "encoder dropout must be in [0, 1)");
  require(config.input_height >= 1, ErrorCode::InvalidConfig, "input_height must be positive");
  if (config.positional_mode == PositionalMode::PositionalEncoding) {
    require(config.feature_dim % 2 == 0, ErrorCode::OddFeatureDim,
            "positional encoding needs an even feature_dim");
  }
  const bool norm = config.batch_norm || config.backbone == "vgg19bn";
  int channels = 1;
  int height = config.input_height;
  int conv_index = 0;
  for (const BackboneLayer& layer : layers_) {
    if (layer.kind == BackboneLayer::Kind::Conv) {
      ConvBlock block;
      const std::string name = prefix + ".conv" + std::to_string(conv_index);
      const int fan_in = channels * layer.kernel * layer.kernel;
      block.weight = &store.create(name + ".weight",
                                   nn::uniform_matrix(layer.filters, fan_in, std::sqrt(6.0 / fan_in), rng));
      block.bias = &store.create(name + ".bias", ad::Matrix::Zero(1, layer.filters));
      if (norm) {
        block.norm = nn::BatchNorm(store, prefix + ".bn" + std::to_string(conv_index), layer.filters);
        block.has_norm = true;
      }
      convs_.push_back(block);
      channels = layer.filters;
      ++conv_index;
    } else {
      height /= layer.pool_h;
      require(height >= 1, ErrorCode::InvalidConfig,
              "backbone pools more rows than input_height provides");
    }
  }
  out_height_ = height;
  collapsed_dim_ = channels * height;
  projection_ = nn::Linear(store, prefix + ".projection", collapsed_dim_, config.feature_dim, rng);
  if (config.positional_mode == PositionalMode::Recurrent) {
    require(config.recurrent_layers >= 1, ErrorCode::InvalidConfig, "recurrent_layers must be >= 1");
    for (int l = 0; l < config.recurrent_layers; ++l) {
      const std::string name = prefix + ".rnn" + std::to_string(l);
      forward_cells_.emplace_back(store, name + ".fwd", config.feature_dim, config.feature_dim, rng);
      backward_cells_.emplace_back(store, name + ".bwd", config.feature_dim, config.feature_dim, rng);
    }
  }
}

int Encoder::output_length(int width) const {
  int w = width;
  for (const BackboneLayer& layer : layers_) {
    if (layer.kind == BackboneLayer::Kind::Pool) w /= layer.pool_w;
  }
  return w;
}

int Encoder::horizontal_stride() const {
  int s = 1;
  for (const BackboneLayer& layer : layers_) {
    if (layer.kind == BackboneLayer::Kind::Pool) s *= layer.pool_w;
  }
  return s;
}

int Encoder::min_width() const {
  int w = 1;
  while (output_length(w) < 1) ++w;
  return w;
}

FeatureBatch Encoder::forward(ad::Tape& tape, const ImageBatch& batch, bool training, Rng* rng) const {
  require(batch.height == config_.input_height, ErrorCode::DimensionMismatch,
          "image height " + std::to_string(batch.height) + " does not match input_height " +
              std::to_string(config_.input_height));
  ad::MapShape shape{1, batch.height, batch.width};
  ad::Var x = tape.constant(batch.pixels);
  std::size_t conv = 0;
  for (const BackboneLayer& layer : layers_) {
    if (layer.kind == BackboneLayer::Kind::Conv) {
      const ConvBlock& block = convs_[conv++];
      x = ad::conv2d(x, shape, tape.param(*block.weight), tape.param(*block.bias), layer.kernel);
      shape.channels = layer.filters;
      if (block.has_norm) x = block.norm.forward(tape, x, shape.height * shape.width, training);
      x = ad::relu(x);
    } else {
      require(shape.width / layer.pool_w >= 1, ErrorCode::ImageTooNarrow,
              "batch width " + std::to_string(batch.width) + " is below the minimum " +
                  std::to_string(min_width()));
      x = ad::max_pool2d(x, shape, layer.pool_h, layer.pool_w);
      shape.height /= layer.pool_h;
      shape.width /= layer.pool_w;
    }
  }
  FeatureBatch out;
  out.steps = shape.width;
  for (int w : batch.widths) {
    const int n = output_length(w);
    require(n >= 1, ErrorCode::ImageTooNarrow,
            "image width " + std::to_string(w) + " is below the minimum " + std::to_string(min_width()));
    out.lengths.push_back(n);
  }
  ad::Var features = projection_.forward(tape, ad::columns(x, shape));
  if (config_.positional_mode == PositionalMode::PositionalEncoding) {
    const ad::Matrix pe = positional_table(out.steps, config_.feature_dim);
    features = ad::add_const(features, pe.replicate(batch.size(), 1));
  } else {
    features = run_recurrent(tape, features, out, training, rng);
  }
  out.features = features;
  return out;
}

ad::Var Encoder::run_recurrent(ad::Tape& tape, ad::Var features, const FeatureBatch& shape,
                               bool training, Rng* rng) const {
  const int n = shape.steps;
  const int batch = shape.batch();
  const int dim = config_.feature_dim;
  for (std::size_t l = 0; l < forward_cells_.size(); ++l) {
    const nn::GruCell& fwd = forward_cells_[l];
    const nn::GruCell& bwd = backward_cells_[l];
    ad::Var gi_fwd = fwd.project_input(tape, features);
    ad::Var gi_bwd = bwd.project_input(tape, features);
    std::vector<ad::Var> outputs(static_cast<std::size_t>(n));
    ad::Var h = tape.constant(ad::Matrix::Zero(batch, dim));
    for (int i = 0; i < n; ++i) {
      h = fwd.step_projected(tape, ad::select_position(gi_fwd, n, i), h);
      outputs[static_cast<std::size_t>(i)] = h;
    }
    // The backward direction starts at each image's own last column: padded
    // positions leave the state at zero.
    h = tape.constant(ad::Matrix::Zero(batch, dim));
    for (int i = n - 1; i >= 0; --i) {
      ad::Var next = bwd.step_projected(tape, ad::select_position(gi_bwd, n, i), h);
      bool all_valid = true;
      Eigen::VectorXd keep(batch);
      for (int b = 0; b < batch; ++b) {
        keep(b) = i < shape.lengths[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
        all_valid = all_valid && keep(b) == 1.0;
      }
      h = all_valid ? next : ad::add(h, ad::scale_rows(ad::sub(next, h), keep));
      outputs[static_cast<std::size_t>(i)] = ad::add(outputs[static_cast<std::size_t>(i)], h);
    }
    features = ad::stack_positions(outputs);
    if (training && rng != nullptr && config_.dropout > 0.0 && l + 1 < forward_cells_.size()) {
      features = ad::dropout(features, config_.dropout, *rng);
    }
  }
  return features;
}

FeatureSequence Encoder::encode(const GrayImage& image) const {
  require(image.height == config_.input_height, ErrorCode::DimensionMismatch,
          "image height must equal input_height");
  require(image.width >= min_width(), ErrorCode::ImageTooNarrow,
          "image width " + std::to_string(image.width) + " is below the minimum " +
              std::to_string(min_width()));
  ImageBatch batch;
  batch.height = image.height;
  batch.width = image.width;
  batch.widths = {image.width};
  batch.pixels.resize(1, static_cast<Eigen::Index>(image.height) * image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    batch.pixels(0, static_cast<Eigen::Index>(i)) = 1.0 - image.pixels[i];
  }
  ad::Tape tape(false);
  FeatureBatch fb = forward(tape, batch, false, nullptr);
  FeatureSequence seq;
  seq.vectors = fb.features.value().topRows(fb.lengths.front());
  return seq;
}

}  // namespace attnhtr
