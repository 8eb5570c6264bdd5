#include <gtest/gtest.h>

#include <cmath>

#include "attnhtr/encoder.hpp"
#include "attnhtr/error.hpp"
#include "test_support.hpp"

using namespace attnhtr;

namespace {

GrayImage noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(h, w);
  for (float& p : img.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
  return img;
}

EncoderConfig small_config(PositionalMode mode) {
  EncoderConfig cfg;
  cfg.backbone = "c4-p2-c8-p2";
  cfg.input_height = 16;
  cfg.feature_dim = 12;
  cfg.recurrent_layers = 1;
  cfg.positional_mode = mode;
  cfg.dropout = 0.0;
  return cfg;
}

std::vector<ad::Parameter*> trainable(ad::ParameterStore& store) {
  std::vector<ad::Parameter*> out;
  for (ad::Parameter* p : store.all()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Backbone, ParsesPresetsAndCustomSpecs) {
  const auto layers = parse_backbone("c16-p2-c32k5-p2x1");
  ASSERT_EQ(layers.size(), 4u);
  EXPECT_EQ(layers[1].kind, BackboneLayer::Kind::Pool);
  EXPECT_EQ(layers[2].filters, 32);
  EXPECT_EQ(layers[2].kernel, 5);
  EXPECT_EQ(layers[3].pool_h, 2);
  EXPECT_EQ(layers[3].pool_w, 1);
  EXPECT_FALSE(parse_backbone("small").empty());
  const auto vgg = parse_backbone("vgg19bn");
  int convs = 0;
  for (const auto& l : vgg) convs += l.kind == BackboneLayer::Kind::Conv;
  EXPECT_EQ(convs, 16);
  EXPECT_THROW(parse_backbone("c16-q3"), Error);
}

TEST(Encoder, LengthIsMonotoneInWidth) {
  ad::ParameterStore store;
  Rng rng(1);
  Encoder enc(small_config(PositionalMode::Recurrent), store, rng);
  int previous = 0;
  for (int w = enc.min_width(); w < 120; w += 3) {
    const int n = enc.encode(noise_image(16, w, 2)).length();
    EXPECT_EQ(n, enc.output_length(w));
    EXPECT_GE(n, previous);
    previous = n;
  }
}

TEST(Encoder, StrideSixteenOnWidth256GivesSixteenSteps) {
  EncoderConfig cfg = small_config(PositionalMode::PositionalEncoding);
  cfg.backbone = "c4-p2-c4-p2-c4-p2-c4-p2";
  ad::ParameterStore store;
  Rng rng(1);
  Encoder enc(cfg, store, rng);
  EXPECT_EQ(enc.horizontal_stride(), 16);
  EXPECT_EQ(enc.encode(noise_image(16, 256, 3)).length(), 16);
  // The default preset's stride composes from its four 2x2 pools.
  ad::ParameterStore s2;
  EncoderConfig def = cfg;
  def.backbone = "small";
  Encoder small(def, s2, rng);
  EXPECT_EQ(small.horizontal_stride(), 16);
  EXPECT_EQ(small.output_length(256), 16);
}

TEST(Encoder, TooNarrowImageFails) {
  ad::ParameterStore store;
  Rng rng(1);
  Encoder enc(small_config(PositionalMode::Recurrent), store, rng);
  try {
    enc.encode(noise_image(16, enc.min_width() - 1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooNarrow);
  }
}

TEST(Encoder, IdenticalImagesInOneBatchGiveIdenticalRows) {
  for (PositionalMode mode : {PositionalMode::Recurrent, PositionalMode::PositionalEncoding}) {
    ad::ParameterStore store;
    Rng rng(5);
    Encoder enc(small_config(mode), store, rng);
    const GrayImage img = noise_image(16, 44, 9);
    const std::vector<GrayImage> imgs{img, img, img};
    ImageBatch batch = collate_images(imgs, 16, enc.horizontal_stride());
    ad::Tape tape(false);
    FeatureBatch fb = enc.forward(tape, batch, false, nullptr);
    const int n = fb.steps;
    for (int b = 1; b < 3; ++b) {
      const double diff = (fb.features.value().middleRows(b * n, n) - fb.features.value().topRows(n))
                              .cwiseAbs()
                              .maxCoeff();
      EXPECT_LT(diff, 1e-6);
    }
    // Evaluation encoding of the image alone agrees with the batch.
    const FeatureSequence single = enc.encode(img);
    EXPECT_LT((single.vectors - fb.features.value().topRows(n)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Encoder, EvaluationIsDeterministicAndTrainingDropoutIsNot) {
  EncoderConfig cfg = small_config(PositionalMode::Recurrent);
  cfg.recurrent_layers = 2;
  cfg.dropout = 0.5;
  ad::ParameterStore store;
  Rng rng(5);
  Encoder enc(cfg, store, rng);
  const GrayImage img = noise_image(16, 40, 4);
  EXPECT_EQ(enc.encode(img).vectors, enc.encode(img).vectors);
  const std::vector<GrayImage> imgs{img};
  ImageBatch batch = collate_images(imgs, 16, enc.horizontal_stride());
  Rng d1(1);
  Rng d2(2);
  ad::Tape t;
  const ad::Matrix a = enc.forward(t, batch, true, &d1).features.value();
  const ad::Matrix b = enc.forward(t, batch, true, &d2).features.value();
  EXPECT_FALSE(a.isApprox(b));
}

TEST(Encoder, PaddingDoesNotLeakIntoShorterSequences) {
  // Backward recurrence must start at each sample's own last position.
  ad::ParameterStore store;
  Rng rng(5);
  EncoderConfig cfg = small_config(PositionalMode::Recurrent);
  // 1x1 kernels keep the convolutions from reading across the pad boundary.
  cfg.backbone = "c4k1-p2-c8k1-p2";
  Encoder enc(cfg, store, rng);
  const GrayImage short_img = noise_image(16, 24, 1);
  const std::vector<GrayImage> imgs{short_img, noise_image(16, 80, 2)};
  ImageBatch batch = collate_images(imgs, 16, enc.horizontal_stride());
  ad::Tape tape(false);
  FeatureBatch fb = enc.forward(tape, batch, false, nullptr);
  const FeatureSequence alone = enc.encode(short_img);
  ASSERT_EQ(fb.lengths[0], alone.length());
  const int n = alone.length();
  const double diff = (fb.features.value().topRows(n) - alone.vectors).cwiseAbs().maxCoeff();
  EXPECT_LT(diff, 1e-9);
  const ad::Matrix mask = fb.energy_mask();
  EXPECT_EQ(mask(0, fb.lengths[0] - 1), 0.0);
  for (int i = fb.lengths[0]; i < fb.steps; ++i) EXPECT_TRUE(std::isinf(mask(0, i)));
  for (int i = 0; i < fb.steps; ++i) EXPECT_EQ(mask(1, i), 0.0);
}

TEST(PositionalEncoding, PositionZeroIsSinCosOfZero) {
  FeatureSequence zeros{ad::Matrix::Zero(6, 8)};
  const FeatureSequence out = positional_encode(zeros);
  for (int j = 0; j < 8; ++j) EXPECT_EQ(out.vectors(0, j), j % 2 == 0 ? 0.0 : 1.0);
  EXPECT_GT((out.vectors.row(0) - out.vectors.row(1)).cwiseAbs().maxCoeff(), 0.1);
  // Zero features give back exactly the table.
  EXPECT_EQ(out.vectors, positional_table(6, 8));
  EXPECT_NEAR(out.vectors(3, 2), std::sin(3.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-12);
  EXPECT_NEAR(out.vectors(3, 5), std::cos(3.0 / std::pow(10000.0, 4.0 / 8.0)), 1e-12);
}

TEST(PositionalEncoding, IsAdditive) {
  Rng rng(3);
  FeatureSequence seq{nn::uniform_matrix(5, 4, 1.0, rng)};
  const FeatureSequence out = positional_encode(seq);
  EXPECT_LT((out.vectors - seq.vectors - positional_table(5, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PositionalEncoding, OddDimensionFails) {
  FeatureSequence seq{ad::Matrix::Zero(3, 5)};
  try {
    positional_encode(seq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OddFeatureDim);
  }
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  for (PositionalMode mode : {PositionalMode::PositionalEncoding, PositionalMode::Recurrent}) {
    for (bool bn : {false, true}) {
      EncoderConfig cfg;
      cfg.batch_norm = bn;
      cfg.backbone = "c2-p2";
      cfg.input_height = 4;
      cfg.feature_dim = 8;
      cfg.recurrent_layers = 1;
      cfg.dropout = 0.0;
      cfg.positional_mode = mode;
      ad::ParameterStore store;
      Rng rng(7);
      Encoder enc(cfg, store, rng);
      // A zero bias would put the blank padding exactly on the ReLU kink.
      store.get("encoder.conv0.bias").value = nn::uniform_matrix(1, 2, 0.5, rng);
      const std::vector<GrayImage> imgs{noise_image(4, 10, 1), noise_image(4, 6, 2)};
      const ImageBatch batch = collate_images(imgs, 4, enc.horizontal_stride());
      Rng wrng(8);
      ad::Matrix weights;
      auto loss = [&](ad::Tape& t) {
        FeatureBatch fb = enc.forward(t, batch, true, nullptr);
        if (weights.size() == 0) weights = nn::uniform_matrix(fb.features.rows(), fb.features.cols(), 1.0, wrng);
        return ad::sum(ad::mul(fb.features, t.constant(weights)));
      };
      const auto checks = testkit::gradient_check(trainable(store), loss);
      for (const auto& c : checks) {
        if (bn && c.name == "encoder.conv0.bias") {
          // Batch norm subtracts the per-channel mean, so this bias is inert.
          EXPECT_LT(c.analytic_norm, 1e-9);
          EXPECT_LT(c.numeric_norm, 1e-6);
          continue;
        }
        EXPECT_LT(c.relative_error, 1e-5) << c.name;
      }
    }
  }
}
