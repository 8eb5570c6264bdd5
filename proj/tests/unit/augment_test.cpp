#include <gtest/gtest.h>

#include <cmath>

#include "attnhtr/augment.hpp"
#include "attnhtr/error.hpp"
#include "attnhtr/synthgen.hpp"
#include "test_support.hpp"

using namespace attnhtr;

namespace {

GrayImage word_image() {
  return render_word("augment", testkit::test_fonts().fonts.front(), 48, 3);
}

GrayImage gradient_image(int h, int w) {
  GrayImage img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>((x + 2 * y) % 7) / 6.0f;
  }
  return img;
}

bool in_unit_range(const GrayImage& img) {
  for (float v : img.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) return false;
  }
  return true;
}

}  // namespace

TEST(Augment, DeterministicUnderSeed) {
  const GrayImage img = word_image();
  AugmentConfig cfg;
  cfg.apply_probability = 1.0;
  const GrayImage a = apply_pipeline(img, cfg, 7);
  const GrayImage b = apply_pipeline(img, cfg, 7);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, img);
  EXPECT_NE(apply_pipeline(img, cfg, 8), a);
}

TEST(Augment, NeutralConfigurationIsExactIdentity) {
  const GrayImage img = word_image();
  const AugmentConfig cfg = AugmentConfig::neutral(1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(apply_pipeline(img, cfg, seed), img);
}

TEST(Augment, ApplyProbabilityMatchesBinomial) {
  const GrayImage img = gradient_image(6, 10);
  AugmentConfig cfg;
  cfg.apply_probability = 0.5;
  cfg.gamma = {1.5, 2.0};  // every applied draw changes the image
  int changed = 0;
  const int calls = 10000;
  for (int i = 0; i < calls; ++i) {
    if (!(apply_pipeline(img, cfg, static_cast<std::uint64_t>(i)) == img)) ++changed;
  }
  const double fraction = static_cast<double>(changed) / calls;
  EXPECT_NEAR(fraction, 0.5, 3.0 * std::sqrt(0.25 / calls));
}

TEST(Augment, OutputsStayInRangeAndKeepSize) {
  const GrayImage img = word_image();
  AugmentConfig cfg;
  cfg.apply_probability = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GrayImage out = apply_pipeline(img, cfg, seed);
    EXPECT_EQ(out.height, img.height);
    EXPECT_EQ(out.width, img.width);
    EXPECT_TRUE(in_unit_range(out));
  }
}

TEST(Augment, ValidateRejectsBadRanges) {
  AugmentConfig cfg;
  cfg.blur_sigma = {1.0, 0.5};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = AugmentConfig{};
  cfg.rotation_deg = {-40.0, 40.0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = AugmentConfig{};
  cfg.apply_probability = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = AugmentConfig{};
  cfg.elastic_cells_x = 0;
  EXPECT_THROW(apply_pipeline(word_image(), cfg, 1), Error);
  EXPECT_NO_THROW(AugmentConfig{}.validate());
}

TEST(Elastic, ZeroMagnitudeIsIdentity) {
  const GrayImage img = word_image();
  EXPECT_EQ(elastic_transform(img, 4, 4, 0.0, 9), img);
}

TEST(Elastic, UniformDisplacementIsTranslation) {
  const GrayImage img = gradient_image(12, 20);
  DisplacementGrid grid;
  grid.cells_x = 3;
  grid.cells_y = 2;
  grid.dx.assign(12, 1.25);
  grid.dy.assign(12, -0.5);
  const DisplacementField field = dense_displacement(grid, img.height, img.width);
  const GrayImage out = warp(img, field);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      EXPECT_NEAR(out.at(y, x), sample_bilinear(img, x - 1.25, y + 0.5), 1e-6);
    }
  }
}

TEST(Elastic, DenseDisplacementBoundedByMagnitude) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DisplacementGrid grid = random_grid(4, 3, 2.0, seed);
    for (std::size_t i = 0; i < grid.dx.size(); ++i) {
      EXPECT_LE(std::abs(grid.dx[i]), 2.0);
      EXPECT_LE(std::abs(grid.dy[i]), 2.0);
    }
    const DisplacementField f = dense_displacement(grid, 30, 50);
    for (std::size_t i = 0; i < f.dx.size(); ++i) {
      EXPECT_LE(std::abs(f.dx[i]), 2.0 + 1e-12);
      EXPECT_LE(std::abs(f.dy[i]), 2.0 + 1e-12);
    }
  }
}

TEST(Affine, IdentityParameters) {
  const GrayImage img = word_image();
  EXPECT_EQ(affine_transform(img, 0.0, 0.0, 0.0, 0.0, 1.0), img);
}

TEST(Affine, QuarterTurnPermutesTwoByTwo) {
  GrayImage img(2, 2);
  img.at(0, 0) = 0.1f;  // a
  img.at(0, 1) = 0.2f;  // b
  img.at(1, 0) = 0.3f;  // c
  img.at(1, 1) = 0.4f;  // d
  const GrayImage out = affine_transform(img, 0.0, 90.0, 0.0, 0.0, 1.0);
  // Counter-clockwise: [[a, b], [c, d]] -> [[b, d], [a, c]].
  EXPECT_NEAR(out.at(0, 0), 0.2f, 1e-5);
  EXPECT_NEAR(out.at(0, 1), 0.4f, 1e-5);
  EXPECT_NEAR(out.at(1, 0), 0.1f, 1e-5);
  EXPECT_NEAR(out.at(1, 1), 0.3f, 1e-5);
}

TEST(Affine, ShearThenInverseShear) {
  const GrayImage img = word_image();
  const GrayImage there = affine_transform(img, 10.0, 0.0, 0.0, 0.0, 1.0);
  const GrayImage back = affine_transform(there, -10.0, 0.0, 0.0, 0.0, 1.0);
  EXPECT_GT(mean_abs_diff(there, img), 0.0);
  EXPECT_LT(mean_abs_diff(back, img), 0.02);
}

TEST(Affine, NonPositiveScaleFails) {
  const GrayImage img = word_image();
  try {
    affine_transform(img, 0.0, 0.0, 0.0, 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(Photometric, NeutralParameters) {
  const GrayImage img = word_image();
  const GrayImage bg = background_texture(img.height, img.width, 4);
  EXPECT_EQ(photometric_transform(img, 1.0, 0.0, 0.0, bg, 0.0), img);
}

TEST(Photometric, GammaPowerLaw) {
  GrayImage img(1, 1, 0.5f);
  const GrayImage bg(1, 1, 1.0f);
  EXPECT_NEAR(photometric_transform(img, 2.0, 0.0, 0.0, bg, 0.0).at(0, 0), 0.25f, 1e-6);
  EXPECT_NEAR(gamma_correct(img, 2.0).at(0, 0), 0.25f, 1e-6);
}

TEST(Photometric, FullBlendGivesBackground) {
  const GrayImage img = word_image();
  const GrayImage bg = background_texture(img.height, img.width, 4);
  const GrayImage out = photometric_transform(img, 1.3, 0.5, 0.0, bg, 1.0);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], bg.pixels[i], 1e-6);
}

TEST(Photometric, InvalidParametersFail) {
  const GrayImage img(4, 4, 0.5f);
  const GrayImage bg(4, 4, 1.0f);
  EXPECT_THROW(photometric_transform(img, 0.0, 0.0, 0.0, bg, 0.0), Error);
  EXPECT_THROW(photometric_transform(img, 1.0, 0.0, 0.0, bg, 1.5), Error);
}

TEST(Photometric, BlurAndSharpenStayInRange) {
  const GrayImage img = word_image();
  EXPECT_TRUE(in_unit_range(gaussian_blur(img, 1.5)));
  EXPECT_TRUE(in_unit_range(sharpen(img, 2.0)));
  EXPECT_EQ(gaussian_blur(img, 0.0), img);
  EXPECT_EQ(sharpen(img, 0.0), img);
}
