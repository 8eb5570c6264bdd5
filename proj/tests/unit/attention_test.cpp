#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "attnhtr/attention.hpp"
#include "attnhtr/error.hpp"
#include "attnhtr/nn.hpp"
#include "test_support.hpp"

using namespace attnhtr;
using ad::Matrix;

namespace {

constexpr int kFeat = 8;
constexpr int kSteps = 5;
constexpr int kState = 6;

struct Fixture {
  ad::ParameterStore store;
  Attention attn;
  Fixture(AttentionKind kind, std::uint64_t seed = 1) {
    Rng rng(seed);
    AttentionConfig cfg;
    cfg.kind = kind;
    cfg.attn_dim = 4;
    cfg.kernel = 3;
    cfg.filters = 2;
    attn = Attention(store, "attention", kFeat, kState, cfg, rng);
    store.get("attention.b").value = nn::uniform_matrix(1, 4, 0.5, rng);
  }
};

Matrix random(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double bound = 1.0) {
  Rng rng(seed);
  return nn::uniform_matrix(r, c, bound, rng);
}

}  // namespace

TEST(Attention, ZeroOutputVectorGivesZeroEnergies) {
  Fixture f(AttentionKind::Content);
  f.attn.w().value.setZero();
  ad::Tape t(false);
  auto keys = f.attn.keys(t, t.constant(random(2 * kSteps, kFeat, 2)), kSteps);
  ad::Var e = f.attn.score_content(t, keys, t.constant(random(2, kState, 3)));
  EXPECT_EQ(e.rows(), 2);
  EXPECT_EQ(e.cols(), kSteps);
  EXPECT_EQ(e.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Attention, EqualFeaturesGiveEqualEnergies) {
  Fixture f(AttentionKind::Content);
  ad::Tape t(false);
  const Matrix h = random(1, kFeat, 4).replicate(kSteps, 1);
  auto keys = f.attn.keys(t, t.constant(h), kSteps);
  ad::Var e = f.attn.score_content(t, keys, t.constant(random(1, kState, 5)));
  for (int i = 1; i < kSteps; ++i) EXPECT_EQ(e.value()(0, i), e.value()(0, 0));
}

TEST(Attention, DimensionMismatchIsReported) {
  Fixture f(AttentionKind::Location);
  ad::Tape t(false);
  EXPECT_THROW(f.attn.keys(t, t.constant(random(kSteps, kFeat + 1, 1)), kSteps), Error);
  auto keys = f.attn.keys(t, t.constant(random(kSteps, kFeat, 1)), kSteps);
  try {
    f.attn.score_content(t, keys, t.constant(random(1, kState + 2, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(f.attn.score_location(t, keys, t.constant(random(1, kState, 2)),
                                     t.constant(Matrix::Constant(1, kSteps + 1, 0.2))),
               Error);
}

TEST(Attention, ZeroLocationKernelMatchesContentScoring) {
  Fixture f(AttentionKind::Location);
  f.attn.F().value.setZero();
  ad::Tape t(false);
  auto keys = f.attn.keys(t, t.constant(random(2 * kSteps, kFeat, 6)), kSteps);
  ad::Var s = t.constant(random(2, kState, 7));
  Matrix prev = ad::softmax(random(2, kSteps, 8, 3.0));
  ad::Var loc = f.attn.score_location(t, keys, s, t.constant(prev));
  ad::Var con = f.attn.score_content(t, keys, s);
  EXPECT_EQ(loc.value(), con.value());
}

TEST(Attention, CentredUnitKernelReproducesOneHotMask) {
  for (int i = 0; i < kSteps; ++i) {
    ad::Tape t(false);
    Matrix alpha = Matrix::Zero(1, kSteps);
    alpha(0, i) = 1.0;
    Matrix kernel = Matrix::Zero(3, 1);
    kernel(1, 0) = 1.0;
    const Matrix l = ad::location_conv(t.constant(alpha), t.constant(kernel)).value();
    for (int j = 0; j < kSteps; ++j) EXPECT_EQ(l(j, 0), j == i ? 1.0 : 0.0);
  }
}

TEST(Attention, UniformEnergiesGiveUniformMaskAndMeanContext) {
  ad::Tape t(false);
  const Matrix h = random(4, 3, 9);
  AttentionStep step = attend(t.constant(Matrix::Constant(1, 4, 0.7)), Matrix(), t.constant(h));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(step.weights.value()(0, i), 0.25, 1e-15);
  const Matrix mean = h.colwise().mean();
  EXPECT_LT((step.context.value() - mean).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, PeakedEnergiesByHand) {
  ad::Tape t(false);
  Matrix e(1, 3);
  e << 10, 0, 0;
  AttentionStep step = attend(t.constant(e), Matrix(), t.constant(Matrix::Identity(3, 3)));
  const double expected = std::exp(10.0) / (std::exp(10.0) + 2.0);
  EXPECT_NEAR(step.weights.value()(0, 0), expected, 1e-12);
  EXPECT_NEAR(step.weights.value()(0, 0), 0.99991, 1e-5);
}

TEST(Attention, MaskedPositionsGetZeroWeight) {
  ad::Tape t(false);
  Matrix mask = Matrix::Zero(1, 4);
  mask(0, 3) = -std::numeric_limits<double>::infinity();
  AttentionStep step = attend(t.constant(Matrix::Constant(1, 4, 1.0)), mask, t.constant(random(4, 2, 1)));
  EXPECT_EQ(step.weights.value()(0, 3), 0.0);
  EXPECT_NEAR(step.weights.value()(0, 0), 1.0 / 3.0, 1e-15);
}

TEST(Attention, InitialWeightsAreUniformOverValidPositions) {
  FeatureBatch fb;
  fb.steps = 4;
  fb.lengths = {4, 2};
  const Matrix a = initial_weights(fb);
  EXPECT_EQ(a(0, 0), 0.25);
  EXPECT_EQ(a(1, 1), 0.5);
  EXPECT_EQ(a(1, 2), 0.0);
}

TEST(Attention, SimplexHullAndShiftInvariance) {
  Fixture f(AttentionKind::Location, 3);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ad::Tape t(false);
    const Matrix h = nn::uniform_matrix(kSteps, kFeat, 2.0, rng);
    auto keys = f.attn.keys(t, t.constant(h), kSteps);
    ad::Var s = t.constant(nn::uniform_matrix(1, kState, 2.0, rng));
    ad::Var e = f.attn.score(t, keys, s, t.constant(ad::softmax(nn::uniform_matrix(1, kSteps, 3.0, rng))));
    AttentionStep step = attend(e, Matrix(), keys.values);
    const Matrix& a = step.weights.value();
    EXPECT_NEAR(a.sum(), 1.0, 1e-6);
    EXPECT_GE(a.minCoeff(), 0.0);
    for (int j = 0; j < kFeat; ++j) {
      EXPECT_GE(step.context.value()(0, j), h.col(j).minCoeff() - 1e-12);
      EXPECT_LE(step.context.value()(0, j), h.col(j).maxCoeff() + 1e-12);
    }
    const double shift = uniform(rng, -50.0, 50.0);
    AttentionStep shifted =
        attend(t.constant(e.value().array() + shift), Matrix(), keys.values);
    EXPECT_LT((shifted.weights.value() - a).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Attention, ContentGradients) {
  Fixture f(AttentionKind::Content);
  ad::ParameterStore inputs;
  ad::Parameter& h = inputs.create("h", random(2 * kSteps, kFeat, 20));
  ad::Parameter& s = inputs.create("s", random(2, kState, 21));
  const Matrix proj = random(2, kFeat, 22);
  auto loss = [&](ad::Tape& t) {
    auto keys = f.attn.keys(t, t.param(h), kSteps);
    ad::Var e = f.attn.score_content(t, keys, t.param(s));
    AttentionStep step = attend(e, Matrix(), keys.values);
    return ad::sum(ad::mul(step.context, t.constant(proj)));
  };
  const auto checks = testkit::gradient_check(
      {&f.attn.w(), &f.attn.W(), &f.attn.V(), &f.attn.b(), &h, &s}, loss);
  for (const auto& c : checks) EXPECT_LT(c.relative_error, 1e-5) << c.name;
}

TEST(Attention, LocationGradients) {
  Fixture f(AttentionKind::Location);
  ad::ParameterStore inputs;
  ad::Parameter& h = inputs.create("h", random(2 * kSteps, kFeat, 30));
  ad::Parameter& s = inputs.create("s", random(2, kState, 31));
  ad::Parameter& prev = inputs.create("prev_energies", random(2, kSteps, 32, 2.0));
  const Matrix proj = random(2, kSteps, 33);
  auto loss = [&](ad::Tape& t) {
    auto keys = f.attn.keys(t, t.param(h), kSteps);
    ad::Var alpha_prev = ad::softmax_rows(t.param(prev));
    ad::Var e = f.attn.score_location(t, keys, t.param(s), alpha_prev);
    return ad::sum(ad::mul(e, t.constant(proj)));
  };
  const auto checks = testkit::gradient_check(
      {&f.attn.w(), &f.attn.W(), &f.attn.V(), &f.attn.b(), &f.attn.U(), &f.attn.F(), &h, &s, &prev}, loss);
  for (const auto& c : checks) EXPECT_LT(c.relative_error, 1e-5) << c.name;
}
