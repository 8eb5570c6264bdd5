#include <gtest/gtest.h>

#include <cmath>

#include "attnhtr/decoder.hpp"
#include "attnhtr/error.hpp"
#include "attnhtr/recognizer.hpp"
#include "test_support.hpp"

using namespace attnhtr;
using ad::Matrix;

namespace {

constexpr int kVocab = 10;
constexpr int kContext = 8;

DecoderConfig tiny(UnitStyle style, int layers = 2) {
  DecoderConfig cfg;
  cfg.state_dim = 5;
  cfg.layers = layers;
  cfg.embedding_dim = 4;
  cfg.unit_style = style;
  cfg.dropout = 0.0;
  return cfg;
}

Matrix random(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double bound = 1.0) {
  Rng rng(seed);
  return nn::uniform_matrix(r, c, bound, rng);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar GRU update, gate order reset / update / candidate.
std::vector<double> gru_by_hand(const Matrix& w_ih, const Matrix& w_hh, const Matrix& b_ih, const Matrix& b_hh,
                                const std::vector<double>& x, const std::vector<double>& h) {
  const int s = static_cast<int>(h.size());
  auto gate_in = [&](int row) {
    double v = b_ih(0, row);
    for (std::size_t k = 0; k < x.size(); ++k) v += w_ih(row, static_cast<Eigen::Index>(k)) * x[k];
    return v;
  };
  auto gate_h = [&](int row) {
    double v = b_hh(0, row);
    for (int k = 0; k < s; ++k) v += w_hh(row, k) * h[static_cast<std::size_t>(k)];
    return v;
  };
  std::vector<double> out(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) {
    const double r = sigmoid(gate_in(j) + gate_h(j));
    const double z = sigmoid(gate_in(s + j) + gate_h(s + j));
    const double n = std::tanh(gate_in(2 * s + j) + r * gate_h(2 * s + j));
    out[static_cast<std::size_t>(j)] = (1.0 - z) * n + z * h[static_cast<std::size_t>(j)];
  }
  return out;
}

}  // namespace

TEST(Decoder, EmbeddingLookup) {
  ad::ParameterStore store;
  Rng rng(1);
  Decoder dec(store, "decoder", kVocab, kContext, tiny(UnitStyle::Proposed), rng);
  ad::Tape t(false);
  const std::vector<int> go{Vocabulary::kGo};
  ad::Var e1 = dec.embed(t, go);
  ad::Var e2 = dec.embed(t, go);
  EXPECT_EQ(e1.cols(), 4);
  EXPECT_EQ(e1.value(), e2.value());
  EXPECT_EQ(e1.value(), store.get("decoder.embedding.table").value.row(Vocabulary::kGo));
  const std::vector<int> bad{kVocab};
  try {
    dec.embed(t, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(Decoder, StepMatchesScalarGruEquations) {
  ad::ParameterStore store;
  Rng rng(2);
  Decoder dec(store, "decoder", kVocab, kContext, tiny(UnitStyle::Proposed, 1), rng);
  const nn::GruCell& cell = dec.recurrent().cell(0);
  for (bool zero : {true, false}) {
    ad::Tape t(false);
    const Matrix c = zero ? Matrix::Zero(1, kContext) : random(1, kContext, 3);
    const Matrix e = zero ? Matrix::Zero(1, 4) : random(1, 4, 4);
    const Matrix h = zero ? Matrix::Zero(1, 5) : random(1, 5, 5);
    nn::RecurrentState prev{{t.constant(h)}};
    nn::RecurrentState next = dec.step(t, t.constant(c), t.constant(e), prev, false, nullptr);
    std::vector<double> x;
    for (int j = 0; j < kContext; ++j) x.push_back(c(0, j));
    for (int j = 0; j < 4; ++j) x.push_back(e(0, j));
    std::vector<double> hv;
    for (int j = 0; j < 5; ++j) hv.push_back(h(0, j));
    const auto expected =
        gru_by_hand(cell.w_ih().value, cell.w_hh().value, cell.b_ih().value, cell.b_hh().value, x, hv);
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(next.top().value()(0, j), expected[static_cast<std::size_t>(j)], 1e-12);
  }
}

TEST(Decoder, StepIsDeterministicInEvaluation) {
  ad::ParameterStore store;
  Rng rng(3);
  Decoder dec(store, "decoder", kVocab, kContext, tiny(UnitStyle::Proposed), rng);
  ad::Tape t(false);
  ad::Var c = t.constant(random(2, kContext, 1));
  const std::vector<int> y{0, 4};
  ad::Var e = dec.embed(t, y);
  auto a = dec.step(t, c, e, dec.initial_state(t, 2), false, nullptr);
  auto b = dec.step(t, c, e, dec.initial_state(t, 2), false, nullptr);
  for (int l = 0; l < 2; ++l) EXPECT_EQ(a.layers[l].value(), b.layers[l].value());
}

TEST(Decoder, WrongInputWidthFails) {
  ad::ParameterStore store;
  Rng rng(3);
  Decoder dec(store, "decoder", kVocab, kContext, tiny(UnitStyle::Proposed), rng);
  ad::Tape t(false);
  const std::vector<int> y{0};
  try {
    dec.step(t, t.constant(Matrix::Zero(1, kContext - 1)), dec.embed(t, y), dec.initial_state(t, 1), false,
             nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Decoder, ArgmaxTieBreaksLow) {
  Eigen::RowVectorXd a(3);
  a << 0.1, 2.0, -1.0;
  EXPECT_EQ(argmax(a), 1);
  Eigen::RowVectorXd b(2);
  b << 3.0, 3.0;
  EXPECT_EQ(argmax(b), 0);
  Matrix m(2, 3);
  m << 1, 1, 1, 0, 2, 2;
  EXPECT_EQ(argmax_rows(m), (std::vector<int>{0, 1}));
}

TEST(Decoder, BothUnitStylesGiveVocabularyLogitsAndCorrectGradients) {
  for (UnitStyle style : {UnitStyle::Proposed, UnitStyle::Conventional}) {
    ad::ParameterStore store;
    Rng rng(4);
    Decoder dec(store, "decoder", kVocab, kContext, tiny(style), rng);
    const Matrix c1 = random(3, kContext, 10);
    const Matrix c2 = random(3, kContext, 11);
    const std::vector<int> y0{0, 0, 0};
    const std::vector<int> y1{3, 9, 5};
    const std::vector<int> targets1{3, 9, 5};
    const std::vector<int> targets2{1, -1, 7};
    auto loss = [&](ad::Tape& t) {
      auto s = dec.initial_state(t, 3);
      s = dec.step(t, t.constant(c1), dec.embed(t, y0), s, true, nullptr);
      ad::Var l1 = dec.logits(t, s, t.constant(c1));
      s = dec.step(t, t.constant(c2), dec.embed(t, y1), s, true, nullptr);
      ad::Var l2 = dec.logits(t, s, t.constant(c2));
      EXPECT_EQ(l1.cols(), kVocab);
      EXPECT_EQ(l2.rows(), 3);
      return ad::add(ad::smoothed_cross_entropy(l1, targets1, 0.1), ad::smoothed_cross_entropy(l2, targets2, 0.1));
    };
    std::vector<ad::Parameter*> params = store.all();
    // The conventional unit reads the context in its projection.
    EXPECT_EQ(store.get("decoder.output.weight").value.cols(),
              style == UnitStyle::Conventional ? 5 + kContext : 5);
    const auto checks = testkit::gradient_check(params, loss);
    for (const auto& ch : checks) EXPECT_LT(ch.relative_error, 1e-5) << ch.name;
  }
}

namespace {

std::unique_ptr<Recognizer> tiny_recognizer() {
  Config cfg = testkit::tiny_config();
  const std::vector<std::string> words{"abc", "cab"};
  return std::make_unique<Recognizer>(ModelConfig::from(cfg), Vocabulary::build(words), 3);
}

}  // namespace

TEST(GreedyDecode, ImmediateEndGivesEmptyTranscription) {
  auto model = tiny_recognizer();
  model->set_max_steps(6);
  model->store().get("decoder.output.weight").value.setZero();
  Matrix& bias = model->store().get("decoder.output.bias").value;
  bias.setZero();
  bias(0, Vocabulary::kEnd) = 5.0;
  const Dataset data = testkit::render_dataset({"abc"}, testkit::test_fonts(), 32, 1);
  const Decoded d = model->decode(data.images[0]);
  EXPECT_TRUE(d.tokens.empty());
  EXPECT_EQ(d.text, "");
  EXPECT_EQ(d.attention.rows(), 1);
}

TEST(GreedyDecode, NeverEndingModelRunsExactlyMaxSteps) {
  auto model = tiny_recognizer();
  model->set_max_steps(7);
  model->store().get("decoder.output.weight").value.setZero();
  Matrix& bias = model->store().get("decoder.output.bias").value;
  bias.setZero();
  const int a = model->vocab().index_of(U'a');
  bias(0, a) = 5.0;
  const Dataset data = testkit::render_dataset({"abc", "cab"}, testkit::test_fonts(), 32, 1);
  const Decoded d = model->decode(data.images[0]);
  EXPECT_EQ(d.tokens.size(), 7u);
  EXPECT_EQ(d.text, "aaaaaaa");
  EXPECT_EQ(d.attention.rows(), 7);
  // Each mask is a distribution over this image's positions.
  for (Eigen::Index r = 0; r < d.attention.rows(); ++r) EXPECT_NEAR(d.attention.row(r).sum(), 1.0, 1e-9);
  // Batched decoding agrees with per-image decoding.
  const auto batch = model->decode(model->collate(data.images));
  EXPECT_EQ(batch[0].text, d.text);
  EXPECT_EQ(batch[1].tokens.size(), 7u);
}
