#include "test_support.hpp"

#include <cmath>

#include "attnhtr/synthgen.hpp"

namespace attnhtr::testkit {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(ATTNHTR_TEST_SCRATCH) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const FontSet& test_fonts() {
  static const FontSet fonts = [] {
    for (const char* dir : {"/usr/share/fonts/truetype/dejavu", "/usr/share/fonts"}) {
      try {
        FontSet set = load_fontset(dir);
        FontSet usable;
        for (const std::string& f : set.fonts) {
          if (font_covers(f, "abcdefghijklmnopqrstuvwxyz")) usable.fonts.push_back(f);
        }
        if (!usable.fonts.empty()) return usable;
      } catch (const Error&) {
      }
    }
    FontSet fallback;
    for (int i = 0; i < 4; ++i) fallback.fonts.push_back("hershey:" + std::to_string(i));
    return fallback;
  }();
  return fonts;
}

std::vector<TensorCheck> gradient_check(const std::vector<ad::Parameter*>& params,
                                        const std::function<ad::Var(ad::Tape&)>& loss, double h) {
  for (ad::Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape;
    ad::Var l = loss(tape);
    tape.backward(l);
  }
  std::vector<TensorCheck> out;
  for (ad::Parameter* p : params) {
    const ad::Matrix analytic = p->grad;
    ad::Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      double plus = 0.0;
      {
        ad::Tape tape(false);
        plus = loss(tape).value()(0, 0);
      }
      p->value.data()[i] = saved - h;
      double minus = 0.0;
      {
        ad::Tape tape(false);
        minus = loss(tape).value()(0, 0);
      }
      p->value.data()[i] = saved;
      numeric.data()[i] = (plus - minus) / (2.0 * h);
    }
    TensorCheck c;
    c.name = p->name;
    c.analytic_norm = analytic.norm();
    c.numeric_norm = numeric.norm();
    const double scale = std::max(c.analytic_norm, c.numeric_norm);
    c.relative_error = scale < 1e-12 ? 0.0 : (analytic - numeric).norm() / scale;
    out.push_back(c);
  }
  return out;
}

double worst_error(const std::vector<TensorCheck>& checks) {
  double worst = 0.0;
  for (const TensorCheck& c : checks) worst = std::max(worst, c.relative_error);
  return worst;
}

Config tiny_config() {
  Config c = Config::defaults();
  c.set("encoder.backbone", "c8-p2-c16-p2-c24-p2x1-c32-p2");
  c.set("encoder.input_height", "32");
  c.set("encoder.feature_dim", "48");
  c.set("encoder.recurrent_layers", "1");
  c.set("decoder.state_dim", "64");
  c.set("decoder.layers", "1");
  c.set("decoder.embedding_dim", "16");
  c.set("attention.attn_dim", "32");
  c.set("attention.kernel", "5");
  c.set("attention.filters", "4");
  c.set("lm.embedding_dim", "16");
  c.set("lm.state_dim", "64");
  c.set("lm.layers", "1");
  c.set("train.learning_rate", "2e-3");
  c.set("train.batch_size", "8");
  c.set("train.dropout", "0");
  c.set("train.label_smoothing", "0");
  c.set("train.augment_probability", "0");
  c.set("train.checkpoint_dir", "");
  c.set("train.seed", "1");
  return c;
}

Dataset render_dataset(const std::vector<std::string>& words, const FontSet& fonts, int height,
                       std::uint64_t seed, const AugmentConfig* augment) {
  Dataset d;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    const std::string& font = fonts.fonts[s % fonts.count()];
    GrayImage img = render_word(words[i], font, height, s);
    if (augment != nullptr) img = apply_pipeline(img, *augment, mix_seed(s, 99));
    d.ids.push_back(std::to_string(i));
    d.images.push_back(std::move(img));
    d.transcriptions.push_back(words[i]);
  }
  return d;
}

}  // namespace attnhtr::testkit
