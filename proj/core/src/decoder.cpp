#include "attnhtr/decoder.hpp"

#include "attnhtr/error.hpp"

namespace attnhtr {

Decoder::Decoder(ad::ParameterStore& store, const std::string& name, int vocab_size, int context_dim,
                 const DecoderConfig& config, Rng& rng, int extra_input_dim)
    : config_(config), vocab_size_(vocab_size), context_dim_(context_dim), extra_dim_(extra_input_dim) {
  require(config.layers >= 1, ErrorCode::InvalidConfig, "decoder needs at least one layer");
  require(config.state_dim > 0 && config.embedding_dim > 0, ErrorCode::InvalidConfig,
          "decoder widths must be positive");
  require(config.label_smoothing >= 0.0 && config.label_smoothing < 1.0, ErrorCode::InvalidConfig,
          "label smoothing must be in [0, 1)");
  require(config.dropout >= 0.0 && config.dropout < 1.0, ErrorCode::InvalidConfig,
          "decoder dropout must be in [0, 1)");
  embedding_ = nn::Embedding(store, name + ".embedding", vocab_size, config.embedding_dim, rng);
  gru_ = nn::GruStack(store, name + ".gru", input_dim(), config.state_dim, config.layers, rng);
  const int out_in = config.state_dim + (config.unit_style == UnitStyle::Conventional ? context_dim : 0);
  output_ = nn::Linear(store, name + ".output", out_in, vocab_size, rng);
}

ad::Var Decoder::embed(ad::Tape& tape, std::span<const int> tokens) const {
  for (int y : tokens) {
    require(y >= 0 && y < vocab_size_, ErrorCode::IndexOutOfRange,
            "token " + std::to_string(y) + " outside vocabulary of size " + std::to_string(vocab_size_));
  }
  return embedding_.forward(tape, tokens);
}

nn::RecurrentState Decoder::initial_state(ad::Tape& tape, Eigen::Index batch) const {
  return gru_.zero_state(tape, batch);
}

nn::RecurrentState Decoder::step(ad::Tape& tape, const ad::Var& context, const ad::Var& embedding,
                                 const nn::RecurrentState& prev, bool training, Rng* rng,
                                 const ad::Var& extra) const {
  require(context.cols() == context_dim_, ErrorCode::DimensionMismatch, "decoder context width mismatch");
  require(embedding.cols() == config_.embedding_dim, ErrorCode::DimensionMismatch,
          "decoder embedding width mismatch");
  require(extra.valid() == (extra_dim_ > 0), ErrorCode::DimensionMismatch,
          "decoder extra input does not match its configuration");
  std::vector<ad::Var> parts{context, embedding};
  if (extra.valid()) {
    require(extra.cols() == extra_dim_, ErrorCode::DimensionMismatch, "decoder extra input width mismatch");
    parts.push_back(extra);
  }
  return step_input(tape, ad::concat_cols(parts), prev, training, rng);
}

nn::RecurrentState Decoder::step_input(ad::Tape& tape, const ad::Var& input, const nn::RecurrentState& prev,
                                       bool training, Rng* rng) const {
  require(input.cols() == input_dim(), ErrorCode::DimensionMismatch,
          "decoder input width " + std::to_string(input.cols()) + ", expected " + std::to_string(input_dim()));
  require(static_cast<int>(prev.layers.size()) == config_.layers, ErrorCode::DimensionMismatch,
          "decoder state has the wrong number of layers");
  return gru_.step(tape, input, prev, config_.dropout, training, rng);
}

ad::Var Decoder::logits(ad::Tape& tape, const nn::RecurrentState& state, const ad::Var& context) const {
  if (config_.unit_style == UnitStyle::Conventional) {
    return output_.forward(tape, ad::concat_cols({state.top(), context}));
  }
  return output_.forward(tape, state.top());
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = static_cast<int>(j);
  }
  return best;
}

std::vector<int> argmax_rows(const ad::Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax(m.row(r));
  return out;
}

}  // namespace attnhtr
