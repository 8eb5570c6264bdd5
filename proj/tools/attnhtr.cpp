// attnhtr command line: data generation, LM pretraining, training,
// evaluation and attention export. Any unrecognised "--key value" pair is
// applied as a configuration override.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "attnhtr/error.hpp"
#include "attnhtr/log.hpp"
#include "attnhtr/pipeline.hpp"
#include "attnhtr/synthgen.hpp"

namespace fs = std::filesystem;
using namespace attnhtr;

namespace {

struct Common {
  std::string config_file;
  bool verbose = false;
};

void add_common(CLI::App& cmd, Common& common) {
  cmd.add_option("--config", common.config_file, "configuration file (INI-style sections)");
  cmd.add_flag("-v,--verbose", common.verbose, "debug logging");
  cmd.allow_extras();
}

Config resolve_config(const CLI::App& cmd, const Common& common) {
  Config config = Config::defaults();
  if (!common.config_file.empty()) config.merge(Config::load(common.config_file));
  const auto rest = config.apply_overrides(cmd.remaining());
  if (!rest.empty()) throw Error(ErrorCode::InvalidConfig, "unexpected argument '" + rest.front() + "'");
  if (common.verbose) log::set_level(log::Level::Debug);
  return config;
}

// Raw text lines of every file; tokenization happens downstream.
std::vector<std::string> read_lines(const std::vector<std::string>& files) {
  std::vector<std::string> lines;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + f);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based handwritten word recognition with language-model fusion"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synthgen", "render a synthetic word-image dataset");
  std::vector<std::string> synth_corpus;
  std::string fonts_dir, synth_out;
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 0;
  int synth_height = 64;
  synth->add_option("--corpus", synth_corpus, "text files supplying the lexicon")->required();
  synth->add_option("--fonts", fonts_dir, "directory of TrueType/OpenType fonts")->required();
  synth->add_option("--n", synth_n, "number of images")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generation seed");
  synth->add_option("--height", synth_height, "image height in pixels");
  add_common(*synth, common);

  auto* lm = app.add_subcommand("lm-pretrain", "pretrain the character language model");
  std::vector<std::string> lm_corpus;
  std::string lm_vocab, lm_out;
  lm->add_option("--corpus", lm_corpus, "training text files")->required();
  lm->add_option("--vocab", lm_vocab, "checkpoint whose vocabulary to use (default: built from the corpus)");
  lm->add_option("--out", lm_out, "output checkpoint")->required();
  add_common(*lm, common);

  auto* tr = app.add_subcommand("train", "train the recognizer");
  std::string train_manifest, valid_manifest, init_ckpt;
  tr->add_option("--train", train_manifest, "training manifest (TSV)")->required();
  tr->add_option("--valid", valid_manifest, "validation manifest (TSV)");
  tr->add_option("--init", init_ckpt, "checkpoint to resume or initialize from");
  add_common(*tr, common);

  auto* ev = app.add_subcommand("evaluate", "compute CER/WER on a manifest");
  std::string ev_ckpt, ev_manifest, ev_lexicon, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "evaluation manifest (TSV)")->required();
  ev->add_option("--lexicon", ev_lexicon, "constrain outputs to this word list");
  ev->add_option("--out", ev_out, "JSON report path (default: stdout)");
  add_common(*ev, common);

  auto* ex = app.add_subcommand("export-attention", "write attention grids and overlays");
  std::string ex_ckpt, ex_manifest, ex_out;
  std::size_t ex_limit = 0;
  ex->add_option("--checkpoint", ex_ckpt, "model checkpoint")->required();
  ex->add_option("--manifest", ex_manifest, "images to decode (TSV)")->required();
  ex->add_option("--out", ex_out, "output directory")->required();
  ex->add_option("--limit", ex_limit, "export only the first N samples (0: all)");
  add_common(*ex, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const Config config = resolve_config(*synth, common);
      std::vector<fs::path> files(synth_corpus.begin(), synth_corpus.end());
      GenerateOptions opts;
      opts.target_height = synth_height;
      const fs::path manifest = generate_dataset(extract_lexicon_files(files), load_fontset(fonts_dir), synth_n,
                                                 augment_config_from(config), synth_seed, synth_out, opts);
      std::cout << manifest.string() << '\n';
    } else if (lm->parsed()) {
      const Config config = resolve_config(*lm, common);
      const auto corpus = read_lines(lm_corpus);
      const Vocabulary vocab = lm_vocab.empty() ? Vocabulary::build(corpus) : load_checkpoint(lm_vocab).vocab;
      const PretrainReport report = pretrain_language_model(config, corpus, vocab, lm_out);
      std::cout << "tokens " << report.tokens << ", dropped characters " << report.dropped_characters
                << ", perplexity " << report.final_perplexity << '\n';
    } else if (tr->parsed()) {
      const Config config = resolve_config(*tr, common);
      const auto train_samples = load_manifest(train_manifest);
      const auto valid_samples = valid_manifest.empty() ? std::vector<WordSample>{} : load_manifest(valid_manifest);
      std::optional<fs::path> init;
      if (!init_ckpt.empty()) init = init_ckpt;
      const TrainResult result = train(config, train_samples, valid_samples, init);
      std::cout << "epochs " << result.epochs_run << ", best valid CER " << result.best_valid_cer << " at epoch "
                << result.best_epoch << '\n';
      if (!result.best_checkpoint.empty()) std::cout << "best " << result.best_checkpoint.string() << '\n';
      if (!result.last_checkpoint.empty()) std::cout << "last " << result.last_checkpoint.string() << '\n';
    } else if (ev->parsed()) {
      resolve_config(*ev, common);
      const auto model = load_recognizer(load_checkpoint(ev_ckpt));
      const Dataset data = Dataset::load(load_manifest(ev_manifest));
      std::optional<Lexicon> lexicon;
      if (!ev_lexicon.empty()) lexicon = Lexicon::load(ev_lexicon);
      write_text(ev_out, evaluate(*model, data, lexicon ? &*lexicon : nullptr).to_json());
    } else if (ex->parsed()) {
      resolve_config(*ex, common);
      const auto model = load_recognizer(load_checkpoint(ex_ckpt));
      auto samples = load_manifest(ex_manifest);
      if (ex_limit > 0 && samples.size() > ex_limit) samples.resize(ex_limit);
      export_attention(*model, samples, ex_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
