#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "attnhtr/lexicon.hpp"
#include "attnhtr/metrics.hpp"
#include "attnhtr/recognizer.hpp"
#include "attnhtr/rng.hpp"
#include "attnhtr/synthgen.hpp"

using namespace attnhtr;

namespace {

std::string random_word(Rng& rng, std::size_t len) {
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += static_cast<char>('a' + uniform_index(rng, 26));
  return w;
}

void BM_EditDistance(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::u32string a(n, U'a');
  std::u32string b;
  for (std::size_t i = 0; i < n; ++i) b += static_cast<char32_t>(U'a' + uniform_index(rng, 4));
  for (auto _ : state) benchmark::DoNotOptimize(edit_counts(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EditDistance)->RangeMultiplier(4)->Range(4, 256)->Complexity(benchmark::oNSquared);

void BM_LexiconConstrain(benchmark::State& state) {
  Rng rng(2);
  std::vector<std::string> words;
  for (int i = 0; i < state.range(0); ++i) words.push_back(random_word(rng, 3 + uniform_index(rng, 8)));
  const Lexicon lexicon(words);
  const std::string hyp = random_word(rng, 7);
  for (auto _ : state) benchmark::DoNotOptimize(constrain(hyp, lexicon));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LexiconConstrain)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oN);

// Greedy decoding of one word image: encoder forward plus attention decoding.
void BM_RecognizeWord(benchmark::State& state) {
  Config cfg = Config::defaults();
  cfg.set("encoder.backbone", "small");
  cfg.set("encoder.input_height", "32");
  static const char* kModes[] = {"none", "shallow", "candidate"};
  cfg.set("fusion.mode", kModes[state.range(0)]);
  const Vocabulary vocab = Vocabulary::build(std::vector<std::string>{"abcdefghijklmnopqrstuvwxyz"});
  Recognizer model(ModelConfig::from(cfg), vocab, 3);
  model.set_max_steps(12);
  const GrayImage image = render_word("benchmark", "hershey:0", 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.decode(image));
  state.SetLabel(kModes[state.range(0)]);
}
BENCHMARK(BM_RecognizeWord)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
