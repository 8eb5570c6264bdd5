#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "attnhtr/error.hpp"
#include "attnhtr/lexicon.hpp"
#include "attnhtr/metrics.hpp"
#include "attnhtr/utf8.hpp"
#include "test_support.hpp"

using namespace attnhtr;

TEST(Lexicon, MemberIsReturnedUnchanged) {
  const Lexicon lex({"guard", "suard", "currence"});
  EXPECT_EQ(constrain("suard", lex), "suard");
}

TEST(Lexicon, NearestWordWins) {
  const Lexicon lex({"currence", "century"});
  EXPECT_EQ(edit_distance(utf8::decode("curluce"), utf8::decode("currence")), 3);
  EXPECT_EQ(edit_distance(utf8::decode("curluce"), utf8::decode("century")), 5);  // full DP: c-e-n-t-u-r-y needs 5 edits
  EXPECT_EQ(constrain("curluce", lex), "currence");
}

TEST(Lexicon, TiesGoToLexicographicallyFirst) {
  const Lexicon lex({"ba", "aa"});
  EXPECT_EQ(constrain("ab", lex), "aa");
}

TEST(Lexicon, EmptyLexiconFails) {
  const Lexicon lex;
  try {
    constrain("x", lex);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLexicon);
  }
}

TEST(Lexicon, DeduplicatesAndLoads) {
  const auto dir = testkit::scratch_dir("lexicon_load");
  {
    std::ofstream out(dir / "words.txt");
    out << "beta\nalpha\n\nbeta\r\nGamma\n";
  }
  const Lexicon lex = Lexicon::load(dir / "words.txt");
  EXPECT_EQ(lex.words(), (std::vector<std::string>{"Gamma", "alpha", "beta"}));
  EXPECT_EQ(lex.name(), "words");
  EXPECT_THROW(Lexicon::load(dir / "missing.txt"), Error);
}

TEST(Lexicon, CaseSensitive) {
  const Lexicon lex({"Word", "word"});
  EXPECT_EQ(constrain("Word", lex), "Word");
  EXPECT_EQ(constrain("wor", lex), "word");
}

TEST(Lexicon, OutputInLexiconAndIdempotent) {
  std::mt19937 rng(11);
  auto word = [&] {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng() % 5));
    return s;
  };
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back(word());
  const Lexicon lex(words);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string h = word();
    const std::string c = constrain(h, lex);
    EXPECT_TRUE(lex.contains(c));
    EXPECT_EQ(constrain(c, lex), c);
    // Exhaustive check of the minimum.
    int best = 1 << 20;
    for (const std::string& w : lex.words()) {
      best = std::min(best, edit_distance(utf8::decode(h), utf8::decode(w)));
    }
    EXPECT_EQ(edit_distance(utf8::decode(h), utf8::decode(c)), best);
  }
}
