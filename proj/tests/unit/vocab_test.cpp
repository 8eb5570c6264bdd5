#include <gtest/gtest.h>

#include <random>

#include "attnhtr/error.hpp"
#include "attnhtr/utf8.hpp"
#include "attnhtr/vocab.hpp"

using namespace attnhtr;

TEST(Vocabulary, CountsSpecialsAndCharacters) {
  const std::vector<std::string> corpus{"ab", "ba"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_EQ(v.size(), 5);
  EXPECT_EQ(v.index_of(U'a'), 3);
  EXPECT_EQ(v.index_of(U'b'), 4);
  EXPECT_EQ(v.go_index(), 0);
  EXPECT_EQ(v.end_index(), 1);
  EXPECT_EQ(v.pad_index(), 2);
}

TEST(Vocabulary, EmptyCorpusFails) {
  const std::vector<std::string> empty;
  try {
    Vocabulary::build(empty);
    FAIL() << "expected EmptyCorpus";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
  const std::vector<std::string> blanks{"", ""};
  EXPECT_THROW(Vocabulary::build(blanks), Error);
}

TEST(Vocabulary, KeepsAccents) {
  const std::vector<std::string> corpus{"café"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_GE(v.index_of(U'é'), Vocabulary::kSpecials);
  EXPECT_EQ(v.size(), 3 + 4);
}

TEST(Vocabulary, EncodeAppendsEnd) {
  const std::vector<std::string> corpus{"ab"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_EQ(v.encode("ab"), (TokenSequence{3, 4, 1}));
  EXPECT_EQ(v.encode(""), (TokenSequence{1}));
}

TEST(Vocabulary, UnknownCharacterReportsPosition) {
  const std::vector<std::string> corpus{"ab"};
  const Vocabulary v = Vocabulary::build(corpus);
  try {
    v.encode("a✦");
    FAIL() << "expected UnknownCharacter";
  } catch (const UnknownCharacterError& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownCharacter);
    EXPECT_EQ(e.position(), 1u);
    EXPECT_EQ(e.character(), U'✦');
  }
}

TEST(Vocabulary, DecodeStopsAtFirstEnd) {
  const std::vector<std::string> corpus{"ab"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_EQ(v.decode(TokenSequence{3, 4, 1}), "ab");
  EXPECT_EQ(v.decode(TokenSequence{3, 1, 4}), "a");
  EXPECT_EQ(v.decode(TokenSequence{1}), "");
  EXPECT_EQ(v.decode(TokenSequence{0, 3, 2, 4}), "ab");
}

TEST(Vocabulary, RoundTripRandomStrings) {
  const std::vector<std::string> corpus{"aäbc-ß'Z"};
  const Vocabulary v = Vocabulary::build(corpus);
  const std::u32string alphabet = utf8::decode(corpus[0]);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::u32string s;
    const int len = static_cast<int>(rng() % 12);
    for (int i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    const std::string text = utf8::encode(s);
    EXPECT_EQ(v.decode(v.encode(text)), text);
  }
}

TEST(Vocabulary, MappingsAreContiguousInverses) {
  const std::vector<std::string> corpus{"zyx", "Hello, World!"};
  const Vocabulary v = Vocabulary::build(corpus);
  for (int i = Vocabulary::kSpecials; i < v.size(); ++i) {
    EXPECT_EQ(v.index_of(v.character(i)), i);
  }
  for (std::size_t i = 1; i < v.characters().size(); ++i) {
    EXPECT_LT(v.characters()[i - 1], v.characters()[i]);
  }
}

TEST(Vocabulary, DeterministicAndSerializable) {
  const std::vector<std::string> corpus{"Mixed", "case", "RAlexiin"};
  const Vocabulary a = Vocabulary::build(corpus);
  const Vocabulary b = Vocabulary::build(corpus);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.to_json(), b.to_json());
  const Vocabulary c = Vocabulary::from_json(a.to_json());
  EXPECT_EQ(a, c);
  EXPECT_NE(a.index_of(U'R'), a.index_of(U'r'));
}
