#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attnhtr {

// Recognizer output symbols as vocabulary indices. A well-formed sequence
// holds at most one end index and nothing after it.
using TokenSequence = std::vector<int>;

// Character vocabulary. Indices 0..2 are the GO, END and PAD specials; the
// remaining indices are characters sorted by codepoint. Immutable once built.
class Vocabulary {
 public:
  static constexpr int kGo = 0;
  static constexpr int kEnd = 1;
  static constexpr int kPad = 2;
  static constexpr int kSpecials = 3;

  Vocabulary() = default;

  // Every distinct codepoint of the corpus (plus `extra_chars`). Throws
  // EmptyCorpus when there are no characters at all.
  static Vocabulary build(std::span<const std::string> corpus, std::string_view extra_chars = {});
  static Vocabulary from_characters(std::vector<char32_t> chars);
  static Vocabulary from_json(const std::string& json);

  // Character indices followed by END. Throws UnknownCharacterError.
  TokenSequence encode(std::string_view text) const;
  // Characters up to the first END; GO and PAD are skipped, out-of-range
  // indices are ignored.
  std::string decode(std::span<const int> tokens) const;

  bool covers(std::string_view text) const;
  int index_of(char32_t ch) const;  // -1 when absent
  char32_t character(int index) const;  // 0 for specials / out of range
  bool is_special(int index) const { return index >= 0 && index < kSpecials; }

  int size() const { return kSpecials + static_cast<int>(chars_.size()); }
  int go_index() const { return kGo; }
  int end_index() const { return kEnd; }
  int pad_index() const { return kPad; }
  const std::vector<char32_t>& characters() const { return chars_; }

  // {"chars": [...], "go": 0, "end": 1, "pad": 2}
  std::string to_json() const;

  bool operator==(const Vocabulary& other) const { return chars_ == other.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::map<char32_t, int> index_;
};

}  // namespace attnhtr
