#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace attnhtr {

// A deduplicated word list, kept in bytewise order.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::vector<std::string> words, std::string name = {});

  // One word per line, UTF-8; blank lines are ignored. Throws IoError.
  static Lexicon load(const std::filesystem::path& path);

  const std::vector<std::string>& words() const { return words_; }
  const std::string& name() const { return name_; }
  bool contains(const std::string& word) const;
  bool empty() const { return words_.empty(); }
  std::size_t size() const { return words_.size(); }

 private:
  std::vector<std::string> words_;
  std::vector<std::u32string> decoded_;
  std::string name_;

  friend std::string constrain(const std::string& hypothesis, const Lexicon& lexicon);
};

// Nearest lexicon word by codepoint edit distance; ties go to the
// lexicographically smallest word. Throws EmptyLexicon.
std::string constrain(const std::string& hypothesis, const Lexicon& lexicon);

}  // namespace attnhtr
