#include "attnhtr/lexicon.hpp"

#include <algorithm>
#include <fstream>

#include "attnhtr/error.hpp"
#include "attnhtr/metrics.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

Lexicon::Lexicon(std::vector<std::string> words, std::string name) : name_(std::move(name)) {
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  words_ = std::move(words);
  decoded_.reserve(words_.size());
  for (const std::string& w : words_) decoded_.push_back(utf8::decode(w));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open lexicon " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    words.push_back(line);
  }
  return Lexicon(std::move(words), path.stem().string());
}

bool Lexicon::contains(const std::string& word) const {
  return std::binary_search(words_.begin(), words_.end(), word);
}

std::string constrain(const std::string& hypothesis, const Lexicon& lexicon) {
  require(!lexicon.empty(), ErrorCode::EmptyLexicon, "lexicon is empty");
  if (lexicon.contains(hypothesis)) return hypothesis;
  const std::u32string hyp = utf8::decode(hypothesis);
  std::size_t best = 0;
  int best_distance = -1;
  for (std::size_t i = 0; i < lexicon.decoded_.size(); ++i) {
    const std::u32string& word = lexicon.decoded_[i];
    const int length_gap = static_cast<int>(word.size() > hyp.size() ? word.size() - hyp.size()
                                                                      : hyp.size() - word.size());
    if (best_distance >= 0 && length_gap >= best_distance) continue;
    const int d = edit_distance(hyp, word);
    // Words are scanned in sorted order, so strict improvement keeps the
    // lexicographically first word among equals.
    if (best_distance < 0 || d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  return lexicon.words()[best];
}

}  // namespace attnhtr
