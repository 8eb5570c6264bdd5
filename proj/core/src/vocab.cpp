#include "attnhtr/vocab.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "attnhtr/error.hpp"
#include "attnhtr/utf8.hpp"

namespace attnhtr {

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::string_view extra_chars) {
  std::set<char32_t> chars;
  for (const std::string& line : corpus) {
    for (char32_t cp : utf8::decode(line)) chars.insert(cp);
  }
  for (char32_t cp : utf8::decode(extra_chars)) chars.insert(cp);
  require(!chars.empty(), ErrorCode::EmptyCorpus, "corpus contains no characters");
  return from_characters({chars.begin(), chars.end()});
}

Vocabulary Vocabulary::from_characters(std::vector<char32_t> chars) {
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
  require(!chars.empty(), ErrorCode::EmptyCorpus, "vocabulary needs at least one character");
  Vocabulary v;
  v.chars_ = std::move(chars);
  for (std::size_t i = 0; i < v.chars_.size(); ++i) {
    v.index_.emplace(v.chars_[i], kSpecials + static_cast<int>(i));
  }
  return v;
}

Vocabulary Vocabulary::from_json(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, std::string("vocabulary JSON: ") + e.what());
  }
  require(j.value("go", -1) == kGo && j.value("end", -1) == kEnd && j.value("pad", -1) == kPad,
          ErrorCode::VocabularyMismatch, "special token indices must be go=0, end=1, pad=2");
  std::vector<char32_t> chars;
  for (const auto& c : j.at("chars")) {
    const std::u32string cps = utf8::decode(c.get<std::string>());
    require(cps.size() == 1, ErrorCode::IoError, "vocabulary entries must be single characters");
    chars.push_back(cps.front());
  }
  return from_characters(std::move(chars));
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  const std::u32string cps = utf8::decode(text);
  TokenSequence out;
  out.reserve(cps.size() + 1);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    auto it = index_.find(cps[i]);
    if (it == index_.end()) throw UnknownCharacterError(cps[i], i);
    out.push_back(it->second);
  }
  out.push_back(kEnd);
  return out;
}

std::string Vocabulary::decode(std::span<const int> tokens) const {
  std::u32string out;
  for (int t : tokens) {
    if (t == kEnd) break;
    if (t < kSpecials || t >= size()) continue;
    out.push_back(chars_[static_cast<std::size_t>(t - kSpecials)]);
  }
  return utf8::encode(out);
}

bool Vocabulary::covers(std::string_view text) const {
  for (char32_t cp : utf8::decode(text)) {
    if (index_.count(cp) == 0) return false;
  }
  return true;
}

int Vocabulary::index_of(char32_t ch) const {
  auto it = index_.find(ch);
  return it == index_.end() ? -1 : it->second;
}

char32_t Vocabulary::character(int index) const {
  if (index < kSpecials || index >= size()) return 0;
  return chars_[static_cast<std::size_t>(index - kSpecials)];
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["chars"] = nlohmann::json::array();
  for (char32_t c : chars_) j["chars"].push_back(utf8::encode(c));
  j["go"] = kGo;
  j["end"] = kEnd;
  j["pad"] = kPad;
  return j.dump();
}

}  // namespace attnhtr
