#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnhtr {

enum class ErrorCode {
  EmptyCorpus,
  UnknownCharacter,
  InvalidConfig,
  EmptyWord,
  GlyphMissing,
  IoError,
  ImageTooNarrow,
  OddFeatureDim,
  DimensionMismatch,
  IndexOutOfRange,
  EmptyReference,
  EmptyLexicon,
  MissingImage,
  MalformedRow,
  VocabularyMismatch,
  DivergenceDetected,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a code, so
// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thrown by Vocabulary::encode; carries the offending codepoint and its
// position in the input (in codepoints, not bytes).
class UnknownCharacterError : public Error {
 public:
  UnknownCharacterError(char32_t ch, std::size_t position);

  char32_t character() const noexcept { return character_; }
  std::size_t position() const noexcept { return position_; }

 private:
  char32_t character_;
  std::size_t position_;
};

// Thrown by manifest loading; row is the 1-based line number.
class RowError : public Error {
 public:
  RowError(ErrorCode code, std::size_t row, const std::string& message);

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace attnhtr
