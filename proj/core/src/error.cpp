#include "attnhtr/error.hpp"

#include "attnhtr/utf8.hpp"

namespace attnhtr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownCharacter: return "UnknownCharacter";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyWord: return "EmptyWord";
    case ErrorCode::GlyphMissing: return "GlyphMissing";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ImageTooNarrow: return "ImageTooNarrow";
    case ErrorCode::OddFeatureDim: return "OddFeatureDim";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::EmptyLexicon: return "EmptyLexicon";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

UnknownCharacterError::UnknownCharacterError(char32_t ch, std::size_t position)
    : Error(ErrorCode::UnknownCharacter,
            "character '" + utf8::encode(ch) + "' at position " + std::to_string(position) +
                " is not in the vocabulary"),
      character_(ch),
      position_(position) {}

RowError::RowError(ErrorCode code, std::size_t row, const std::string& message)
    : Error(code, "row " + std::to_string(row) + ": " + message), row_(row) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace attnhtr
