#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "attnhtr/augment.hpp"
#include "attnhtr/image.hpp"

namespace attnhtr {

// Unique, non-empty, whitespace-free words in codepoint (byte) order.
struct CorpusLexicon {
  std::vector<std::string> words;
  std::string source;
};

// Font files usable by render_word. Entries are TrueType/OpenType paths or
// built-in stroke fonts named "hershey:<0-7>" (optionally "hershey:<n>:italic").
struct FontSet {
  std::vector<std::string> fonts;

  std::size_t count() const { return fonts.size(); }
};

// Whitespace tokenization with deduplication; accents and punctuation stay
// attached to their tokens. An empty stream yields an empty lexicon and a
// warning.
CorpusLexicon extract_lexicon(std::istream& text, std::string source = {});
CorpusLexicon extract_lexicon_files(const std::vector<std::filesystem::path>& files);

// Recursively collects *.ttf / *.otf / *.ttc under `dir`, sorted by path.
// Throws IoError when nothing usable is found.
FontSet load_fontset(const std::filesystem::path& dir);

// True when every codepoint of `word` maps to a glyph in `font`.
bool font_covers(const std::string& font, const std::string& word);

struct RenderOptions {
  int target_height = 64;
  int margin = 4;  // pixels at target height, each side
};

// Dark ink on a light background, tight horizontal crop plus margin, a
// font-wide (word independent) vertical extent, scaled to target_height.
// The seed jitters stroke weight and margins. Throws EmptyWord, GlyphMissing
// or IoError (unloadable font).
GrayImage render_word(const std::string& word, const std::string& font, int target_height,
                      std::uint64_t seed);
GrayImage render_word(const std::string& word, const std::string& font, const RenderOptions& options,
                      std::uint64_t seed);

// The lexicon index generate_dataset draws first for sample i (uniform).
std::size_t sampled_word_index(std::size_t lexicon_size, std::uint64_t seed, std::size_t i);

struct GenerateOptions {
  int target_height = 64;
  int max_font_retries = 10;
};

// Writes n rendered-and-augmented images under out_dir/images and a TSV
// manifest out_dir/manifest.tsv (image path relative to out_dir, tab,
// label). Deterministic in seed. Returns the manifest path.
std::filesystem::path generate_dataset(const CorpusLexicon& lexicon, const FontSet& fonts,
                                       std::size_t n, const AugmentConfig& augment,
                                       std::uint64_t seed, const std::filesystem::path& out_dir,
                                       const GenerateOptions& options = {});

}  // namespace attnhtr
