#pragma once

#include <string>
#include <string_view>
#include <vector>

// Minimal UTF-8 helpers. Invalid byte sequences decode to U+FFFD.
namespace attnhtr::utf8 {

std::u32string decode(std::string_view text);
std::string encode(char32_t codepoint);
std::string encode(std::u32string_view text);

// Splits on ASCII whitespace (space, tab, CR, LF, VT, FF).
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace attnhtr::utf8
