#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace paracycle::text {

// Decode UTF-8 into Unicode scalar values. Invalid bytes are kept as
// single units (offset into a private range) so the function is total and
// distinct garbage stays distinct.
std::vector<char32_t> decode_utf8(std::string_view s);

// Split on ASCII whitespace runs; empty input gives no tokens.
std::vector<std::string> split_words(std::string_view s);

// Join tokens with single spaces.
std::string join_words(const std::vector<std::string>& words);

}  // namespace paracycle::text
