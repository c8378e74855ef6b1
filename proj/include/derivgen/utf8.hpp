#pragma once

#include <string>
#include <string_view>

namespace derivgen::utf8 {

/// Decodes UTF-8 into code points. Invalid bytes are passed through as
/// single code points (Latin-1 interpretation) so decoding never fails.
std::u32string decode(std::string_view s);

std::string encode(std::u32string_view s);
std::string encode(char32_t c);

}  // namespace derivgen::utf8
