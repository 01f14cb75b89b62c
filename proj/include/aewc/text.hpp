// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aewc::text {

/// Decodes UTF-8 into code points; returns nullopt on malformed input.
std::optional<std::vector<char32_t>> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);
bool is_valid_utf8(std::string_view s);

std::string trim(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);

}  // namespace aewc::text
