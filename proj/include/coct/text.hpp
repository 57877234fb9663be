#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small ASCII string helpers shared across modules.
namespace coct::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool icontains(std::string_view haystack, std::string_view needle);

/// Splits on runs of ASCII whitespace; no empty tokens.
std::vector<std::string> split_ws(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Replaces every `{name}` occurrence with `value`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace coct::text
