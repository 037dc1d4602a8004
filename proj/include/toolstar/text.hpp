#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace toolstar::text {

bool is_space(char c);
bool is_blank(std::string_view s);
std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Trim and fold every internal whitespace run into one space.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);
// Replaces every `{key}` placeholder; unknown placeholders are left intact.
std::string fill_template(
    std::string_view tmpl,
    const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace toolstar::text
