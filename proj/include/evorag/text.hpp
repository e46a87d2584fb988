#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace evorag::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
// Trims and replaces every run of whitespace with a single space.
std::string collapse_whitespace(std::string_view s);

// Lowercase, split on non-alphanumerics, drop empties.
std::vector<std::string> tokenize(std::string_view s);
std::set<std::string> token_set(std::string_view s);

// |A ∩ B| / |A ∪ B| over tokenize() sets; two empty texts have similarity 1.
double jaccard(std::string_view a, std::string_view b);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

std::size_t whitespace_token_count(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// First `n` bytes, backed off to a UTF-8 boundary.
std::string truncate_utf8(std::string_view s, std::size_t n);

// Stable 64-bit FNV-1a; used wherever a platform-independent hash is needed.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Replaces "{key}" occurrences for the given keys only; unknown braces stay literal.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace evorag::text
