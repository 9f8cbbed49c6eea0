#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace isoex::text {

// ASCII-only lowering keeps byte offsets aligned with the original string, so
// a match position in the lowered copy indexes the same bytes in the source.
std::string to_lower(std::string_view s);

bool contains_ci(std::string_view haystack_lower, std::string_view needle_lower);

// Replaces every invalid UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

std::vector<std::string_view> split_whitespace(std::string_view s);

std::string_view trim(std::string_view s);

// Last component of a Windows or POSIX path, with surrounding quotes removed.
std::string basename(std::string_view path);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Shannon entropy in bits per character over the exact byte multiset.
double shannon_entropy(std::string_view s);

// Full-precision shortest round-trip decimal form.
std::string format_double(double v);

// Reads a whole file. Files ending in ".gz" or starting with the gzip magic
// bytes are inflated.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// RFC-4180 reader. Quoted fields may span lines and escape quotes by
// doubling. Never fails: an unterminated quote consumes the rest of input.
std::vector<std::vector<std::string>> parse_csv(std::string_view data);

std::string csv_escape(std::string_view field);

}  // namespace isoex::text
