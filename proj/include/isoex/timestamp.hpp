#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace isoex {

// UTC instant with nanosecond resolution. The source text is kept verbatim
// for display; ns is what every computation uses. Fractions longer than nine
// digits are truncated.
struct Timestamp {
  std::int64_t ns = 0;
  std::string text;
  int fraction_digits = 0;

  friend bool operator==(const Timestamp& a, const Timestamp& b) {
    return a.ns == b.ns;
  }
  friend auto operator<=>(const Timestamp& a, const Timestamp& b) {
    return a.ns <=> b.ns;
  }
};

constexpr std::int64_t kNanosPerSecond = 1'000'000'000;
constexpr std::int64_t kNanosPerHour = 3600 * kNanosPerSecond;
constexpr std::int64_t kNanosPerDay = 24 * kNanosPerHour;

// Accepts "YYYY-MM-DD[T ]HH:MM:SS[.f+][Z|+HH:MM|-HH:MM|+HHMM]". A missing zone
// designator means UTC. Returns nullopt on anything else.
std::optional<Timestamp> parse_timestamp(std::string_view text);

// Canonical "YYYY-MM-DDTHH:MM:SS[.fff]Z" with exactly `fraction_digits`
// fractional digits (0..9).
std::string format_timestamp(std::int64_t ns, int fraction_digits);

std::int64_t days_from_civil(int y, unsigned m, unsigned d);

struct CivilTime {
  int year;
  unsigned month, day, hour, minute, second;
  unsigned weekday;  // 0 = Sunday
};

CivilTime civil_from_ns(std::int64_t ns);

}  // namespace isoex
