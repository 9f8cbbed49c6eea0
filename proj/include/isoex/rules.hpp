#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

#include "isoex/ingest.hpp"

namespace isoex::rules {

// Names of the keyword lists consumed by the feature rules. Any list may be
// empty; unknown list names are rejected on load.
inline constexpr std::string_view kKeywordLists[] = {
    "obfuscation", "scheduled", "phishing", "suspicious_extensions", "suspicious_hostnames",
    "webremote",   "dump",      "ioc_strings", "base64",
};

struct SafeExecutable {
  std::set<std::string> expected_folder_paths;  // lowercase prefixes
  std::set<std::string> known_parameters;       // lowercase
  std::set<ingest::IntegrityLevel> typical_integrity;

  bool operator==(const SafeExecutable&) const = default;
};

struct Thresholds {
  double entropy_flag = 4.5;          // bits per character
  double rare_activation_tau = 0.01;  // augmentation target activation rate
  double top_quantile = 0.05;         // derived top-quantile flags
  double time_outlier_k = 3.0;        // sigma multiplier for time outliers
  double rare_count = 5;              // support threshold for rarity rules

  bool operator==(const Thresholds&) const = default;
};

struct RuleConfig {
  std::map<std::string, std::set<std::string>> keyword_lists;
  std::map<std::string, SafeExecutable> safe_executables;  // keyed by lowercase file name
  Thresholds thresholds;
  // Fixed local-time offset applied by the launch-time rule.
  int utc_offset_minutes = 0;

  const std::set<std::string>& keywords(std::string_view list) const;
  bool operator==(const RuleConfig&) const = default;
};

// Throws ParseError (with byte offset) on malformed JSON and ValidationError
// naming the field on any invariant violation. Absent thresholds take their
// defaults; keyword entries are lowercased.
RuleConfig load_config(std::string_view json_text);
RuleConfig load_config_file(const std::string& path);

std::string serialize_config(const RuleConfig& config);

// Stable 64-bit digest of the serialized config, as lowercase hex.
std::string config_digest(const RuleConfig& config);

// The shipped illustrative rule set.
const std::string& default_config_json();
RuleConfig default_config();

}  // namespace isoex::rules
