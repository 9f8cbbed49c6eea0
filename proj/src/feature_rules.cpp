#include <algorithm>
#include <cctype>
#include <set>

#include "isoex/features.hpp"
#include "isoex/text.hpp"

namespace isoex::features {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }
bool is_b64(char c) { return is_alnum(c) || c == '+' || c == '/'; }

bool is_token_boundary(char c) {
  switch (c) {
    case ' ': case '\t': case '\r': case '\n': case '\'': case '"': case ',': case ';':
    case '(': case ')': case '=': case '[': case ']': case '{': case '}': case '|':
    case '&': case '<': case '>':
      return true;
    default:
      return false;
  }
}

// Earliest occurrence of any keyword; equal positions prefer the longer one.
KeywordHit first_keyword(std::string_view original, std::string_view lower, const std::set<std::string>& keywords) {
  KeywordHit best;
  std::size_t best_pos = std::string_view::npos;
  std::size_t best_len = 0;
  for (const auto& kw : keywords) {
    const auto pos = lower.find(kw);
    if (pos == std::string_view::npos) continue;
    if (pos < best_pos || (pos == best_pos && kw.size() > best_len)) {
      best_pos = pos;
      best_len = kw.size();
    }
  }
  if (best_pos != std::string_view::npos) {
    best.hit = true;
    best.evidence = std::string(original.substr(best_pos, best_len));
  }
  return best;
}

std::string normalized_folder(std::string_view folder) {
  std::string f = text::to_lower(text::trim(folder));
  std::replace(f.begin(), f.end(), '/', '\\');
  while (!f.empty() && f.back() == '\\') f.pop_back();
  return f;
}

}  // namespace

EncodingResult encoding_features(std::string_view cmd, const rules::RuleConfig& config) {
  EncodingResult r;
  r.entropy = text::shannon_entropy(cmd);
  r.high_entropy = r.entropy > config.thresholds.entropy_flag;

  const std::size_t n = cmd.size();

  // Hex: a maximal alphanumeric run of >= 16 hex digits mixing digits and
  // letters, or "0x" followed by >= 8 hex digits.
  for (std::size_t i = 0; i < n && !r.hex;) {
    if (!is_alnum(cmd[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_alnum(cmd[j])) ++j;
    const std::string_view run = cmd.substr(i, j - i);
    if (run.size() >= 10 && (run[0] == '0') && (run[1] == 'x' || run[1] == 'X') &&
        std::all_of(run.begin() + 2, run.end(), is_hex)) {
      r.hex = true;
      r.hex_evidence = std::string(run);
    } else if (run.size() >= 16 && std::all_of(run.begin(), run.end(), is_hex)) {
      const bool digit = std::any_of(run.begin(), run.end(), [](char c) { return c >= '0' && c <= '9'; });
      const bool letter = std::any_of(run.begin(), run.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
      if (digit && letter) {
        r.hex = true;
        r.hex_evidence = std::string(run);
      }
    }
    i = j;
  }

  // Base64: [A-Za-z0-9+/]{20,}={0,2} bounded by token delimiters, containing a
  // letter and a digit or '+'.
  for (std::size_t i = 0; i < n && !r.base64;) {
    if (!is_b64(cmd[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_b64(cmd[j])) ++j;
    std::size_t end = j;
    while (end < n && end - j < 2 && cmd[end] == '=') ++end;
    const bool left_ok = i == 0 || is_token_boundary(cmd[i - 1]);
    const bool right_ok = end == n || is_token_boundary(cmd[end]);
    if (j - i >= 20 && left_ok && right_ok) {
      const auto run = cmd.substr(i, j - i);
      const bool letter = std::any_of(run.begin(), run.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
      const bool digit_or_plus = std::any_of(run.begin(), run.end(), [](char c) { return (c >= '0' && c <= '9') || c == '+'; });
      if (letter && digit_or_plus) {
        r.base64 = true;
        r.base64_evidence = std::string(cmd.substr(i, end - i));
      }
    }
    i = end;
  }
  if (!r.base64) {
    const std::string lower = text::to_lower(cmd);
    auto kw = first_keyword(cmd, lower, config.keywords("base64"));
    if (kw.hit) {
      r.base64 = true;
      r.base64_evidence = std::move(kw.evidence);
    }
  }

  // URL encoding: at least three %XX escapes.
  std::size_t escapes = 0;
  std::size_t first = std::string_view::npos;
  std::size_t last_end = 0;
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (cmd[i] == '%' && is_hex(cmd[i + 1]) && is_hex(cmd[i + 2])) {
      ++escapes;
      if (first == std::string_view::npos) first = i;
      last_end = i + 3;
      i += 2;
    }
  }
  if (escapes >= 3) {
    r.url_encoded = true;
    r.url_evidence = std::string(cmd.substr(first, last_end - first));
  }
  return r;
}

KeywordResult keyword_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config) {
  const std::string_view cmd = event.command_line;
  const std::string lower = text::to_lower(cmd);
  KeywordResult r;
  r.ioc = first_keyword(cmd, lower, config.keywords("ioc_strings"));
  r.scheduled = first_keyword(cmd, lower, config.keywords("scheduled"));
  r.phishing = first_keyword(cmd, lower, config.keywords("phishing"));
  r.extensions = first_keyword(cmd, lower, config.keywords("suspicious_extensions"));
  r.webremote = first_keyword(cmd, lower, config.keywords("webremote"));
  r.dump = first_keyword(cmd, lower, config.keywords("dump"));

  // Hostnames: URL and UNC hosts compared against the list (exact or as a
  // parent domain), then plain substring hits.
  const auto& hosts = config.keywords("suspicious_hostnames");
  if (!hosts.empty()) {
    auto check_host = [&](std::size_t start) {
      std::size_t end = start;
      while (end < cmd.size() && std::string_view("/\\:?#\"' \t,;)|").find(cmd[end]) == std::string_view::npos) ++end;
      std::string_view host = cmd.substr(start, end - start);
      const auto at = host.rfind('@');
      if (at != std::string_view::npos) host.remove_prefix(at + 1);
      const std::string h = text::to_lower(host);
      for (const auto& entry : hosts) {
        if (h == entry || (h.size() > entry.size() && h.ends_with(entry) && h[h.size() - entry.size() - 1] == '.')) {
          r.hostnames.hit = true;
          r.hostnames.evidence = std::string(host);
          return true;
        }
      }
      return false;
    };
    for (std::size_t pos = lower.find("://"); pos != std::string::npos && !r.hostnames.hit; pos = lower.find("://", pos + 3)) {
      check_host(pos + 3);
    }
    for (std::size_t pos = cmd.find("\\\\"); pos != std::string_view::npos && !r.hostnames.hit; pos = cmd.find("\\\\", pos + 2)) {
      check_host(pos + 2);
    }
    if (!r.hostnames.hit) r.hostnames = first_keyword(cmd, lower, hosts);
  }
  return r;
}

ObfuscationResult obfuscation_features(std::string_view file_name, std::string_view cmd,
                                       const rules::RuleConfig& config) {
  ObfuscationResult r;
  const std::string lower = text::to_lower(cmd);
  std::size_t first_pos = std::string::npos;
  std::size_t first_len = 0;
  for (const auto& marker : config.keywords("obfuscation")) {
    for (std::size_t pos = lower.find(marker); pos != std::string::npos; pos = lower.find(marker, pos + marker.size())) {
      r.marker_count += 1.0;
      if (pos < first_pos) {
        first_pos = pos;
        first_len = marker.size();
      }
    }
  }
  if (first_pos != std::string::npos) {
    r.marker = true;
    r.marker_evidence = std::string(cmd.substr(first_pos, first_len));
  }

  std::string stem = text::to_lower(text::trim(file_name));
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos && dot > 0) stem.resize(dot);
  const auto trimmed = text::trim(cmd);
  if (!trimmed.empty() && !stem.empty() && lower.find(stem) == std::string::npos) {
    r.filename_absent = true;
    const auto tokens = text::split_whitespace(trimmed);
    r.absent_evidence = std::string(tokens.empty() ? trimmed : tokens.front());
  }
  return r;
}

std::vector<Parameter> extract_parameters(std::string_view cmd) {
  std::vector<Parameter> out;
  std::set<std::string> seen;
  for (auto token : text::split_whitespace(cmd)) {
    while (!token.empty() && (token.front() == '"' || token.front() == '\'')) token.remove_prefix(1);
    if (token.empty() || (token.front() != '-' && token.front() != '/')) continue;
    const auto eq = token.find('=');
    std::string_view name = token.substr(0, eq);
    while (!name.empty() && (name.back() == '"' || name.back() == '\'')) name.remove_suffix(1);
    const auto body = name.find_first_not_of("-/");
    if (body == std::string_view::npos) continue;
    std::string lower = text::to_lower(name);
    if (seen.insert(lower).second) out.push_back({std::move(lower), std::string(name)});
  }
  return out;
}

int path_depth(std::string_view folder) {
  const std::string f = normalized_folder(folder);
  std::string_view v = f;
  while (!v.empty() && v.front() == '\\') v.remove_prefix(1);
  return static_cast<int>(std::count(v.begin(), v.end(), '\\'));
}

bool folder_matches(std::string_view folder, const std::set<std::string>& prefixes) {
  const std::string f = normalized_folder(folder);
  for (const auto& raw : prefixes) {
    const std::string p = normalized_folder(raw);
    if (f == p) return true;
    if (f.size() > p.size() && f.compare(0, p.size(), p) == 0 && f[p.size()] == '\\') return true;
  }
  return false;
}

DocumentationResult documentation_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config) {
  DocumentationResult r;
  const auto it = config.safe_executables.find(text::to_lower(event.file_name));
  r.documented = it != config.safe_executables.end();
  if (r.documented && !text::trim(event.folder_path).empty()) {
    r.wrong_location = !folder_matches(event.folder_path, it->second.expected_folder_paths);
  }
  r.path_depth = path_depth(event.folder_path);
  if (event.parent_folder_path && !text::trim(*event.parent_folder_path).empty() && !text::trim(event.folder_path).empty()) {
    r.depth_delta = r.path_depth - path_depth(*event.parent_folder_path);
  }
  return r;
}

FilesystemPathResult filesystem_path_features(std::string_view cmd) {
  FilesystemPathResult r;
  const std::size_t n = cmd.size();
  std::size_t second = std::string_view::npos;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool start = false;
    const char c = cmd[i];
    if (std::isalpha(static_cast<unsigned char>(c)) && i + 2 < n && cmd[i + 1] == ':' &&
        (cmd[i + 2] == '\\' || cmd[i + 2] == '/') && (i == 0 || !is_alnum(cmd[i - 1]))) {
      start = true;
    } else if (c == '\\' && i + 2 < n && cmd[i + 1] == '\\' && is_alnum(cmd[i + 2]) &&
               (i == 0 || cmd[i - 1] != '\\')) {
      start = true;
    } else if (c == '%' && (i == 0 || cmd[i - 1] != '%')) {
      std::size_t j = i + 1;
      while (j < n && (is_alnum(cmd[j]) || cmd[j] == '_')) ++j;
      if (j > i + 1 && j + 1 < n && cmd[j] == '%' && cmd[j + 1] == '\\') start = true;
    }
    if (start) {
      ++count;
      if (count == 2) second = i;
      i += 2;
    }
  }
  r.path_count = static_cast<double>(count);
  r.multiple = count >= 2;
  if (r.multiple) {
    std::size_t end = second;
    while (end < n && cmd[end] != ' ' && cmd[end] != '\t' && cmd[end] != '"') ++end;
    r.evidence = std::string(cmd.substr(second, end - second));
  }
  return r;
}

std::array<double, 4> char_proportions(std::string_view cmd) {
  std::array<double, 4> p{};
  if (cmd.empty()) return p;
  std::array<std::size_t, 4> counts{};
  for (unsigned char c : cmd) {
    if (c >= 'a' && c <= 'z') {
      ++counts[0];
    } else if (c >= 'A' && c <= 'Z') {
      ++counts[1];
    } else if (c >= '0' && c <= '9') {
      ++counts[2];
    } else {
      ++counts[3];
    }
  }
  for (std::size_t k = 0; k < 4; ++k) p[k] = static_cast<double>(counts[k]) / static_cast<double>(cmd.size());
  return p;
}

std::array<double, kTrigramDims> trigram_vector(std::string_view cmd) {
  std::array<double, kTrigramDims> v{};
  if (cmd.size() < 3) return v;
  const std::string lower = text::to_lower(cmd);
  std::array<std::size_t, kTrigramDims> counts{};
  for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
    ++counts[text::fnv1a64(std::string_view(lower).substr(i, 3)) % kTrigramDims];
  }
  const double total = static_cast<double>(lower.size() - 2);
  for (std::size_t k = 0; k < kTrigramDims; ++k) v[k] = static_cast<double>(counts[k]) / total;
  return v;
}

}  // namespace isoex::features
