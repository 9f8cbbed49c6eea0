#include "isoex/rules.hpp"

#include <cmath>
#include <cstdio>

#include "isoex/error.hpp"
#include "isoex/text.hpp"
#include "json.hpp"

namespace isoex::rules {

using nlohmann::json;

namespace {

const std::string kDefaultConfig = R"json({
  "keyword_lists": {
    "obfuscation": ["^", "`", "[char]", "-join", "'+'", "\"+\"", "${", "%comspec:~", "-bxor"],
    "scheduled": ["schtasks", "/create /tn", "register-scheduledtask", "new-scheduledtask", "at.exe"],
    "phishing": [".pdf.exe", ".doc.exe", ".docx.exe", ".xls.exe", ".xlsx.exe", ".jpg.exe", ".png.exe", ".txt.exe", ".pdf.scr", ".doc.js"],
    "suspicious_extensions": [".hta", ".vbs", ".vbe", ".scr", ".jse", ".wsf", ".pif", ".cpl", ".lnk"],
    "suspicious_hostnames": ["pastebin.com", "ngrok.io", "transfer.sh", "raw.githubusercontent.com", "duckdns.org", "no-ip.org", "anonfiles.com"],
    "webremote": ["invoke-webrequest", "downloadstring", "downloadfile", "certutil -urlcache", "bitsadmin /transfer", "net.webclient", "start-bitstransfer", "iwr ", "wget ", "curl "],
    "dump": ["mimikatz", "lsass", "sekurlsa", "procdump", "comsvcs.dll", "minidump", "ntds.dit", "reg save hklm\\sam"],
    "ioc_strings": ["mimikatz", "cobaltstrike", "beacon.dll", "psexesvc"],
    "base64": ["-encodedcommand", "frombase64string", " -enc ", " -e jab"]
  },
  "safe_executables": {
    "svchost.exe": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": ["-k", "-p", "-s"], "typical_integrity": ["System"]},
    "cmd.exe": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": ["/c", "/k", "/q", "/d", "/s"], "typical_integrity": ["Medium", "High", "System"]},
    "powershell.exe": {"expected_folder_paths": ["c:\\windows\\system32\\windowspowershell", "c:\\windows\\syswow64\\windowspowershell"], "known_parameters": ["-noprofile", "-executionpolicy", "-file", "-command", "-noninteractive", "-windowstyle"], "typical_integrity": ["Medium", "High"]},
    "explorer.exe": {"expected_folder_paths": ["c:\\windows"], "known_parameters": ["/factory"], "typical_integrity": ["Medium"]},
    "rundll32.exe": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": [], "typical_integrity": ["Medium", "System"]},
    "conhost.exe": {"expected_folder_paths": ["c:\\windows\\system32"], "known_parameters": ["0xffffffff", "-forcev1"], "typical_integrity": ["Medium", "High", "System"]},
    "taskhostw.exe": {"expected_folder_paths": ["c:\\windows\\system32"], "known_parameters": [], "typical_integrity": ["Medium"]},
    "msedge.exe": {"expected_folder_paths": ["c:\\program files (x86)\\microsoft\\edge\\application"], "known_parameters": ["--type", "--lang", "--field-trial-handle", "--mojo-platform-channel-handle", "--service-sandbox-type", "--utility-sub-type"], "typical_integrity": ["Low", "Medium", "Untrusted"]},
    "chrome.exe": {"expected_folder_paths": ["c:\\program files\\google\\chrome\\application"], "known_parameters": ["--type", "--lang", "--field-trial-handle", "--mojo-platform-channel-handle", "--service-sandbox-type", "--utility-sub-type", "--renderer-client-id"], "typical_integrity": ["Low", "Medium", "Untrusted"]},
    "identity_helper.exe": {"expected_folder_paths": ["c:\\program files (x86)\\microsoft\\edge\\application"], "known_parameters": ["--type", "--utility-sub-type", "--lang", "--service-sandbox-type", "--mojo-platform-channel-handle", "--field-trial-handle", "/prefetch:8"], "typical_integrity": ["Medium"]},
    "winword.exe": {"expected_folder_paths": ["c:\\program files\\microsoft office\\root\\office16"], "known_parameters": ["/n", "/o", "/q"], "typical_integrity": ["Medium"]},
    "excel.exe": {"expected_folder_paths": ["c:\\program files\\microsoft office\\root\\office16"], "known_parameters": ["/e", "/x"], "typical_integrity": ["Medium"]},
    "msiexec.exe": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": ["/i", "/v", "/qn", "/x"], "typical_integrity": ["System", "Installer", "Medium"]},
    "kernel32.dll": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": [], "typical_integrity": []},
    "ntdll.dll": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": [], "typical_integrity": []},
    "version.dll": {"expected_folder_paths": ["c:\\windows\\system32", "c:\\windows\\syswow64"], "known_parameters": [], "typical_integrity": []}
  },
  "thresholds": {
    "entropy_flag": 4.5,
    "rare_activation_tau": 0.01,
    "top_quantile": 0.05,
    "time_outlier_k": 3.0,
    "rare_count": 5
  },
  "utc_offset_minutes": 0
}
)json";

const std::set<std::string> kEmpty;

bool known_list(std::string_view name) {
  for (auto l : kKeywordLists) {
    if (l == name) return true;
  }
  return false;
}

std::set<std::string> lowered_strings(const json& arr, const std::string& field) {
  if (!arr.is_array()) throw ValidationError(field, "must be an array of strings");
  std::set<std::string> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = field + "[" + std::to_string(i) + "]";
    if (!arr[i].is_string()) throw ValidationError(where, "must be a string");
    std::string v = text::to_lower(arr[i].get<std::string>());
    if (v.empty()) throw ValidationError(where, "must be non-empty");
    out.insert(std::move(v));
  }
  return out;
}

double threshold_value(const json& t, const char* name, double fallback) {
  auto it = t.find(name);
  if (it == t.end()) return fallback;
  const std::string field = std::string("thresholds.") + name;
  if (!it->is_number()) throw ValidationError(field, "must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
  return v;
}

}  // namespace

const std::set<std::string>& RuleConfig::keywords(std::string_view list) const {
  auto it = keyword_lists.find(std::string(list));
  return it == keyword_lists.end() ? kEmpty : it->second;
}

RuleConfig load_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("config: malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config", "must be a JSON object");

  RuleConfig cfg;
  for (auto name : kKeywordLists) cfg.keyword_lists[std::string(name)] = {};

  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "keyword_lists") {
      if (!it->is_object()) throw ValidationError(key, "must be an object");
      for (auto l = it->begin(); l != it->end(); ++l) {
        if (!known_list(l.key())) throw ValidationError(key + "." + l.key(), "unknown keyword list");
        cfg.keyword_lists[l.key()] = lowered_strings(*l, key + "." + l.key());
      }
    } else if (key == "safe_executables") {
      if (!it->is_object()) throw ValidationError(key, "must be an object");
      for (auto e = it->begin(); e != it->end(); ++e) {
        const std::string base = key + "." + e.key();
        if (e.key().empty()) throw ValidationError(key, "executable names must be non-empty");
        if (!e->is_object()) throw ValidationError(base, "must be an object");
        SafeExecutable exe;
        for (auto f = e->begin(); f != e->end(); ++f) {
          if (f.key() == "expected_folder_paths") {
            exe.expected_folder_paths = lowered_strings(*f, base + ".expected_folder_paths");
          } else if (f.key() == "known_parameters") {
            exe.known_parameters = lowered_strings(*f, base + ".known_parameters");
          } else if (f.key() == "typical_integrity") {
            if (!f->is_array()) throw ValidationError(base + ".typical_integrity", "must be an array");
            for (const auto& lvl : *f) {
              if (!lvl.is_string()) throw ValidationError(base + ".typical_integrity", "entries must be strings");
              exe.typical_integrity.insert(ingest::parse_integrity(lvl.get<std::string>()));
            }
          } else {
            throw ValidationError(base + "." + f.key(), "unknown field");
          }
        }
        cfg.safe_executables[text::to_lower(e.key())] = std::move(exe);
      }
    } else if (key == "thresholds") {
      if (!it->is_object()) throw ValidationError(key, "must be an object");
      for (auto t = it->begin(); t != it->end(); ++t) {
        static constexpr std::string_view kNames[] = {"entropy_flag", "rare_activation_tau", "top_quantile",
                                                      "time_outlier_k", "rare_count"};
        bool ok = false;
        for (auto n : kNames) ok = ok || n == t.key();
        if (!ok) throw ValidationError("thresholds." + t.key(), "unknown threshold");
      }
      Thresholds d;
      cfg.thresholds.entropy_flag = threshold_value(*it, "entropy_flag", d.entropy_flag);
      cfg.thresholds.rare_activation_tau = threshold_value(*it, "rare_activation_tau", d.rare_activation_tau);
      cfg.thresholds.top_quantile = threshold_value(*it, "top_quantile", d.top_quantile);
      cfg.thresholds.time_outlier_k = threshold_value(*it, "time_outlier_k", d.time_outlier_k);
      cfg.thresholds.rare_count = threshold_value(*it, "rare_count", d.rare_count);
    } else if (key == "utc_offset_minutes") {
      if (!it->is_number_integer()) throw ValidationError(key, "must be an integer");
      const auto v = it->get<std::int64_t>();
      if (v < -14 * 60 || v > 14 * 60) throw ValidationError(key, "must lie within +/- 14 hours");
      cfg.utc_offset_minutes = static_cast<int>(v);
    } else {
      throw ValidationError(key, "unknown top-level field");
    }
  }

  const auto& t = cfg.thresholds;
  if (!(t.top_quantile > 0.0 && t.top_quantile < 1.0)) {
    throw ValidationError("thresholds.top_quantile", "must lie in (0, 1)");
  }
  if (!(t.rare_activation_tau > 0.0 && t.rare_activation_tau < 1.0)) {
    throw ValidationError("thresholds.rare_activation_tau", "must lie in (0, 1)");
  }
  if (!(t.entropy_flag >= 0.0)) throw ValidationError("thresholds.entropy_flag", "must be non-negative");
  if (!(t.time_outlier_k > 0.0)) throw ValidationError("thresholds.time_outlier_k", "must be positive");
  if (!(t.rare_count >= 0.0)) throw ValidationError("thresholds.rare_count", "must be non-negative");
  return cfg;
}

RuleConfig load_config_file(const std::string& path) { return load_config(text::read_file(path)); }

std::string serialize_config(const RuleConfig& config) {
  json doc;
  json lists = json::object();
  for (const auto& [name, words] : config.keyword_lists) lists[name] = words;
  doc["keyword_lists"] = lists;
  json exes = json::object();
  for (const auto& [name, exe] : config.safe_executables) {
    json levels = json::array();
    for (auto lvl : exe.typical_integrity) levels.push_back(std::string(ingest::integrity_name(lvl)));
    exes[name] = {{"expected_folder_paths", exe.expected_folder_paths},
                  {"known_parameters", exe.known_parameters},
                  {"typical_integrity", levels}};
  }
  doc["safe_executables"] = exes;
  doc["thresholds"] = {{"entropy_flag", config.thresholds.entropy_flag},
                       {"rare_activation_tau", config.thresholds.rare_activation_tau},
                       {"top_quantile", config.thresholds.top_quantile},
                       {"time_outlier_k", config.thresholds.time_outlier_k},
                       {"rare_count", config.thresholds.rare_count}};
  doc["utc_offset_minutes"] = config.utc_offset_minutes;
  return doc.dump(2);
}

std::string config_digest(const RuleConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(text::fnv1a64(serialize_config(config))));
  return buf;
}

const std::string& default_config_json() { return kDefaultConfig; }

RuleConfig default_config() {
  static const RuleConfig cfg = load_config(kDefaultConfig);
  return cfg;
}

}  // namespace isoex::rules
