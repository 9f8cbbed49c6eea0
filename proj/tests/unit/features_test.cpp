#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "isoex/features.hpp"
#include "isoex/text.hpp"
#include "support/corpus.hpp"

using namespace isoex;
using features::FeatureMatrix;
using ingest::ProcessEvent;

namespace {

const rules::RuleConfig& defaults() {
  static const auto c = rules::default_config();
  return c;
}

std::int64_t at(int day, int hour, int minute = 0) {
  // 2023-05-01 is a Monday.
  return (days_from_civil(2023, 5, 1) + day) * kNanosPerDay + hour * kNanosPerHour + minute * 60 * kNanosPerSecond;
}

ProcessEvent make_event(const std::string& id, std::int64_t ts, const std::string& file, const std::string& cmd) {
  ProcessEvent e;
  e.event_id = id;
  e.timestamp = Timestamp{ts, format_timestamp(ts, 0), 0};
  e.device_id = "dev";
  e.file_name = file;
  e.folder_path = "C:\\Windows\\System32";
  e.command_line = cmd;
  e.process_creation_ns = ts;
  e.integrity_level = ingest::IntegrityLevel::kMedium;
  return e;
}

void link(ProcessEvent& child, const ProcessEvent& parent) {
  child.parent_file_name = parent.file_name;
  child.parent_folder_path = parent.folder_path;
  child.parent_command_line = parent.command_line;
  child.parent_process_id = parent.process_id;
  child.parent_creation_ns = parent.process_creation_ns;
}

ingest::DeviceDataset dataset_of(std::vector<ProcessEvent> events) {
  ingest::DeviceDataset ds;
  ds.device_id = "dev";
  ds.events = std::move(events);
  ingest::finalize(ds);
  return ds;
}

double value(const FeatureMatrix& m, const std::string& event_id, const std::string& feature) {
  const auto col = m.index_of(feature);
  EXPECT_TRUE(col.has_value()) << feature;
  for (const auto& row : m.rows) {
    if (row.event_id == event_id) return row.values[*col];
  }
  ADD_FAILURE() << "no row " << event_id;
  return NAN;
}

// Independent order-2 character model with add-one smoothing over the
// observed alphabet plus one reserved symbol.
struct OracleMarkov {
  std::map<std::string, double> context, pair;
  double alphabet = 1.0;
  explicit OracleMarkov(const std::vector<std::string>& lines) {
    std::map<char, bool> seen;
    for (const auto& l : lines) {
      std::string prev = "\x02\x02";
      for (char c : l) {
        seen[c] = true;
        context[prev] += 1;
        pair[prev + c] += 1;
        prev = std::string{prev[1], c};
      }
    }
    alphabet += static_cast<double>(seen.size());
  }
  double score(const std::string& l) const {
    if (l.empty()) return 0.0;
    std::string prev = "\x02\x02";
    double sum = 0.0;
    for (char c : l) {
      const auto ci = context.find(prev);
      const auto pi = pair.find(prev + c);
      const double n = ci == context.end() ? 0.0 : ci->second;
      const double k = pi == pair.end() ? 0.0 : pi->second;
      sum += -std::log((k + 1) / (n + alphabet)) / std::log(2.0);
      prev = std::string{prev[1], c};
    }
    return sum / static_cast<double>(l.size());
  }
};

}  // namespace

TEST(Features, EncodingExamples) {
  const auto& c = defaults();
  EXPECT_DOUBLE_EQ(features::encoding_features("aaaa", c).entropy, 0.0);
  EXPECT_DOUBLE_EQ(features::encoding_features("abab", c).entropy, 1.0);
  const auto empty = features::encoding_features("", c);
  EXPECT_EQ(empty.entropy, 0.0);
  EXPECT_FALSE(empty.high_entropy || empty.hex || empty.base64 || empty.url_encoded);

  const auto enc = features::encoding_features("powershell -EncodedCommand SQBFAFgAIAAoAE4AZQB3AC0ATwBiAGoAZQBjAHQA", c);
  EXPECT_TRUE(enc.base64);
  EXPECT_EQ(enc.base64_evidence, "SQBFAFgAIAAoAE4AZQB3AC0ATwBiAGoAZQBjAHQA");
}

TEST(Features, RandomBase64TokenBeatsPangramEntropy) {
  const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string token;
  std::uint64_t s = 12345;
  for (int i = 0; i < 64; ++i) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    token.push_back(alphabet[(s >> 33) % 64]);
  }
  const auto r = features::encoding_features(token, defaults());
  EXPECT_TRUE(r.base64);
  EXPECT_GT(r.entropy, text::shannon_entropy("the quick brown fox jumps over the lazy dog"));
}

TEST(Features, HexAndUrlEncoding) {
  const auto& c = defaults();
  EXPECT_TRUE(features::encoding_features("x.exe 0x4d5a9000", c).hex);
  EXPECT_TRUE(features::encoding_features("x.exe 4d5a90000300000004000000ffff", c).hex);
  EXPECT_FALSE(features::encoding_features("x.exe 0123456789012345678", c).hex);
  EXPECT_TRUE(features::encoding_features("go.exe %68%74%74%70", c).url_encoded);
  EXPECT_FALSE(features::encoding_features("go.exe %68%74 and 100%", c).url_encoded);
}

TEST(Features, KeywordExamples) {
  auto ev = make_event("e", 0, "evil.pdf.exe", "evil.pdf.exe /s");
  auto r = features::keyword_features(ev, defaults());
  EXPECT_TRUE(r.phishing.hit);
  EXPECT_EQ(r.phishing.evidence, ".pdf.exe");

  ev.command_line = "schtasks /create /tn updater";
  EXPECT_TRUE(features::keyword_features(ev, defaults()).scheduled.hit);

  rules::RuleConfig empty;
  ev.command_line = "mimikatz lsass schtasks .pdf.exe certutil -urlcache";
  const auto none = features::keyword_features(ev, empty);
  for (const auto* h : {&none.ioc, &none.scheduled, &none.phishing, &none.extensions, &none.hostnames, &none.webremote,
                        &none.dump}) {
    EXPECT_FALSE(h->hit);
  }
}

TEST(Features, ObfuscationExamples) {
  const auto& c = defaults();
  EXPECT_FALSE(features::obfuscation_features("cmd.exe", "cmd /c whoami", c).filename_absent);
  EXPECT_TRUE(features::obfuscation_features("cmd.exe", "xyz /c whoami", c).filename_absent);
  const auto r = features::obfuscation_features("powershell.exe", "p^o^w^e^r^s^h^e^l^l", c);
  const std::string s = "p^o^w^e^r^s^h^e^l^l";
  EXPECT_EQ(r.marker_count, static_cast<double>(std::count(s.begin(), s.end(), '^')));
  EXPECT_EQ(r.marker_count, 9.0);
  EXPECT_TRUE(r.marker);
}

TEST(Features, ParameterExtraction) {
  const auto p = features::extract_parameters("identity_helper.exe --type=utility --lang=en-US --TYPE=x");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].name, "--type");
  EXPECT_EQ(p[1].name, "--lang");
}

TEST(Features, PathDepthAndDocumentation) {
  EXPECT_EQ(features::path_depth("C:\\Windows\\System32"), 2);
  EXPECT_EQ(features::path_depth("C:\\"), 0);
  auto ev = make_event("e", 0, "svchost.exe", "svchost.exe -k netsvcs");
  ev.folder_path = "C:\\Users\\bob\\AppData\\Local\\Temp";
  auto d = features::documentation_features(ev, defaults());
  EXPECT_TRUE(d.documented);
  EXPECT_TRUE(d.wrong_location);
  ev.file_name = "unknown_tool.exe";
  d = features::documentation_features(ev, defaults());
  EXPECT_FALSE(d.documented);
  EXPECT_FALSE(d.wrong_location);
}

TEST(Features, CharProportions) {
  const auto p = features::char_proportions("abcdef");
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1] + p[2] + p[3], 0.0);
  const auto q = features::char_proportions("aB1-");
  for (double v : q) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Features, TopQuantileRule) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  const auto flags = features::top_quantile_flags(v, 0.05);
  // Independent nearest-rank threshold: the ceil(0.95 * 100)-th smallest value.
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(std::ceil(0.95 * 100)) - 1];
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(flags[i], v[i] >= threshold);
    count += flags[i];
  }
  EXPECT_EQ(count, 6u);
  EXPECT_EQ(threshold, 95.0);

  for (bool f : features::top_quantile_flags(std::vector<double>(50, 3.0), 0.05)) EXPECT_FALSE(f);
  EXPECT_TRUE(features::top_quantile_flags({2.0}, 0.05)[0]);
  EXPECT_FALSE(features::top_quantile_flags({0.0}, 0.05)[0]);
}

TEST(Features, LineageRarityAndSiblings) {
  std::vector<ProcessEvent> events;
  auto word = make_event("word", at(0, 9), "winword.exe", "winword.exe /n a.docx");
  word.process_id = 10;
  events.push_back(word);
  // Two concurrent children of the same instance.
  for (int i = 0; i < 2; ++i) {
    auto c = make_event("child" + std::to_string(i), at(0, 9, 1 + i), "splwow64.exe", "splwow64.exe 8192");
    c.process_id = 20 + i;
    link(c, word);
    events.push_back(c);
  }
  auto lone_parent = make_event("explorer", at(0, 8), "explorer.exe", "explorer.exe");
  lone_parent.process_id = 30;
  events.push_back(lone_parent);
  auto lone = make_event("lone", at(0, 10), "notepad.exe", "notepad.exe a.txt");
  lone.process_id = 31;
  link(lone, lone_parent);
  events.push_back(lone);

  const auto m = features::extract_features(dataset_of(events), defaults());
  EXPECT_EQ(value(m, "child0", "child.sibling_count"), 1.0);
  EXPECT_EQ(value(m, "child1", "child.sibling_count"), 1.0);
  EXPECT_EQ(value(m, "lone", "child.sibling_count"), 0.0);
  EXPECT_EQ(value(m, "word", "child.distinct_child_count"), 1.0);
}

TEST(Features, ChildRarityMatchesSmoothingFormula) {
  std::vector<ProcessEvent> events;
  auto word = make_event("word", at(0, 8), "winword.exe", "winword.exe");
  word.process_id = 4;
  events.push_back(word);
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    auto c = make_event("c" + std::to_string(i), at(0, 9) + i * kNanosPerSecond, "splwow64.exe", "splwow64.exe 8192");
    c.process_id = 100 + i;
    link(c, word);
    events.push_back(c);
  }
  auto shell = make_event("shell", at(0, 9, 59), "cmd.exe", "cmd.exe /c whoami");
  shell.process_id = 99999;
  link(shell, word);
  events.push_back(shell);
  const auto m = features::extract_features(dataset_of(events), defaults());
  // Vocabulary of child names seen under any parent: {splwow64.exe, cmd.exe}.
  const double expected = 1.0 - (1.0 + 1.0) / ((n + 1.0) + 2.0);
  EXPECT_NEAR(value(m, "shell", "pair.child_rarity"), expected, 1e-12);
  EXPECT_GT(value(m, "shell", "pair.child_rarity"), 0.99);
}

TEST(Features, IdenticalEventsHaveEqualLineageValues) {
  std::vector<ProcessEvent> events;
  for (int i = 0; i < 20; ++i) events.push_back(make_event("e" + std::to_string(i), at(0, 9, i), "a.exe", "a.exe -x"));
  const auto m = features::extract_features(dataset_of(events), defaults());
  for (const char* f : {"pair.parent_rarity", "pair.child_rarity", "child.sibling_count", "child.distinct_child_count"}) {
    const auto col = *m.index_of(f);
    for (const auto& row : m.rows) EXPECT_EQ(row.values[col], m.rows[0].values[col]) << f;
  }
}

TEST(Features, IntegrityDeviation) {
  std::vector<ProcessEvent> events;
  for (int i = 0; i < 8; ++i) events.push_back(make_event("m" + std::to_string(i), at(0, 9, i), "tool.exe", "tool.exe"));
  auto sys = make_event("sys", at(0, 10), "tool.exe", "tool.exe");
  sys.integrity_level = ingest::IntegrityLevel::kSystem;
  events.push_back(sys);
  auto rare1 = make_event("r1", at(0, 11), "rare.exe", "rare.exe");
  auto rare2 = make_event("r2", at(0, 12), "rare.exe", "rare.exe");
  rare2.integrity_level = ingest::IntegrityLevel::kHigh;
  events.push_back(rare1);
  events.push_back(rare2);
  const auto m = features::extract_features(dataset_of(events), defaults());
  EXPECT_EQ(value(m, "sys", "child.integrity_deviation"), 1.0);
  EXPECT_EQ(value(m, "m0", "child.integrity_deviation"), 0.0);
  EXPECT_EQ(value(m, "r2", "child.integrity_deviation"), 0.0);
}

TEST(Features, TemporalRules) {
  std::vector<ProcessEvent> events;
  for (int i = 0; i < 6; ++i) events.push_back(make_event("w" + std::to_string(i), at(i, 10), "common.exe", "common.exe"));
  // 2023-05-07 is a Sunday.
  events.push_back(make_event("night", at(6, 3, 12), "once.exe", "once.exe"));
  const auto m = features::extract_features(dataset_of(events), defaults());
  EXPECT_EQ(value(m, "night", "child.offhours"), 1.0);
  EXPECT_EQ(value(m, "night", "child.rare_process"), 1.0);
  EXPECT_EQ(value(m, "w0", "child.offhours"), 0.0);
  EXPECT_EQ(value(m, "w0", "child.occurrences"), 6.0);
  EXPECT_EQ(value(m, "w0", "child.active_days"), 6.0);
  EXPECT_EQ(value(m, "w0", "child.rare_process"), 0.0);
}

TEST(Features, BurstHour) {
  std::vector<ProcessEvent> events;
  int id = 0;
  const int hours = 29 * 24;
  for (int h = 0; h < hours; ++h) {
    for (int k = 0; k < 10; ++k) {
      events.push_back(make_event("u" + std::to_string(id++), at(0, 0) + h * kNanosPerHour + k * 60 * kNanosPerSecond,
                                  "svc.exe", "svc.exe"));
    }
  }
  for (int k = 0; k < 500; ++k) {
    events.push_back(make_event("b" + std::to_string(k), at(0, 0) + hours * kNanosPerHour + k * kNanosPerSecond,
                                "svc.exe", "svc.exe"));
  }
  // Oracle: previous 24 hourly counts are all 10, so mean 10 and sd 0.
  const double mean = 10.0, sd = 0.0;
  ASSERT_GT(500.0, mean + 3.0 * sd);
  const auto m = features::extract_features(dataset_of(events), defaults());
  EXPECT_EQ(value(m, "b0", "child.burst"), 1.0);
  EXPECT_EQ(value(m, "b499", "child.burst"), 1.0);
  EXPECT_EQ(value(m, "u5000", "child.burst"), 0.0);
}

TEST(Features, MarkovMatchesOracle) {
  std::vector<std::string> lines;
  for (int i = 0; i < 19; ++i) lines.push_back("svchost.exe -k netsvcs -p -s task" + std::to_string(i % 4));
  lines.push_back("QZ#|~@QZ#|~@QZ#|~@");
  features::MarkovModel model;
  std::vector<std::string_view> views(lines.begin(), lines.end());
  model.fit(views);
  const OracleMarkov oracle(lines);
  std::vector<double> scores;
  for (const auto& l : lines) {
    EXPECT_NEAR(model.score(l), oracle.score(l), 1e-12);
    scores.push_back(model.score(l));
  }
  auto sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double median = (sorted[9] + sorted[10]) / 2.0;
  EXPECT_GT(scores.back(), median);
  EXPECT_EQ(model.score(lines[0]), model.score(lines[4]));
}

TEST(Features, ImageRules) {
  std::vector<ProcessEvent> events;
  for (int i = 0; i < 10; ++i) {
    auto e = make_event("e" + std::to_string(i), at(0, 9, i), "app.exe", "app.exe");
    e.loaded_images.push_back({"kernel32.dll", "C:\\Windows\\System32", e.timestamp.ns});
    events.push_back(e);
  }
  events[0].loaded_images.push_back({"never_seen.dll", "C:\\Users\\x\\AppData", events[0].timestamp.ns});
  auto bare = make_event("bare", at(0, 11), "other.exe", "other.exe");
  events.push_back(bare);
  auto ds = dataset_of(events);
  // Image counts come from the raw image events.
  for (const auto& e : ds.events) {
    for (const auto& img : e.loaded_images) {
      ingest::ImageLoadEvent ie;
      ie.timestamp = e.timestamp;
      ie.image_file_name = img.file_name;
      ie.image_folder_path = img.folder_path;
      ds.image_events.push_back(ie);
    }
  }
  const auto m = features::extract_features(ds, defaults());
  EXPECT_EQ(value(m, "e0", "child.rare_image"), 1.0);
  EXPECT_EQ(value(m, "e0", "child.loaded_image_count"), 2.0);
  EXPECT_EQ(value(m, "e1", "child.rare_image"), 0.0);
  EXPECT_EQ(value(m, "bare", "child.rare_image"), 0.0);
  EXPECT_EQ(value(m, "bare", "child.loaded_image_count"), 0.0);
  EXPECT_EQ(value(m, "bare", "child.image_wrong_location"), 0.0);
}

class CorpusFeatures : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new fixtures::Corpus(fixtures::make_workstation_corpus(21, 1500));
    matrix_ = new FeatureMatrix(features::extract_features(corpus_->dataset, defaults(), kernels::Execution::kParallel));
  }
  static void TearDownTestSuite() {
    delete matrix_;
    delete corpus_;
  }
  static fixtures::Corpus* corpus_;
  static FeatureMatrix* matrix_;
};
fixtures::Corpus* CorpusFeatures::corpus_ = nullptr;
FeatureMatrix* CorpusFeatures::matrix_ = nullptr;

TEST_F(CorpusFeatures, SerialEqualsParallelBitwise) {
  const auto serial = features::extract_features(corpus_->dataset, defaults(), kernels::Execution::kSerial);
  EXPECT_EQ(features::export_matrix_csv(serial), features::export_matrix_csv(*matrix_));
  for (std::size_t r = 0; r < serial.rows.size(); ++r) {
    ASSERT_EQ(0, std::memcmp(serial.rows[r].values.data(), matrix_->rows[r].values.data(),
                             serial.rows[r].values.size() * sizeof(double)));
  }
}

TEST_F(CorpusFeatures, BooleansAreZeroOneAndRatesMatchRecount) {
  for (std::size_t f = 0; f < matrix_->feature_count(); ++f) {
    if (matrix_->registry[f].kind != features::Kind::kBoolean) continue;
    double active = 0;
    for (const auto& row : matrix_->rows) {
      const double v = row.values[f];
      ASSERT_TRUE(v == 0.0 || v == 1.0) << matrix_->registry[f].feature_id;
      active += v;
    }
    ASSERT_TRUE(matrix_->activation_rates[f].has_value());
    EXPECT_DOUBLE_EQ(*matrix_->activation_rates[f], active / static_cast<double>(matrix_->rows.size()));
  }
}

TEST_F(CorpusFeatures, EntropyWithinBounds) {
  const auto col = *matrix_->index_of("child.entropy");
  for (std::size_t r = 0; r < matrix_->rows.size(); ++r) {
    const auto& cmd = corpus_->dataset.events[r].command_line;
    std::map<char, int> distinct;
    for (char c : cmd) distinct[c]++;
    const double v = matrix_->rows[r].values[col];
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, distinct.empty() ? 0.0 : std::log2(static_cast<double>(distinct.size())) + 1e-12);
  }
}

TEST_F(CorpusFeatures, EvidenceIsLiteralSubstring) {
  static const std::set<features::Family> kCommandLineFamilies = {
      features::Family::kIoc,        features::Family::kScheduled, features::Family::kHex,
      features::Family::kBase64,     features::Family::kPhishing,  features::Family::kExtensions,
      features::Family::kHostnames,  features::Family::kUrlEncoded, features::Family::kWebremote,
      features::Family::kDump};
  std::size_t checked = 0;
  for (std::size_t r = 0; r < matrix_->rows.size(); ++r) {
    for (const auto& [f, evidence] : matrix_->rows[r].evidence) {
      const auto& spec = matrix_->registry[f];
      if (spec.target != features::Target::kChild || !kCommandLineFamilies.contains(spec.family)) continue;
      EXPECT_NE(corpus_->dataset.events[r].command_line.find(evidence), std::string::npos)
          << spec.feature_id << " " << evidence;
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST_F(CorpusFeatures, RowPermutationInvariance) {
  auto shuffled = corpus_->dataset;
  std::reverse(shuffled.events.begin(), shuffled.events.end());
  std::rotate(shuffled.events.begin(), shuffled.events.begin() + 17, shuffled.events.end());
  const auto m = features::extract_features(shuffled, defaults(), kernels::Execution::kSerial);
  std::map<std::string, const features::FeatureVector*> by_id;
  for (const auto& row : m.rows) by_id[row.event_id] = &row;
  for (const auto& row : matrix_->rows) {
    const auto& other = by_id.at(row.event_id)->values;
    for (std::size_t f = 0; f < row.values.size(); ++f) {
      ASSERT_EQ(other[f], row.values[f]) << row.event_id << " " << m.registry[f].feature_id;
    }
  }
}

TEST_F(CorpusFeatures, NeutralPolicyForParentFields) {
  auto stripped = corpus_->dataset;
  for (auto& e : stripped.events) {
    e.parent_file_name.reset();
    e.parent_folder_path.reset();
    e.parent_command_line.reset();
    e.parent_process_id.reset();
    e.parent_creation_ns.reset();
  }
  const auto m = features::extract_features(stripped, defaults(), kernels::Execution::kSerial);
  static const std::set<features::Family> kUntouched = {
      features::Family::kIoc,       features::Family::kObfuscation, features::Family::kHex,
      features::Family::kBase64,    features::Family::kPhishing,    features::Family::kExtensions,
      features::Family::kHostnames, features::Family::kUrlEncoded,  features::Family::kWebremote,
      features::Family::kDump,      features::Family::kScheduled,   features::Family::kEntropy};
  for (std::size_t f = 0; f < m.feature_count(); ++f) {
    const auto& spec = m.registry[f];
    if (spec.target != features::Target::kChild || !kUntouched.contains(spec.family)) continue;
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
      ASSERT_EQ(m.rows[r].values[f], matrix_->rows[r].values[f]) << spec.feature_id;
    }
  }
}

TEST_F(CorpusFeatures, RegistryExportsAndDescriptions) {
  const auto json = features::export_registry_json(*matrix_);
  EXPECT_NE(json.find("child.base64"), std::string::npos);
  std::set<std::string> ids;
  for (const auto& spec : matrix_->registry) {
    EXPECT_TRUE(ids.insert(spec.feature_id).second) << spec.feature_id;
    EXPECT_LE(std::count(spec.description_template.begin(), spec.description_template.end(), '{'), 1);
  }
  const auto& first_top = *std::find_if(matrix_->registry.begin(), matrix_->registry.end(),
                                        [](const auto& s) { return s.feature_id.ends_with(".top"); });
  EXPECT_EQ(first_top.kind, features::Kind::kBoolean);
}
