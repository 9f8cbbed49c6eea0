#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "isoex/ingest.hpp"
#include "isoex/kernels.hpp"
#include "isoex/rules.hpp"

namespace isoex::features {

// The 27 feature-idea families. Values are the family numbers.
enum class Family : std::uint8_t {
  kIoc = 1,
  kObfuscation,
  kParameters,
  kParentChild,
  kSiblings,
  kDocumentation,
  kScheduled,
  kHex,
  kBase64,
  kPhishing,
  kExtensions,
  kHostnames,
  kUrlEncoded,
  kWebremote,
  kEntropy,
  kDump,
  kFilesystemPaths,
  kIntegrity,
  kPathLength,
  kLaunchTime,
  kFrequency,
  kExecutionTime,
  kTimeOutliers,
  kLanguageVector,
  kCharDistribution,
  kMarkov,
  kImageEvents,
};

inline constexpr int kFamilyCount = 27;

std::string_view family_name(Family f);

enum class Kind : std::uint8_t { kBoolean, kNumeric };
enum class Target : std::uint8_t { kChild, kParent, kPair };

std::string_view kind_name(Kind k);
std::string_view target_name(Target t);

struct FeatureSpec {
  std::string feature_id;
  Family family;
  Kind kind;
  Target target;
  // Contains at most one "{value}" placeholder.
  std::string description_template;
  // Numeric features that receive a derived top-quantile boolean.
  bool top_quantile_companion = false;
};

std::string render_description(const FeatureSpec& spec, std::string_view value);

struct FeatureVector {
  std::string event_id;
  std::vector<double> values;
  // Keyed by registry index; present only for activated booleans.
  std::map<std::size_t, std::string> evidence;
  bool synthetic = false;
};

struct FeatureMatrix {
  std::vector<FeatureSpec> registry;
  std::vector<FeatureVector> rows;
  // Aligned with the registry; nullopt for numeric features.
  std::vector<std::optional<double>> activation_rates;
  // Number of real events on which each family had the data it needs.
  std::map<Family, std::size_t> coverage;

  std::size_t feature_count() const { return registry.size(); }
  std::optional<std::size_t> index_of(std::string_view feature_id) const;
  void recompute_activation_rates();
};

// ---------------------------------------------------------------------------
// Per-command-line and per-event rules.

struct EncodingResult {
  double entropy = 0.0;
  bool high_entropy = false;
  bool hex = false;
  bool base64 = false;
  bool url_encoded = false;
  std::string hex_evidence;
  std::string base64_evidence;
  std::string url_evidence;
};

EncodingResult encoding_features(std::string_view cmd, const rules::RuleConfig& config);

struct KeywordHit {
  bool hit = false;
  std::string evidence;
};

struct KeywordResult {
  KeywordHit ioc, scheduled, phishing, extensions, hostnames, webremote, dump;
};

KeywordResult keyword_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config);

struct ObfuscationResult {
  bool marker = false;          // obfuscation-list substring present
  bool filename_absent = false;  // executable name missing from its own command line
  double marker_count = 0.0;
  std::string marker_evidence;
  std::string absent_evidence;
};

ObfuscationResult obfuscation_features(std::string_view file_name, std::string_view cmd,
                                       const rules::RuleConfig& config);

struct Parameter {
  std::string name;      // lowercase
  std::string original;  // as written
};

// Tokens starting with "-", "--" or "/", cut at "=". Distinct by lowercase name,
// in order of first appearance.
std::vector<Parameter> extract_parameters(std::string_view cmd);

struct DocumentationResult {
  bool documented = false;
  bool wrong_location = false;
  double path_depth = 0.0;
  double depth_delta = 0.0;
};

DocumentationResult documentation_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config);

// Folder separator count after the drive root: "C:\Windows\System32" -> 2.
int path_depth(std::string_view folder);
bool folder_matches(std::string_view folder, const std::set<std::string>& prefixes);

struct FilesystemPathResult {
  double path_count = 0.0;
  bool multiple = false;
  std::string evidence;
};

FilesystemPathResult filesystem_path_features(std::string_view cmd);

// Lower, upper, digit, other proportions.
std::array<double, 4> char_proportions(std::string_view cmd);

inline constexpr std::size_t kTrigramDims = 16;
std::array<double, kTrigramDims> trigram_vector(std::string_view cmd);

// ---------------------------------------------------------------------------
// Device-corpus statistics (pass 1).

struct InstanceKey {
  std::int64_t pid = 0;
  std::int64_t creation_ns = 0;
  bool operator==(const InstanceKey&) const = default;
};

struct InstanceKeyHash {
  std::size_t operator()(const InstanceKey& k) const noexcept {
    return std::hash<std::int64_t>()(k.pid) * 1000003u ^ std::hash<std::int64_t>()(k.creation_ns);
  }
};

// Character-level order-2 Markov model with add-one smoothing.
class MarkovModel {
 public:
  void fit(const std::vector<std::string_view>& lines);
  // Mean negative log2 probability per character; 0 for an empty string.
  double score(std::string_view line) const;

 private:
  static std::uint32_t ctx(unsigned char a, unsigned char b) { return (std::uint32_t(a) << 8) | b; }
  std::unordered_map<std::uint32_t, std::uint32_t> context_totals_;
  std::unordered_map<std::uint32_t, std::uint32_t> transitions_;  // ctx << 8 | next
  double alphabet_ = 1.0;
};

struct ExecutableStats {
  std::size_t count = 0;
  std::size_t active_days = 0;
  std::array<std::size_t, 6> integrity_histogram{};
  std::map<std::string, std::size_t> parameter_frequency;  // events containing the parameter
  std::size_t duration_n = 0;
  double duration_mean = 0.0;
  double duration_std = 0.0;
  std::array<double, 4> mean_char_proportions{};
  double mean_char_distance = 0.0;

  // Most frequent known integrity rank (lowest rank on ties), or -1.
  int modal_integrity() const;
};

struct CorpusStats {
  std::unordered_map<std::string, ExecutableStats> executables;  // lowercase name
  std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;  // (parent, child)
  std::unordered_map<std::string, std::size_t> child_totals;   // child -> events with known parent
  std::unordered_map<std::string, std::size_t> parent_totals;  // parent -> child events
  std::size_t parent_vocabulary = 0;
  std::size_t child_vocabulary = 0;
  std::unordered_map<InstanceKey, std::vector<std::size_t>, InstanceKeyHash> children_by_parent;
  std::unordered_map<InstanceKey, std::size_t, InstanceKeyHash> instance_index;
  int device_modal_integrity = 0;
  std::unordered_map<std::string, std::size_t> image_load_counts;  // lowercase image name
  bool has_image_data = false;
  std::int64_t first_bucket = 0;
  std::vector<std::size_t> hourly_counts;
  std::vector<bool> burst_buckets;
  MarkovModel markov;
};

CorpusStats build_corpus_stats(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config);

// ---------------------------------------------------------------------------
// Dataset-level families. Each returns one entry per event, in dataset order.

struct ParameterResult {
  double rare_count = 0.0;
  bool rare = false;
  std::string evidence;
};

ParameterResult parameter_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config,
                                   const CorpusStats& stats);

struct LineageResult {
  bool has_parent = false;
  bool has_parent_key = false;
  double parent_rarity = 0.0;
  double child_rarity = 0.0;
  double sibling_count = 0.0;
  double distinct_child_count = 0.0;
  bool child_outlived_parent = false;
};

LineageResult lineage_for(std::size_t index, const ingest::DeviceDataset& dataset, const CorpusStats& stats);
std::vector<LineageResult> lineage_features(const ingest::DeviceDataset& dataset, const CorpusStats& stats);

struct IntegrityResult {
  double rank = 0.0;
  bool deviation = false;
};

IntegrityResult integrity_features(const ingest::ProcessEvent& event, const CorpusStats& stats,
                                   const rules::RuleConfig& config);

struct TemporalResult {
  bool offhours = false;
  double occurrences = 0.0;
  double active_days = 0.0;
  bool rare_process = false;
  bool has_duration = false;
  double duration_abs_z = 0.0;
  bool duration_outlier = false;
  bool burst = false;
};

TemporalResult temporal_for(const ingest::ProcessEvent& event, const CorpusStats& stats,
                            const rules::RuleConfig& config);
std::vector<TemporalResult> temporal_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config);

struct TextStatisticsResult {
  std::array<double, 4> proportions{};
  bool distribution_outlier = false;
  std::array<double, kTrigramDims> trigrams{};
  double markov_score = 0.0;
};

TextStatisticsResult text_statistics_for(const ingest::ProcessEvent& event, const CorpusStats& stats,
                                         const rules::RuleConfig& config);
std::vector<TextStatisticsResult> text_statistics_features(const ingest::DeviceDataset& dataset,
                                                           const rules::RuleConfig& config);

struct ImageResult {
  double loaded_image_count = 0.0;
  bool rare_image = false;
  bool wrong_location = false;
  std::string rare_evidence;
  std::string location_evidence;
};

ImageResult image_for(const ingest::ProcessEvent& event, const CorpusStats& stats, const rules::RuleConfig& config);
std::vector<ImageResult> image_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config);

// ---------------------------------------------------------------------------
// Matrix assembly.

// Registry of primary features, in column order (derived flags excluded).
const std::vector<FeatureSpec>& primary_registry();

// Primary features for every event plus the derived top-quantile flags.
// Bit-identical for both execution modes.
FeatureMatrix extract_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config,
                               kernels::Execution exec = kernels::Execution::kParallel);

// Appends "<id>.top" booleans for registry entries marked as companions.
FeatureMatrix derive_top_quantile_flags(FeatureMatrix matrix, const rules::RuleConfig& config);

// Nearest-rank threshold with ties included; returns per-row flags.
std::vector<bool> top_quantile_flags(const std::vector<double>& values, double top_quantile);

std::string export_matrix_csv(const FeatureMatrix& matrix);
std::string export_registry_json(const FeatureMatrix& matrix);

}  // namespace isoex::features
