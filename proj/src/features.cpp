#include "isoex/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "isoex/text.hpp"
#include "json.hpp"

namespace isoex::features {

namespace {

// Column positions of the primary registry.
enum Col : std::size_t {
  kIoc,
  kObfuscationMarker,
  kFilenameAbsent,
  kObfuscationCount,
  kRareParameterCount,
  kRareParameter,
  kParentRarity,
  kChildRarity,
  kSiblingCount,
  kDistinctChildCount,
  kOutlivedParent,
  kDocumented,
  kWrongLocation,
  kScheduled,
  kHex,
  kBase64,
  kPhishing,
  kExtension,
  kHostname,
  kUrlEncoded,
  kWebremote,
  kEntropy,
  kHighEntropy,
  kDump,
  kPathCount,
  kMultiplePaths,
  kIntegrityRank,
  kIntegrityDeviation,
  kPathDepth,
  kDepthDelta,
  kOffhours,
  kOccurrences,
  kActiveDays,
  kRareProcess,
  kDurationZ,
  kDurationOutlier,
  kBurst,
  kTrigram0,
  kLowerRatio = kTrigram0 + kTrigramDims,
  kUpperRatio,
  kDigitRatio,
  kSpecialRatio,
  kCharOutlier,
  kMarkov,
  kImageCount,
  kRareImage,
  kImageWrongLocation,
  kParentEntropy,
  kParentHighEntropy,
  kParentBase64,
  kParentObfuscation,
  kColumnCount,
};

std::vector<FeatureSpec> make_registry() {
  using F = Family;
  using K = Kind;
  using T = Target;
  std::vector<FeatureSpec> r(kColumnCount);
  auto def = [&](Col c, std::string id, F f, K k, T t, std::string tmpl, bool top = false) {
    r[c] = FeatureSpec{std::move(id), f, k, t, std::move(tmpl), top};
  };
  def(kIoc, "child.ioc", F::kIoc, K::kBoolean, T::kChild, "indicator of compromise {value} in command line");
  def(kObfuscationMarker, "child.obfuscation_marker", F::kObfuscation, K::kBoolean, T::kChild, "obfuscation marker {value} in command line");
  def(kFilenameAbsent, "child.filename_absent", F::kObfuscation, K::kBoolean, T::kChild, "executable name missing from its command line (invoked as {value})");
  def(kObfuscationCount, "child.obfuscation_marker_count", F::kObfuscation, K::kNumeric, T::kChild, "{value} obfuscation markers", true);
  def(kRareParameterCount, "child.rare_parameter_count", F::kParameters, K::kNumeric, T::kChild, "{value} undocumented rarely used parameters", true);
  def(kRareParameter, "child.rare_parameter", F::kParameters, K::kBoolean, T::kChild, "undocumented rarely used parameter {value}");
  def(kParentRarity, "pair.parent_rarity", F::kParentChild, K::kNumeric, T::kPair, "parent process unusual for this executable (rarity {value})", true);
  def(kChildRarity, "pair.child_rarity", F::kParentChild, K::kNumeric, T::kPair, "child process unusual for its parent (rarity {value})", true);
  def(kSiblingCount, "child.sibling_count", F::kSiblings, K::kNumeric, T::kChild, "{value} concurrent sibling processes", true);
  def(kDistinctChildCount, "child.distinct_child_count", F::kSiblings, K::kNumeric, T::kChild, "{value} distinct child executables spawned", true);
  def(kOutlivedParent, "child.outlived_parent", F::kSiblings, K::kBoolean, T::kPair, "process kept running after its parent {value} ended");
  def(kDocumented, "child.documented", F::kDocumentation, K::kBoolean, T::kChild, "documented executable {value}");
  def(kWrongLocation, "child.wrong_location", F::kDocumentation, K::kBoolean, T::kChild, "documented executable running from unexpected folder {value}");
  def(kScheduled, "child.scheduled", F::kScheduled, K::kBoolean, T::kChild, "scheduled-task keyword {value}");
  def(kHex, "child.hex", F::kHex, K::kBoolean, T::kChild, "hexadecimal blob {value}");
  def(kBase64, "child.base64", F::kBase64, K::kBoolean, T::kChild, "base64 content {value}");
  def(kPhishing, "child.phishing", F::kPhishing, K::kBoolean, T::kChild, "phishing pattern {value}");
  def(kExtension, "child.suspicious_extension", F::kExtensions, K::kBoolean, T::kChild, "suspicious extension {value}");
  def(kHostname, "child.suspicious_hostname", F::kHostnames, K::kBoolean, T::kChild, "suspicious hostname {value} in command line");
  def(kUrlEncoded, "child.url_encoded", F::kUrlEncoded, K::kBoolean, T::kChild, "URL-encoded sequence {value}");
  def(kWebremote, "child.webremote", F::kWebremote, K::kBoolean, T::kChild, "remote download or C2 indicator {value}");
  def(kEntropy, "child.entropy", F::kEntropy, K::kNumeric, T::kChild, "command line entropy {value} bits/char", true);
  def(kHighEntropy, "child.high_entropy", F::kEntropy, K::kBoolean, T::kChild, "high-entropy command line ({value} bits/char)");
  def(kDump, "child.dump", F::kDump, K::kBoolean, T::kChild, "memory or credential dump keyword {value}");
  def(kPathCount, "child.path_count", F::kFilesystemPaths, K::kNumeric, T::kChild, "{value} filesystem paths in command line", true);
  def(kMultiplePaths, "child.multiple_paths", F::kFilesystemPaths, K::kBoolean, T::kChild, "several filesystem paths in command line ({value})");
  def(kIntegrityRank, "child.integrity_rank", F::kIntegrity, K::kNumeric, T::kChild, "integrity rank {value}");
  def(kIntegrityDeviation, "child.integrity_deviation", F::kIntegrity, K::kBoolean, T::kChild, "integrity level {value} differs from this executable's usual level");
  def(kPathDepth, "child.path_depth", F::kPathLength, K::kNumeric, T::kChild, "folder depth {value}", true);
  def(kDepthDelta, "pair.depth_delta", F::kPathLength, K::kNumeric, T::kPair, "child minus parent folder depth {value}");
  def(kOffhours, "child.offhours", F::kLaunchTime, K::kBoolean, T::kChild, "launched off-hours ({value})");
  def(kOccurrences, "child.occurrences", F::kFrequency, K::kNumeric, T::kChild, "executable seen {value} times on this device");
  def(kActiveDays, "child.active_days", F::kFrequency, K::kNumeric, T::kChild, "executable active on {value} days");
  def(kRareProcess, "child.rare_process", F::kFrequency, K::kBoolean, T::kChild, "rarely seen executable {value}");
  def(kDurationZ, "child.duration_abs_z", F::kExecutionTime, K::kNumeric, T::kChild, "execution time z-score {value}", true);
  def(kDurationOutlier, "child.duration_outlier", F::kExecutionTime, K::kBoolean, T::kChild, "abnormal execution time (|z| = {value})");
  def(kBurst, "child.burst", F::kTimeOutliers, K::kBoolean, T::kChild, "part of an activity burst ({value})");
  for (std::size_t k = 0; k < kTrigramDims; ++k) {
    char id[32];
    std::snprintf(id, sizeof(id), "child.trigram_%02zu", k);
    def(static_cast<Col>(kTrigram0 + k), id, F::kLanguageVector, K::kNumeric, T::kChild,
        "character trigram bucket " + std::to_string(k) + " frequency {value}");
  }
  def(kLowerRatio, "child.lower_ratio", F::kCharDistribution, K::kNumeric, T::kChild, "lowercase share {value}");
  def(kUpperRatio, "child.upper_ratio", F::kCharDistribution, K::kNumeric, T::kChild, "uppercase share {value}");
  def(kDigitRatio, "child.digit_ratio", F::kCharDistribution, K::kNumeric, T::kChild, "digit share {value}");
  def(kSpecialRatio, "child.special_ratio", F::kCharDistribution, K::kNumeric, T::kChild, "special character share {value}");
  def(kCharOutlier, "child.char_distribution_outlier", F::kCharDistribution, K::kBoolean, T::kChild, "unusual character mix for this executable ({value})");
  def(kMarkov, "child.markov_score", F::kMarkov, K::kNumeric, T::kChild, "unusual character sequences (score {value})", true);
  def(kImageCount, "child.loaded_image_count", F::kImageEvents, K::kNumeric, T::kChild, "{value} loaded images", true);
  def(kRareImage, "child.rare_image", F::kImageEvents, K::kBoolean, T::kChild, "rarely loaded image {value}");
  def(kImageWrongLocation, "child.image_wrong_location", F::kImageEvents, K::kBoolean, T::kChild, "documented image loaded from unexpected folder {value}");
  def(kParentEntropy, "parent.entropy", F::kEntropy, K::kNumeric, T::kParent, "parent command line entropy {value} bits/char", true);
  def(kParentHighEntropy, "parent.high_entropy", F::kEntropy, K::kBoolean, T::kParent, "high-entropy parent command line ({value} bits/char)");
  def(kParentBase64, "parent.base64", F::kBase64, K::kBoolean, T::kParent, "base64 content {value} in parent command line");
  def(kParentObfuscation, "parent.obfuscation_marker", F::kObfuscation, K::kBoolean, T::kParent, "obfuscation marker {value} in parent command line");
  return r;
}

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string local_time_label(std::int64_t ns, const rules::RuleConfig& config) {
  static constexpr const char* kDays[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
  const auto c = civil_from_ns(ns + static_cast<std::int64_t>(config.utc_offset_minutes) * 60 * kNanosPerSecond);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s %02u:%02u", kDays[c.weekday], c.hour, c.minute);
  return buf;
}

// Bit per family set when the family had the inputs it needs for a row.
using CoverageBits = std::uint32_t;
CoverageBits bit(Family f) { return CoverageBits{1} << (static_cast<int>(f) - 1); }

struct RowOutput {
  FeatureVector row;
  CoverageBits coverage = 0;
};

RowOutput compute_row(std::size_t i, const ingest::DeviceDataset& dataset, const rules::RuleConfig& config,
                      const CorpusStats& stats) {
  const auto& ev = dataset.events[i];
  RowOutput out;
  auto& row = out.row;
  row.event_id = ev.event_id;
  row.values.assign(kColumnCount, 0.0);
  auto& v = row.values;

  auto set_bool = [&](Col c, bool on, std::string evidence) {
    if (!on) return;
    v[c] = 1.0;
    row.evidence[c] = std::move(evidence);
  };

  CoverageBits cov = 0;
  for (Family f : {Family::kIoc, Family::kObfuscation, Family::kParameters, Family::kScheduled, Family::kHex,
                   Family::kBase64, Family::kPhishing, Family::kExtensions, Family::kHostnames, Family::kUrlEncoded,
                   Family::kWebremote, Family::kEntropy, Family::kDump, Family::kFilesystemPaths,
                   Family::kLaunchTime, Family::kFrequency, Family::kTimeOutliers, Family::kLanguageVector,
                   Family::kCharDistribution, Family::kMarkov}) {
    cov |= bit(f);
  }

  const auto enc = encoding_features(ev.command_line, config);
  v[kEntropy] = enc.entropy;
  set_bool(kHighEntropy, enc.high_entropy, fmt_number(enc.entropy));
  set_bool(kHex, enc.hex, enc.hex_evidence);
  set_bool(kBase64, enc.base64, enc.base64_evidence);
  set_bool(kUrlEncoded, enc.url_encoded, enc.url_evidence);

  const auto kw = keyword_features(ev, config);
  set_bool(kIoc, kw.ioc.hit, kw.ioc.evidence);
  set_bool(kScheduled, kw.scheduled.hit, kw.scheduled.evidence);
  set_bool(kPhishing, kw.phishing.hit, kw.phishing.evidence);
  set_bool(kExtension, kw.extensions.hit, kw.extensions.evidence);
  set_bool(kHostname, kw.hostnames.hit, kw.hostnames.evidence);
  set_bool(kWebremote, kw.webremote.hit, kw.webremote.evidence);
  set_bool(kDump, kw.dump.hit, kw.dump.evidence);

  const auto ob = obfuscation_features(ev.file_name, ev.command_line, config);
  set_bool(kObfuscationMarker, ob.marker, ob.marker_evidence);
  set_bool(kFilenameAbsent, ob.filename_absent, ob.absent_evidence);
  v[kObfuscationCount] = ob.marker_count;

  const auto params = parameter_features(ev, config, stats);
  v[kRareParameterCount] = params.rare_count;
  set_bool(kRareParameter, params.rare, params.evidence);

  const auto lin = lineage_for(i, dataset, stats);
  if (lin.has_parent) cov |= bit(Family::kParentChild);
  if (lin.has_parent_key) cov |= bit(Family::kSiblings);
  v[kParentRarity] = lin.parent_rarity;
  v[kChildRarity] = lin.child_rarity;
  v[kSiblingCount] = lin.sibling_count;
  v[kDistinctChildCount] = lin.distinct_child_count;
  set_bool(kOutlivedParent, lin.child_outlived_parent, ev.parent_file_name.value_or(""));

  const auto doc = documentation_features(ev, config);
  if (!text::trim(ev.folder_path).empty()) cov |= bit(Family::kDocumentation) | bit(Family::kPathLength);
  set_bool(kDocumented, doc.documented, ev.file_name);
  set_bool(kWrongLocation, doc.wrong_location, ev.folder_path);
  v[kPathDepth] = doc.path_depth;
  v[kDepthDelta] = doc.depth_delta;

  const auto paths = filesystem_path_features(ev.command_line);
  v[kPathCount] = paths.path_count;
  set_bool(kMultiplePaths, paths.multiple, paths.evidence);

  const auto integ = integrity_features(ev, stats, config);
  if (ev.integrity_level != ingest::IntegrityLevel::kUnknown) cov |= bit(Family::kIntegrity);
  v[kIntegrityRank] = integ.rank;
  set_bool(kIntegrityDeviation, integ.deviation, std::string(ingest::integrity_name(ev.integrity_level)));

  const auto tmp = temporal_for(ev, stats, config);
  if (tmp.has_duration) cov |= bit(Family::kExecutionTime);
  set_bool(kOffhours, tmp.offhours, local_time_label(ev.timestamp.ns, config));
  v[kOccurrences] = tmp.occurrences;
  v[kActiveDays] = tmp.active_days;
  set_bool(kRareProcess, tmp.rare_process, ev.file_name);
  v[kDurationZ] = tmp.duration_abs_z;
  set_bool(kDurationOutlier, tmp.duration_outlier, fmt_number(tmp.duration_abs_z));
  set_bool(kBurst, tmp.burst, local_time_label(ev.timestamp.ns, config));

  const auto txt = text_statistics_for(ev, stats, config);
  for (std::size_t k = 0; k < kTrigramDims; ++k) v[kTrigram0 + k] = txt.trigrams[k];
  v[kLowerRatio] = txt.proportions[0];
  v[kUpperRatio] = txt.proportions[1];
  v[kDigitRatio] = txt.proportions[2];
  v[kSpecialRatio] = txt.proportions[3];
  set_bool(kCharOutlier, txt.distribution_outlier, ev.file_name);
  v[kMarkov] = txt.markov_score;

  if (stats.has_image_data) {
    cov |= bit(Family::kImageEvents);
    const auto img = image_for(ev, stats, config);
    v[kImageCount] = img.loaded_image_count;
    set_bool(kRareImage, img.rare_image, img.rare_evidence);
    set_bool(kImageWrongLocation, img.wrong_location, img.location_evidence);
  }

  if (ev.parent_command_line) {
    const auto penc = encoding_features(*ev.parent_command_line, config);
    v[kParentEntropy] = penc.entropy;
    set_bool(kParentHighEntropy, penc.high_entropy, fmt_number(penc.entropy));
    set_bool(kParentBase64, penc.base64, penc.base64_evidence);
    const auto pob = obfuscation_features(ev.parent_file_name.value_or(""), *ev.parent_command_line, config);
    set_bool(kParentObfuscation, pob.marker, pob.marker_evidence);
  }

  out.coverage = cov;
  return out;
}

}  // namespace

std::string_view family_name(Family f) {
  static constexpr std::string_view kNames[] = {
      "ioc",        "obfuscation", "parameters",   "parent_child",    "siblings",       "documentation",
      "scheduled",  "hex",         "base64",       "phishing",        "extensions",     "hostnames",
      "url_encoded", "webremote",  "entropy",      "dump",            "filesystem_paths", "integrity",
      "path_length", "launch_time", "frequency",   "execution_time",  "time_outliers",  "language_vector",
      "char_distribution", "markov_score", "image_events"};
  const int idx = static_cast<int>(f) - 1;
  return idx >= 0 && idx < kFamilyCount ? kNames[idx] : "unknown";
}

std::string_view kind_name(Kind k) { return k == Kind::kBoolean ? "boolean" : "numeric"; }

std::string_view target_name(Target t) {
  switch (t) {
    case Target::kChild: return "child";
    case Target::kParent: return "parent";
    case Target::kPair: return "pair";
  }
  return "child";
}

std::string render_description(const FeatureSpec& spec, std::string_view value) {
  std::string out = spec.description_template;
  const auto pos = out.find("{value}");
  if (pos != std::string::npos) out.replace(pos, 7, value);
  return out;
}

std::optional<std::size_t> FeatureMatrix::index_of(std::string_view feature_id) const {
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (registry[i].feature_id == feature_id) return i;
  }
  return std::nullopt;
}

void FeatureMatrix::recompute_activation_rates() {
  activation_rates.assign(registry.size(), std::nullopt);
  for (std::size_t f = 0; f < registry.size(); ++f) {
    if (registry[f].kind != Kind::kBoolean) continue;
    std::size_t active = 0;
    for (const auto& row : rows) active += row.values[f] == 1.0 ? 1 : 0;
    activation_rates[f] = rows.empty() ? 0.0 : static_cast<double>(active) / static_cast<double>(rows.size());
  }
}

const std::vector<FeatureSpec>& primary_registry() {
  static const std::vector<FeatureSpec> registry = make_registry();
  return registry;
}

FeatureMatrix extract_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config,
                               kernels::Execution exec) {
  const CorpusStats stats = build_corpus_stats(dataset, config);

  std::vector<RowOutput> outputs(dataset.events.size());
  kernels::for_each_index(dataset.events.size(), exec,
                          [&](std::size_t i) { outputs[i] = compute_row(i, dataset, config, stats); });

  FeatureMatrix m;
  m.registry = primary_registry();
  m.rows.reserve(outputs.size());
  for (int f = 1; f <= kFamilyCount; ++f) m.coverage[static_cast<Family>(f)] = 0;
  for (auto& o : outputs) {
    for (int f = 1; f <= kFamilyCount; ++f) {
      if (o.coverage & bit(static_cast<Family>(f))) ++m.coverage[static_cast<Family>(f)];
    }
    m.rows.push_back(std::move(o.row));
  }
  return derive_top_quantile_flags(std::move(m), config);
}

std::vector<bool> top_quantile_flags(const std::vector<double>& values, double top_quantile) {
  const std::size_t n = values.size();
  std::vector<bool> flags(n, false);
  if (n == 0) return flags;
  if (n == 1) {
    flags[0] = values[0] > 0.0;
    return flags;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return flags;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  // Nearest rank of the (1 - q) quantile; the epsilon absorbs representation
  // error in (1 - q) * n for exact products.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - top_quantile) * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  const double threshold = sorted[rank - 1];
  for (std::size_t i = 0; i < n; ++i) flags[i] = values[i] >= threshold && values[i] > 0.0;
  return flags;
}

FeatureMatrix derive_top_quantile_flags(FeatureMatrix matrix, const rules::RuleConfig& config) {
  const std::size_t base = matrix.registry.size();
  std::vector<std::size_t> designated;
  for (std::size_t f = 0; f < base; ++f) {
    if (matrix.registry[f].kind == Kind::kNumeric && matrix.registry[f].top_quantile_companion) designated.push_back(f);
  }
  for (std::size_t f : designated) {
    const auto& src = matrix.registry[f];
    FeatureSpec spec{src.feature_id + ".top", src.family, Kind::kBoolean, src.target,
                     "among the highest values of " + src.feature_id + " on this device ({value})", false};
    std::vector<double> column(matrix.rows.size());
    for (std::size_t r = 0; r < matrix.rows.size(); ++r) column[r] = matrix.rows[r].values[f];
    const auto flags = top_quantile_flags(column, config.thresholds.top_quantile);
    const std::size_t idx = matrix.registry.size();
    matrix.registry.push_back(std::move(spec));
    for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
      auto& row = matrix.rows[r];
      row.values.push_back(flags[r] ? 1.0 : 0.0);
      if (flags[r]) row.evidence[idx] = fmt_number(column[r]);
    }
  }
  matrix.recompute_activation_rates();
  return matrix;
}

std::string export_matrix_csv(const FeatureMatrix& matrix) {
  std::string out = "event_id";
  for (const auto& spec : matrix.registry) out += "," + spec.feature_id;
  out += "\n";
  for (const auto& row : matrix.rows) {
    out += text::csv_escape(row.event_id);
    for (double v : row.values) out += "," + text::format_double(v);
    out += "\n";
  }
  return out;
}

std::string export_registry_json(const FeatureMatrix& matrix) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t f = 0; f < matrix.registry.size(); ++f) {
    const auto& s = matrix.registry[f];
    nlohmann::json j = {{"feature_id", s.feature_id},
                        {"family", family_name(s.family)},
                        {"kind", kind_name(s.kind)},
                        {"target", target_name(s.target)},
                        {"description_template", s.description_template}};
    if (f < matrix.activation_rates.size() && matrix.activation_rates[f]) j["activation_rate"] = *matrix.activation_rates[f];
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace isoex::features
