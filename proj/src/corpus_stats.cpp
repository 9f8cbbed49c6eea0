#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "isoex/features.hpp"
#include "isoex/text.hpp"

namespace isoex::features {

namespace {

constexpr double kCharOutlierMultiplier = 3.0;
constexpr std::size_t kBurstHistory = 24;
constexpr unsigned char kLineStart = 0x02;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t offset_ns(const rules::RuleConfig& config) {
  return static_cast<std::int64_t>(config.utc_offset_minutes) * 60 * kNanosPerSecond;
}

double distance(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 4; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Sums in sorted order so the result does not depend on event order.
double ordered_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum;
}

double duration_seconds(const ingest::ProcessEvent& ev) {
  return static_cast<double>(ev.end_time->ns - ev.process_creation_ns) / static_cast<double>(kNanosPerSecond);
}

}  // namespace

void MarkovModel::fit(const std::vector<std::string_view>& lines) {
  context_totals_.clear();
  transitions_.clear();
  std::array<bool, 256> symbols{};
  for (auto line : lines) {
    unsigned char a = kLineStart, b = kLineStart;
    for (unsigned char c : line) {
      symbols[c] = true;
      const std::uint32_t context = ctx(a, b);
      ++context_totals_[context];
      ++transitions_[(context << 8) | c];
      a = b;
      b = c;
    }
  }
  // One extra symbol reserves probability mass for characters never seen.
  alphabet_ = static_cast<double>(std::count(symbols.begin(), symbols.end(), true)) + 1.0;
}

double MarkovModel::score(std::string_view line) const {
  if (line.empty()) return 0.0;
  unsigned char a = kLineStart, b = kLineStart;
  double total = 0.0;
  for (unsigned char c : line) {
    const std::uint32_t context = ctx(a, b);
    const auto ct = context_totals_.find(context);
    const double context_count = ct == context_totals_.end() ? 0.0 : ct->second;
    const auto tr = transitions_.find((context << 8) | c);
    const double pair_count = tr == transitions_.end() ? 0.0 : tr->second;
    total -= std::log2((pair_count + 1.0) / (context_count + alphabet_));
    a = b;
    b = c;
  }
  return total / static_cast<double>(line.size());
}

int ExecutableStats::modal_integrity() const {
  int best = -1;
  std::size_t best_count = 0;
  for (std::size_t r = 0; r < integrity_histogram.size(); ++r) {
    if (integrity_histogram[r] > best_count) {
      best_count = integrity_histogram[r];
      best = static_cast<int>(r);
    }
  }
  return best;
}

CorpusStats build_corpus_stats(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config) {
  CorpusStats stats;
  const auto& events = dataset.events;
  const std::int64_t offset = offset_ns(config);

  std::unordered_map<std::string, std::set<std::int64_t>> days;
  std::unordered_map<std::string, std::vector<double>> durations;
  std::unordered_map<std::string, std::array<std::vector<double>, 4>> proportions;
  std::set<std::string> parents, children;
  std::array<std::size_t, 6> device_histogram{};
  std::vector<std::string> lower_names(events.size());

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    const std::string name = text::to_lower(ev.file_name);
    lower_names[i] = name;
    auto& exe = stats.executables[name];
    ++exe.count;
    days[name].insert(floor_div(ev.timestamp.ns + offset, kNanosPerDay));
    if (ev.integrity_level != ingest::IntegrityLevel::kUnknown) {
      const auto rank = static_cast<std::size_t>(ev.integrity_level);
      ++exe.integrity_histogram[rank];
      ++device_histogram[rank];
    }
    for (const auto& p : extract_parameters(ev.command_line)) ++exe.parameter_frequency[p.name];
    if (ev.end_time) durations[name].push_back(duration_seconds(ev));
    const auto props = char_proportions(ev.command_line);
    auto& columns = proportions[name];
    for (std::size_t k = 0; k < 4; ++k) columns[k].push_back(props[k]);

    if (ev.parent_file_name) {
      const std::string parent = text::to_lower(*ev.parent_file_name);
      ++stats.pair_counts[{parent, name}];
      ++stats.child_totals[name];
      ++stats.parent_totals[parent];
      parents.insert(parent);
      children.insert(name);
    }
    if (ev.has_parent_key()) {
      stats.children_by_parent[{*ev.parent_process_id, *ev.parent_creation_ns}].push_back(i);
    }
    stats.instance_index.try_emplace({ev.process_id, ev.process_creation_ns}, i);
  }
  stats.parent_vocabulary = parents.size();
  stats.child_vocabulary = children.size();

  for (auto& [name, exe] : stats.executables) {
    exe.active_days = days[name].size();
    auto& columns = proportions[name];
    for (std::size_t k = 0; k < 4; ++k) {
      exe.mean_char_proportions[k] = ordered_sum(columns[k]) / static_cast<double>(exe.count);
    }
    auto it = durations.find(name);
    if (it != durations.end() && !it->second.empty()) {
      auto& d = it->second;
      exe.duration_n = d.size();
      exe.duration_mean = ordered_sum(d) / static_cast<double>(d.size());
      std::vector<double> squares;
      squares.reserve(d.size());
      for (double v : d) squares.push_back((v - exe.duration_mean) * (v - exe.duration_mean));
      exe.duration_std = std::sqrt(ordered_sum(squares) / static_cast<double>(d.size()));
    }
  }
  std::unordered_map<std::string, std::vector<double>> distances;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& exe = stats.executables[lower_names[i]];
    distances[lower_names[i]].push_back(
        distance(char_proportions(events[i].command_line), exe.mean_char_proportions));
  }
  for (auto& [name, exe] : stats.executables) {
    exe.mean_char_distance = ordered_sum(distances[name]) / static_cast<double>(exe.count);
  }

  int modal = -1;
  std::size_t modal_count = 0;
  for (std::size_t r = 0; r < device_histogram.size(); ++r) {
    if (device_histogram[r] > modal_count) {
      modal_count = device_histogram[r];
      modal = static_cast<int>(r);
    }
  }
  stats.device_modal_integrity = modal < 0 ? 0 : modal;

  stats.has_image_data = !dataset.image_events.empty();
  for (const auto& img : dataset.image_events) ++stats.image_load_counts[text::to_lower(img.image_file_name)];

  if (!events.empty()) {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& ev : events) {
      const std::int64_t b = floor_div(ev.timestamp.ns, kNanosPerHour);
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
    stats.first_bucket = lo;
    stats.hourly_counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
    for (const auto& ev : events) ++stats.hourly_counts[static_cast<std::size_t>(floor_div(ev.timestamp.ns, kNanosPerHour) - lo)];
    stats.burst_buckets.assign(stats.hourly_counts.size(), false);
    const double k = config.thresholds.time_outlier_k;
    for (std::size_t b = kBurstHistory; b < stats.hourly_counts.size(); ++b) {
      if (stats.hourly_counts[b] == 0) continue;
      double sum = 0.0;
      for (std::size_t h = b - kBurstHistory; h < b; ++h) sum += static_cast<double>(stats.hourly_counts[h]);
      const double mean = sum / kBurstHistory;
      double sq = 0.0;
      for (std::size_t h = b - kBurstHistory; h < b; ++h) {
        const double d = static_cast<double>(stats.hourly_counts[h]) - mean;
        sq += d * d;
      }
      const double sd = std::sqrt(sq / kBurstHistory);
      stats.burst_buckets[b] = static_cast<double>(stats.hourly_counts[b]) > mean + k * sd;
    }
  }

  std::vector<std::string_view> lines;
  lines.reserve(events.size());
  for (const auto& ev : events) lines.emplace_back(ev.command_line);
  stats.markov.fit(lines);
  return stats;
}

ParameterResult parameter_features(const ingest::ProcessEvent& event, const rules::RuleConfig& config,
                                   const CorpusStats& stats) {
  ParameterResult r;
  const std::string name = text::to_lower(event.file_name);
  const auto doc = config.safe_executables.find(name);
  const auto exe = stats.executables.find(name);
  for (const auto& p : extract_parameters(event.command_line)) {
    const bool documented = doc != config.safe_executables.end() && doc->second.known_parameters.contains(p.name);
    if (documented) continue;
    std::size_t seen = 0;
    if (exe != stats.executables.end()) {
      auto f = exe->second.parameter_frequency.find(p.name);
      if (f != exe->second.parameter_frequency.end()) seen = f->second;
    }
    if (static_cast<double>(seen) < config.thresholds.rare_count) {
      r.rare_count += 1.0;
      if (r.evidence.empty()) r.evidence = p.original;
    }
  }
  r.rare = r.rare_count > 0.0;
  return r;
}

LineageResult lineage_for(std::size_t index, const ingest::DeviceDataset& dataset, const CorpusStats& stats) {
  LineageResult r;
  const auto& ev = dataset.events[index];
  const std::string child = text::to_lower(ev.file_name);

  if (ev.parent_file_name) {
    r.has_parent = true;
    const std::string parent = text::to_lower(*ev.parent_file_name);
    const auto pc = stats.pair_counts.find({parent, child});
    const double pair = pc == stats.pair_counts.end() ? 0.0 : static_cast<double>(pc->second);
    const auto ct = stats.child_totals.find(child);
    const auto pt = stats.parent_totals.find(parent);
    const double child_total = ct == stats.child_totals.end() ? 0.0 : static_cast<double>(ct->second);
    const double parent_total = pt == stats.parent_totals.end() ? 0.0 : static_cast<double>(pt->second);
    r.parent_rarity = 1.0 - (pair + 1.0) / (child_total + static_cast<double>(stats.parent_vocabulary));
    r.child_rarity = 1.0 - (pair + 1.0) / (parent_total + static_cast<double>(stats.child_vocabulary));
  }

  constexpr std::int64_t kOpen = std::numeric_limits<std::int64_t>::max();
  auto lifetime = [&](const ingest::ProcessEvent& e) {
    return std::pair<std::int64_t, std::int64_t>{e.process_creation_ns, e.end_time ? e.end_time->ns : kOpen};
  };

  if (ev.has_parent_key()) {
    r.has_parent_key = true;
    const auto group = stats.children_by_parent.find({*ev.parent_process_id, *ev.parent_creation_ns});
    if (group != stats.children_by_parent.end()) {
      const auto [start, end] = lifetime(ev);
      std::size_t overlapping = 0;
      for (std::size_t j : group->second) {
        if (j == index) continue;
        const auto [s2, e2] = lifetime(dataset.events[j]);
        if (start <= e2 && s2 <= end) ++overlapping;
      }
      r.sibling_count = static_cast<double>(overlapping);
    }
    const auto parent = stats.instance_index.find({*ev.parent_process_id, *ev.parent_creation_ns});
    if (parent != stats.instance_index.end() && ev.end_time) {
      const auto& pe = dataset.events[parent->second];
      if (pe.end_time && pe.end_time->ns < ev.end_time->ns) r.child_outlived_parent = true;
    }
  }

  const auto spawned = stats.children_by_parent.find({ev.process_id, ev.process_creation_ns});
  if (spawned != stats.children_by_parent.end()) {
    std::set<std::string> names;
    for (std::size_t j : spawned->second) {
      if (j != index) names.insert(text::to_lower(dataset.events[j].file_name));
    }
    r.distinct_child_count = static_cast<double>(names.size());
  }
  return r;
}

std::vector<LineageResult> lineage_features(const ingest::DeviceDataset& dataset, const CorpusStats& stats) {
  std::vector<LineageResult> out;
  out.reserve(dataset.events.size());
  for (std::size_t i = 0; i < dataset.events.size(); ++i) out.push_back(lineage_for(i, dataset, stats));
  return out;
}

IntegrityResult integrity_features(const ingest::ProcessEvent& event, const CorpusStats& stats,
                                   const rules::RuleConfig& config) {
  IntegrityResult r;
  if (event.integrity_level == ingest::IntegrityLevel::kUnknown) {
    r.rank = stats.device_modal_integrity;
    return r;
  }
  const int rank = static_cast<int>(event.integrity_level);
  r.rank = rank;
  const auto exe = stats.executables.find(text::to_lower(event.file_name));
  if (exe != stats.executables.end() && static_cast<double>(exe->second.count) >= config.thresholds.rare_count) {
    const int modal = exe->second.modal_integrity();
    r.deviation = modal >= 0 && modal != rank;
  }
  return r;
}

TemporalResult temporal_for(const ingest::ProcessEvent& event, const CorpusStats& stats,
                            const rules::RuleConfig& config) {
  TemporalResult r;
  const auto local = civil_from_ns(event.timestamp.ns + offset_ns(config));
  r.offhours = local.hour < 7 || local.hour >= 20 || local.weekday == 0 || local.weekday == 6;

  const auto exe = stats.executables.find(text::to_lower(event.file_name));
  if (exe != stats.executables.end()) {
    r.occurrences = static_cast<double>(exe->second.count);
    r.active_days = static_cast<double>(exe->second.active_days);
    if (event.end_time) {
      r.has_duration = true;
      const auto& s = exe->second;
      if (s.duration_n >= 2 && s.duration_std > 0.0) {
        r.duration_abs_z = std::fabs((duration_seconds(event) - s.duration_mean) / s.duration_std);
        r.duration_outlier = r.duration_abs_z > config.thresholds.time_outlier_k;
      }
    }
  }
  r.rare_process = r.occurrences <= config.thresholds.rare_count;

  const std::int64_t bucket = floor_div(event.timestamp.ns, kNanosPerHour) - stats.first_bucket;
  if (bucket >= 0 && static_cast<std::size_t>(bucket) < stats.burst_buckets.size()) {
    r.burst = stats.burst_buckets[static_cast<std::size_t>(bucket)];
  }
  return r;
}

std::vector<TemporalResult> temporal_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config) {
  const auto stats = build_corpus_stats(dataset, config);
  std::vector<TemporalResult> out;
  out.reserve(dataset.events.size());
  for (const auto& ev : dataset.events) out.push_back(temporal_for(ev, stats, config));
  return out;
}

TextStatisticsResult text_statistics_for(const ingest::ProcessEvent& event, const CorpusStats& stats,
                                         const rules::RuleConfig& config) {
  TextStatisticsResult r;
  r.proportions = char_proportions(event.command_line);
  const auto exe = stats.executables.find(text::to_lower(event.file_name));
  if (exe != stats.executables.end() && static_cast<double>(exe->second.count) >= config.thresholds.rare_count &&
      exe->second.mean_char_distance > 0.0) {
    const double d = distance(r.proportions, exe->second.mean_char_proportions);
    r.distribution_outlier = d > kCharOutlierMultiplier * exe->second.mean_char_distance;
  }
  r.trigrams = trigram_vector(event.command_line);
  r.markov_score = stats.markov.score(event.command_line);
  return r;
}

std::vector<TextStatisticsResult> text_statistics_features(const ingest::DeviceDataset& dataset,
                                                           const rules::RuleConfig& config) {
  const auto stats = build_corpus_stats(dataset, config);
  std::vector<TextStatisticsResult> out;
  out.reserve(dataset.events.size());
  for (const auto& ev : dataset.events) out.push_back(text_statistics_for(ev, stats, config));
  return out;
}

ImageResult image_for(const ingest::ProcessEvent& event, const CorpusStats& stats, const rules::RuleConfig& config) {
  ImageResult r;
  r.loaded_image_count = static_cast<double>(event.loaded_images.size());
  for (const auto& img : event.loaded_images) {
    const std::string name = text::to_lower(img.file_name);
    const auto c = stats.image_load_counts.find(name);
    const double count = c == stats.image_load_counts.end() ? 0.0 : static_cast<double>(c->second);
    if (!r.rare_image && count <= config.thresholds.rare_count) {
      r.rare_image = true;
      r.rare_evidence = img.file_name;
    }
    const auto doc = config.safe_executables.find(name);
    if (!r.wrong_location && doc != config.safe_executables.end() && !text::trim(img.folder_path).empty() &&
        !folder_matches(img.folder_path, doc->second.expected_folder_paths)) {
      r.wrong_location = true;
      r.location_evidence = img.folder_path + "\\" + img.file_name;
    }
  }
  return r;
}

std::vector<ImageResult> image_features(const ingest::DeviceDataset& dataset, const rules::RuleConfig& config) {
  const auto stats = build_corpus_stats(dataset, config);
  std::vector<ImageResult> out;
  out.reserve(dataset.events.size());
  for (const auto& ev : dataset.events) out.push_back(image_for(ev, stats, config));
  return out;
}

}  // namespace isoex::features
