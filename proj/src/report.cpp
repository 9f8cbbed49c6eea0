#include "isoex/report.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "isoex/error.hpp"
#include "isoex/text.hpp"

namespace isoex::report {

using nlohmann::json;

std::map<std::string, double> DeviceReport::score_map() const {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < dataset.events.size(); ++i) m[dataset.events[i].event_id] = scores[i];
  return m;
}

std::vector<std::size_t> rank_order(const std::vector<double>& scores, const std::vector<std::string>& event_ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return event_ids[a] < event_ids[b];
  });
  return order;
}

json contributor_json(const explain::Contributor& c) {
  json j = {{"feature_id", c.feature_id}, {"family", c.family}, {"phi", c.phi}, {"value", c.value},
            {"description", c.description}};
  j["evidence"] = c.evidence.empty() ? json(nullptr) : json(c.evidence);
  return j;
}

json attribution_json(const explain::Attribution& a, const features::FeatureMatrix& matrix, bool with_ids) {
  json contributors = json::array();
  for (const auto& c : a.top_contributors) contributors.push_back(contributor_json(c));
  json ids = json::array();
  if (with_ids) {
    for (const auto& spec : matrix.registry) ids.push_back(spec.feature_id);
  }
  return {{"event_id", a.event_id},
          {"base_value", a.base_value},
          {"explained_output", a.explained_output},
          {"output_kind", "negated_mean_path_length"},
          {"feature_ids", std::move(ids)},
          {"phi", a.phi},
          {"top_contributors", std::move(contributors)}};
}

json to_json(const DeviceReport& r) {
  const auto& p = r.params;
  json params = {{"seed", p.seed},
                 {"tau", p.tau},
                 {"trees", p.trees},
                 {"subsample", p.subsample},
                 {"effective_subsample", r.model.subsample_size},
                 {"max_depth", p.max_depth ? json(*p.max_depth) : json(nullptr)},
                 {"window_days", p.window_days ? json(*p.window_days) : json(nullptr)},
                 {"top_k", p.top_k},
                 {"drain", {{"depth", p.drain.depth}, {"similarity", p.drain.similarity},
                            {"max_children", p.drain.max_children}}},
                 {"config_digest", r.config_digest},
                 {"c_psi", r.model.c_psi}};

  const auto& c = r.dataset.counters;
  json ingest = {{"events", r.dataset.events.size()},
                 {"image_events", r.dataset.image_events.size()},
                 {"dropped_rows", c.dropped_rows},
                 {"skipped_lines", c.skipped_lines},
                 {"duplicate_ids", c.duplicate_ids},
                 {"foreign_device_rows", c.foreign_device_rows},
                 {"window_start", format_timestamp(r.dataset.window_start_ns, 9)},
                 {"window_end", format_timestamp(r.dataset.window_end_ns, 9)},
                 {"lineage_dropped_edges", r.lineage.dropped_edges},
                 {"lineage_roots", r.lineage.roots.size()}};

  json events = json::array();
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const std::size_t i = r.ranking[k];
    const auto& ev = r.dataset.events[i];
    const auto& a = r.attributions[i];
    json contributors = json::array();
    for (const auto& cc : a.top_contributors) contributors.push_back(contributor_json(cc));
    events.push_back({{"rank", k + 1},
                      {"event_id", ev.event_id},
                      {"timestamp", ev.timestamp.text},
                      {"file_name", ev.file_name},
                      {"command_line", ev.command_line},
                      {"parent_file_name", ev.parent_file_name ? json(*ev.parent_file_name) : json(nullptr)},
                      {"score", r.scores[i]},
                      {"path_length", r.path_lengths[i]},
                      {"template_id", r.template_of[i]},
                      {"base_value", a.base_value},
                      {"explained_output", a.explained_output},
                      {"top_contributors", std::move(contributors)}});
  }

  json importance = json::array();
  for (const auto& fi : r.importance) {
    importance.push_back({{"feature_id", fi.feature_id},
                          {"family", fi.family},
                          {"kind", fi.kind},
                          {"mean_phi", fi.mean_phi},
                          {"mean_abs_phi", fi.mean_abs_phi},
                          {"activation_rate", fi.activation_rate ? json(*fi.activation_rate) : json(nullptr)}});
  }

  const auto& aug = r.augmentation;
  json boosted = json::array();
  for (const auto& b : aug.boosted) {
    boosted.push_back({{"feature_id", b.feature_id},
                       {"original_rate", b.original_rate},
                       {"synthetic_rows_added", b.synthetic_rows_added},
                       {"final_rate", b.final_rate}});
  }
  json augmentation = {{"tau", aug.tau},
                       {"donor_seed", aug.seed},
                       {"total_synthetic_rows", aug.total_synthetic_rows},
                       {"iterations", aug.iterations},
                       {"boosted", std::move(boosted)},
                       {"skipped_zero_rate", aug.skipped_zero_rate},
                       {"still_short", aug.still_short}};

  json coverage = json::object();
  const double n = static_cast<double>(r.dataset.events.size());
  for (const auto& [family, count] : r.matrix.coverage) {
    coverage[std::string(features::family_name(family))] = {{"events", count},
                                                            {"fraction", n > 0 ? static_cast<double>(count) / n : 0.0}};
  }

  json templates = json::array();
  for (const auto& t : r.templates) {
    templates.push_back({{"template_id", t.template_id},
                         {"template", t.text()},
                         {"token_count", t.token_count},
                         {"member_event_ids", t.member_event_ids}});
  }
  json summary = json::array();
  for (const auto& s : r.clusters) {
    summary.push_back({{"template_id", s.template_id},
                       {"template", s.template_text},
                       {"size", s.size},
                       {"max_score", s.max_score},
                       {"mean_score", s.mean_score},
                       {"representative_event_id", s.representative_event_id}});
  }

  json timings = json::object();
  for (const auto& t : r.timings) timings[t.stage] = t.milliseconds;

  json out = {{"schema_version", kSchemaVersion},
              {"status", "complete"},
              {"device_id", r.dataset.device_id},
              {"parameters", std::move(params)},
              {"ingest", std::move(ingest)},
              {"feature_count", r.matrix.registry.size()},
              {"events", std::move(events)},
              {"global_importance", std::move(importance)},
              {"augmentation", std::move(augmentation)},
              {"coverage", std::move(coverage)},
              {"clusters", {{"templates", std::move(templates)}, {"summary", std::move(summary)}}},
              {"timings", std::move(timings)}};
  validate_report(out);
  return out;
}

json without_timings(json report) {
  report.erase("timings");
  return report;
}

void validate_report(const json& r) {
  auto require = [&](bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ValidationError(field, message);
  };
  require(r.is_object(), "report", "must be an object");
  require(r.contains("schema_version") && r["schema_version"] == kSchemaVersion, "schema_version",
          std::string("must be ") + kSchemaVersion);
  for (const char* key : {"device_id", "parameters", "ingest", "events", "global_importance", "augmentation",
                          "coverage", "clusters"}) {
    require(r.contains(key), key, "missing");
  }
  require(r["device_id"].is_string(), "device_id", "must be a string");
  const auto& events = r["events"];
  require(events.is_array(), "events", "must be an array");

  std::set<std::string> ids;
  std::set<long long> template_ids;
  for (const auto& t : r["clusters"]["templates"]) template_ids.insert(t.at("template_id").get<long long>());
  std::size_t clustered = 0;
  for (const auto& t : r["clusters"]["templates"]) clustered += t.at("member_event_ids").size();

  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& e = events[k];
    const std::string where = "events[" + std::to_string(k) + "]";
    require(e.contains("event_id") && e["event_id"].is_string(), where + ".event_id", "must be a string");
    require(ids.insert(e["event_id"].get<std::string>()).second, where + ".event_id", "duplicate event id");
    require(e.contains("rank") && e["rank"].is_number_unsigned() && e["rank"].get<std::size_t>() == k + 1,
            where + ".rank", "ranks must be 1..N in order");
    require(e.contains("score") && e["score"].is_number(), where + ".score", "must be a number");
    const double s = e["score"].get<double>();
    require(s > 0.0 && s < 1.0, where + ".score", "must lie in (0, 1)");
    if (k > 0) {
      const auto& prev = events[k - 1];
      const double ps = prev["score"].get<double>();
      require(ps > s || (ps == s && prev["event_id"].get<std::string>() < e["event_id"].get<std::string>()),
              where + ".rank", "order must be score descending, event_id ascending");
    }
    require(e.contains("template_id") && template_ids.count(e["template_id"].get<long long>()), where + ".template_id",
            "unknown template");
    require(e.contains("top_contributors") && e["top_contributors"].is_array(), where + ".top_contributors",
            "must be an array");
    double last = INFINITY;
    for (const auto& c : e["top_contributors"]) {
      const double mag = std::fabs(c.at("phi").get<double>());
      require(mag <= last, where + ".top_contributors", "must be sorted by |phi| descending");
      last = mag;
    }
  }
  require(clustered == events.size(), "clusters.templates", "must partition the events");
  for (const auto& fi : r["global_importance"]) {
    const double mean = fi.at("mean_phi").get<double>();
    const double mean_abs = fi.at("mean_abs_phi").get<double>();
    require(mean_abs >= std::fabs(mean) - 1e-12, "global_importance." + fi.at("feature_id").get<std::string>(),
            "mean_abs_phi must bound |mean_phi|");
  }
}

std::string scored_csv(const DeviceReport& r) {
  std::string out =
      "event_id,timestamp,file_name,command_line,score,rank,template_id,"
      "top1_feature,top1_phi,top2_feature,top2_phi,top3_feature,top3_phi\n";
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    const std::size_t i = r.ranking[k];
    const auto& ev = r.dataset.events[i];
    out += text::csv_escape(ev.event_id) + "," + text::csv_escape(ev.timestamp.text) + "," +
           text::csv_escape(ev.file_name) + "," + text::csv_escape(ev.command_line) + "," +
           text::format_double(r.scores[i]) + "," + std::to_string(k + 1) + "," + std::to_string(r.template_of[i]);
    const auto& top = r.attributions[i].top_contributors;
    for (std::size_t c = 0; c < 3; ++c) {
      if (c < top.size()) {
        out += "," + text::csv_escape(top[c].feature_id) + "," + text::format_double(top[c].phi);
      } else {
        out += ",,";
      }
    }
    out += "\n";
  }
  return out;
}

json attributions_json(const DeviceReport& r) {
  json registry = json::array();
  for (const auto& spec : r.matrix.registry) registry.push_back(spec.feature_id);
  json rows = json::array();
  for (const auto& a : r.attributions) {
    json row = attribution_json(a, r.matrix, false);
    row.erase("feature_ids");
    rows.push_back(std::move(row));
  }
  return {{"schema_version", kSchemaVersion}, {"feature_ids", std::move(registry)}, {"attributions", std::move(rows)}};
}

}  // namespace isoex::report
