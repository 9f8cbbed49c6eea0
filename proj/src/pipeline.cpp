#include "isoex/pipeline.hpp"

#include <chrono>

#include "isoex/error.hpp"
#include "isoex/text.hpp"

namespace isoex::pipeline {

namespace {

template <typename Fn>
auto stage(report::DeviceReport& r, const char* name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
    r.timings.push_back({name, elapsed.count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

}  // namespace

report::DeviceReport analyze_device(ingest::DeviceDataset dataset, const rules::RuleConfig& config,
                                    const report::AnalysisParams& params) {
  report::DeviceReport r;
  r.params = params;
  r.config_digest = rules::config_digest(config);

  stage(r, "window", [&] {
    if (params.window_days) dataset = ingest::filter_window(std::move(dataset), *params.window_days);
    if (dataset.events.empty()) throw EmptyDatasetError("no events to analyze");
  });
  r.dataset = std::move(dataset);

  stage(r, "features", [&] { r.matrix = features::extract_features(r.dataset, config, params.exec); });

  stage(r, "train", [&] {
    auto trained = augment::train_with_augmentation(r.matrix, params.tau, params.forest_params(), params.seed,
                                                    params.exec);
    r.model = std::move(trained.model);
    r.scores = std::move(trained.scores);
    r.path_lengths = std::move(trained.path_lengths);
    r.augmentation = std::move(trained.report);
  });

  stage(r, "explain", [&] {
    r.attributions = explain::explain_rows(r.model, r.matrix, params.exec);
    kernels::for_each_index(r.attributions.size(), params.exec, [&](std::size_t i) {
      explain::describe(r.attributions[i], r.matrix, r.matrix.rows[i], params.top_k);
    });
    r.importance = explain::global_importance(r.attributions, r.matrix);
  });

  stage(r, "cluster", [&] {
    r.templates = cluster::mine_templates(r.dataset.events, params.drain);
    std::unordered_map<std::string, int> owner;
    for (const auto& t : r.templates) {
      for (const auto& id : t.member_event_ids) owner[id] = t.template_id;
    }
    r.template_of.resize(r.dataset.events.size());
    for (std::size_t i = 0; i < r.dataset.events.size(); ++i) r.template_of[i] = owner.at(r.dataset.events[i].event_id);
    r.clusters = cluster::cluster_summary(r.templates, r.score_map());
  });

  stage(r, "lineage", [&] { r.lineage = lineage::build_forest(r.dataset); });

  stage(r, "rank", [&] {
    std::vector<std::string> ids;
    ids.reserve(r.dataset.events.size());
    for (const auto& ev : r.dataset.events) ids.push_back(ev.event_id);
    r.ranking = report::rank_order(r.scores, ids);
  });
  return r;
}

ingest::DeviceDataset load_dataset(const std::string& events_path, const std::optional<std::string>& images_path) {
  const std::string source = text::read_file(events_path);
  auto dataset = ingest::parse_events(source, ingest::format_from_path(events_path));
  if (images_path) {
    const std::string images = text::read_file(*images_path);
    dataset = ingest::join_image_events(std::move(dataset),
                                        ingest::parse_image_events(images, ingest::format_from_path(*images_path)));
  }
  return dataset;
}

}  // namespace isoex::pipeline
