#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isoex/augment.hpp"
#include "isoex/cluster.hpp"
#include "isoex/explain.hpp"
#include "isoex/features.hpp"
#include "isoex/forest.hpp"
#include "isoex/ingest.hpp"
#include "isoex/kernels.hpp"
#include "isoex/lineage.hpp"
#include "json.hpp"

namespace isoex::report {

inline constexpr const char* kSchemaVersion = "isoex.report/1";

struct AnalysisParams {
  std::uint64_t seed = 42;
  double tau = 0.01;
  int trees = 100;
  int subsample = 256;
  std::optional<int> max_depth;
  cluster::DrainParams drain;
  std::optional<int> window_days;
  std::size_t top_k = 10;
  kernels::Execution exec = kernels::Execution::kParallel;

  forest::ForestParams forest_params() const { return {trees, subsample, seed, max_depth}; }
};

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

// Everything one analysis produced. Vectors indexed by event are aligned
// with dataset.events (and matrix.rows).
struct DeviceReport {
  AnalysisParams params;
  std::string config_digest;
  ingest::DeviceDataset dataset;
  features::FeatureMatrix matrix;
  forest::IsolationForestModel model;
  std::vector<double> scores;
  std::vector<double> path_lengths;
  std::vector<explain::Attribution> attributions;
  std::vector<explain::FeatureImportance> importance;
  augment::AugmentationReport augmentation;
  std::vector<cluster::Template> templates;
  std::vector<int> template_of;  // per event
  std::vector<cluster::ClusterSummary> clusters;
  lineage::ProcessForest lineage;
  std::vector<std::size_t> ranking;  // event indices, rank 1 first
  std::vector<StageTiming> timings;

  std::map<std::string, double> score_map() const;
};

// Ranking order: score descending, event_id ascending.
std::vector<std::size_t> rank_order(const std::vector<double>& scores, const std::vector<std::string>& event_ids);

// Validated before return.
nlohmann::json to_json(const DeviceReport& report);

// Drops the "timings" member; the remainder is deterministic.
nlohmann::json without_timings(nlohmann::json report);

// Throws ValidationError naming the first offending field.
void validate_report(const nlohmann::json& report);

// event_id, timestamp, file_name, command_line, score, rank, template_id,
// then feature/phi pairs for the top three contributors.
std::string scored_csv(const DeviceReport& report);

// Full phi vectors, for per-event explanation lookups after a reload.
nlohmann::json attributions_json(const DeviceReport& report);
nlohmann::json attribution_json(const explain::Attribution& attribution, const features::FeatureMatrix& matrix,
                                bool with_ids = true);
nlohmann::json contributor_json(const explain::Contributor& c);

}  // namespace isoex::report
