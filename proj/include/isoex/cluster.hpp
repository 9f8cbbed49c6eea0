#pragma once

#include <map>
#include <string>
#include <vector>

#include "isoex/ingest.hpp"

namespace isoex::cluster {

inline constexpr const char* kWildcard = "<*>";

struct DrainParams {
  int depth = 4;
  double similarity = 0.4;
  int max_children = 100;
};

struct Template {
  int template_id = 0;
  std::vector<std::string> tokens;
  std::vector<std::string> member_event_ids;
  std::size_t token_count = 0;

  std::string text() const;
  bool matches(const std::vector<std::string_view>& line_tokens) const;
};

// Templates in creation order; template_id equals the position.
std::vector<Template> mine_templates(const std::vector<ingest::ProcessEvent>& events, const DrainParams& params = {});

// Same, over bare lines whose ids are "0", "1", ...
std::vector<Template> mine_lines(const std::vector<std::string>& lines, const DrainParams& params = {});

struct ClusterSummary {
  int template_id = 0;
  std::string template_text;
  std::size_t size = 0;
  double max_score = 0.0;
  double mean_score = 0.0;
  std::string representative_event_id;
};

// Sorted by max_score descending, then template_id.
std::vector<ClusterSummary> cluster_summary(const std::vector<Template>& templates,
                                            const std::map<std::string, double>& scores);

}  // namespace isoex::cluster
