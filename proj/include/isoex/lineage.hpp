#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "isoex/ingest.hpp"
#include "json.hpp"

namespace isoex::lineage {

struct ProcessTreeNode {
  std::size_t event_index = 0;
  std::string event_id;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;  // node indices, ordered by (timestamp, event_id)
  int depth = 0;
};

// Nodes are aligned with dataset.events.
struct ProcessForest {
  std::vector<ProcessTreeNode> nodes;
  std::vector<std::size_t> roots;
  std::size_t dropped_edges = 0;
  std::unordered_map<std::string, std::size_t> index_by_id;

  std::size_t node_count() const { return nodes.size(); }
};

// An edge parent -> child is kept only when the parent instance was created
// before the child, or at the same instant with a smaller event_id.
ProcessForest build_forest(const ingest::DeviceDataset& dataset);

// Ancestors to the root, the full child set of every ancestor, and
// descendants of every shown non-ancestor node down to `radius` levels.
nlohmann::json subtree_view(const ProcessForest& forest, const ingest::DeviceDataset& dataset,
                            const std::map<std::string, double>& scores, const std::string& event_id, int radius);

}  // namespace isoex::lineage
