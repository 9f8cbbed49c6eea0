#include "isoex/lineage.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "isoex/error.hpp"

namespace isoex::lineage {

namespace {

struct KeyHash {
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& k) const noexcept {
    return std::hash<std::int64_t>()(k.first) * 1000003u ^ std::hash<std::int64_t>()(k.second);
  }
};

}  // namespace

ProcessForest build_forest(const ingest::DeviceDataset& dataset) {
  const auto& events = dataset.events;
  ProcessForest f;
  f.nodes.resize(events.size());

  auto earlier = [&](std::size_t a, std::size_t b) {
    if (events[a].timestamp.ns != events[b].timestamp.ns) return events[a].timestamp.ns < events[b].timestamp.ns;
    return events[a].event_id < events[b].event_id;
  };

  // The earliest event carrying an instance key represents that instance.
  std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::size_t, KeyHash> instance;
  for (std::size_t i = 0; i < events.size(); ++i) {
    f.nodes[i].event_index = i;
    f.nodes[i].event_id = events[i].event_id;
    f.index_by_id[events[i].event_id] = i;
    auto [it, fresh] = instance.try_emplace({events[i].process_id, events[i].process_creation_ns}, i);
    if (!fresh && earlier(i, it->second)) it->second = i;
  }

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (!ev.has_parent_key()) continue;
    const auto it = instance.find({*ev.parent_process_id, *ev.parent_creation_ns});
    if (it == instance.end() || it->second == i) continue;
    const auto& pe = events[it->second];
    const bool ordered = pe.process_creation_ns < ev.process_creation_ns ||
                         (pe.process_creation_ns == ev.process_creation_ns && pe.event_id < ev.event_id);
    if (!ordered) {
      ++f.dropped_edges;
      continue;
    }
    f.nodes[i].parent = it->second;
    f.nodes[it->second].children.push_back(i);
  }

  for (std::size_t i = 0; i < events.size(); ++i) {
    std::sort(f.nodes[i].children.begin(), f.nodes[i].children.end(), earlier);
    if (!f.nodes[i].parent) f.roots.push_back(i);
  }
  std::sort(f.roots.begin(), f.roots.end(), earlier);

  std::deque<std::size_t> queue(f.roots.begin(), f.roots.end());
  while (!queue.empty()) {
    const std::size_t n = queue.front();
    queue.pop_front();
    for (std::size_t c : f.nodes[n].children) {
      f.nodes[c].depth = f.nodes[n].depth + 1;
      queue.push_back(c);
    }
  }
  return f;
}

nlohmann::json subtree_view(const ProcessForest& forest, const ingest::DeviceDataset& dataset,
                            const std::map<std::string, double>& scores, const std::string& event_id, int radius) {
  const auto found = forest.index_by_id.find(event_id);
  if (found == forest.index_by_id.end()) throw NotFoundError("unknown event " + event_id);
  if (radius < 0) throw ValidationError("radius", "must be non-negative");
  const std::size_t focus = found->second;

  std::vector<std::size_t> chain;
  for (std::optional<std::size_t> n = focus; n; n = forest.nodes[*n].parent) chain.push_back(*n);
  std::reverse(chain.begin(), chain.end());
  const std::set<std::size_t> ancestors(chain.begin(), chain.end());

  auto annotate = [&](std::size_t n) {
    const auto& ev = dataset.events[forest.nodes[n].event_index];
    nlohmann::json j = {{"event_id", ev.event_id},
                        {"file_name", ev.file_name},
                        {"command_line", ev.command_line},
                        {"timestamp", ev.timestamp.text},
                        {"depth", forest.nodes[n].depth},
                        {"focus", n == focus}};
    const auto s = scores.find(ev.event_id);
    j["score"] = s == scores.end() ? nlohmann::json(nullptr) : nlohmann::json(s->second);
    return j;
  };

  // Descendants of a non-ancestor node, `levels` deep.
  auto expand = [&](auto&& self, std::size_t n, int levels) -> nlohmann::json {
    nlohmann::json j = annotate(n);
    j["children"] = nlohmann::json::array();
    const auto& kids = forest.nodes[n].children;
    if (levels > 0) {
      for (std::size_t c : kids) j["children"].push_back(self(self, c, levels - 1));
    }
    j["truncated"] = levels == 0 && !kids.empty();
    return j;
  };

  auto along_chain = [&](auto&& self, std::size_t level) -> nlohmann::json {
    const std::size_t n = chain[level];
    if (n == focus) return expand(expand, n, radius);
    nlohmann::json j = annotate(n);
    j["children"] = nlohmann::json::array();
    for (std::size_t c : forest.nodes[n].children) {
      j["children"].push_back(ancestors.count(c) ? self(self, level + 1) : expand(expand, c, radius));
    }
    j["truncated"] = false;
    return j;
  };

  return {{"focus_event_id", event_id}, {"radius", radius}, {"root", along_chain(along_chain, 0)}};
}

}  // namespace isoex::lineage
