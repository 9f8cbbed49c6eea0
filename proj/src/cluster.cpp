#include "isoex/cluster.hpp"

#include <algorithm>
#include <memory>
#include <optional>

#include "isoex/error.hpp"
#include "isoex/text.hpp"

namespace isoex::cluster {

namespace {

bool is_number(std::string_view t) {
  if (t.empty()) return false;
  std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
  if (i == t.size()) return false;
  bool digit = false;
  for (; i < t.size(); ++i) {
    const char c = t[i];
    if (c >= '0' && c <= '9') {
      digit = true;
    } else if (c != '.' && c != ',') {
      return false;
    }
  }
  return digit;
}

struct RouteNode {
  std::map<std::string, std::unique_ptr<RouteNode>, std::less<>> children;
  std::vector<int> templates;           // leaf only
  std::optional<int> catch_all;         // leaf only
};

class Drain {
 public:
  explicit Drain(const DrainParams& params) : params_(params) {
    if (params.depth < 2) throw ValidationError("depth", "must be at least 2");
    if (!(params.similarity > 0.0 && params.similarity < 1.0)) throw ValidationError("similarity", "must be in (0, 1)");
    if (params.max_children < 2) throw ValidationError("max_children", "must be at least 2");
  }

  void add(const std::string& id, std::string_view line) {
    const auto tokens = text::split_whitespace(line);
    RouteNode& leaf = route(tokens);

    int best = -1;
    double best_sim = -1.0;
    for (int t : leaf.templates) {
      const double sim = similarity(templates_[t], tokens);
      if (sim > best_sim) {
        best_sim = sim;
        best = t;
      }
    }
    if (best >= 0 && best_sim >= params_.similarity) {
      auto& tpl = templates_[best];
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tpl.tokens[i] != kWildcard && tpl.tokens[i] != tokens[i]) tpl.tokens[i] = kWildcard;
      }
      tpl.member_event_ids.push_back(id);
      return;
    }
    if (static_cast<int>(leaf.templates.size()) < params_.max_children) {
      leaf.templates.push_back(create(tokens, id));
      return;
    }
    if (!leaf.catch_all) {
      leaf.catch_all = create(std::vector<std::string_view>(tokens.size(), kWildcard), id);
      return;
    }
    templates_[*leaf.catch_all].member_event_ids.push_back(id);
  }

  std::vector<Template> take() { return std::move(templates_); }

 private:
  RouteNode& route(const std::vector<std::string_view>& tokens) {
    RouteNode* node = child(root_, std::to_string(tokens.size()), false);
    const std::size_t levels = std::min<std::size_t>(static_cast<std::size_t>(params_.depth - 2), tokens.size());
    for (std::size_t i = 0; i < levels; ++i) {
      const std::string key = is_number(tokens[i]) ? std::string(kWildcard) : std::string(tokens[i]);
      node = child(*node, key, true);
    }
    return *node;
  }

  // Internal fanout is capped; keys beyond the cap share the wildcard child.
  RouteNode* child(RouteNode& parent, const std::string& key, bool capped) {
    auto it = parent.children.find(key);
    if (it != parent.children.end()) return it->second.get();
    std::string slot = key;
    if (capped && static_cast<int>(parent.children.size()) >= params_.max_children - 1) {
      slot = kWildcard;
      it = parent.children.find(slot);
      if (it != parent.children.end()) return it->second.get();
    }
    auto& created = parent.children[slot];
    created = std::make_unique<RouteNode>();
    return created.get();
  }

  // Share of positions with equal tokens; wildcard positions never count.
  static double similarity(const Template& tpl, const std::vector<std::string_view>& tokens) {
    if (tokens.empty()) return 1.0;
    std::size_t equal = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tpl.tokens[i] != kWildcard && tpl.tokens[i] == tokens[i]) ++equal;
    }
    return static_cast<double>(equal) / static_cast<double>(tokens.size());
  }

  int create(const std::vector<std::string_view>& tokens, const std::string& id) {
    Template t;
    t.template_id = static_cast<int>(templates_.size());
    t.tokens.assign(tokens.begin(), tokens.end());
    t.token_count = tokens.size();
    t.member_event_ids.push_back(id);
    templates_.push_back(std::move(t));
    return templates_.back().template_id;
  }

  DrainParams params_;
  RouteNode root_;
  std::vector<Template> templates_;
};

}  // namespace

std::string Template::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool Template::matches(const std::vector<std::string_view>& line_tokens) const {
  if (line_tokens.size() != token_count) return false;
  for (std::size_t i = 0; i < token_count; ++i) {
    if (tokens[i] != kWildcard && tokens[i] != line_tokens[i]) return false;
  }
  return true;
}

std::vector<Template> mine_templates(const std::vector<ingest::ProcessEvent>& events, const DrainParams& params) {
  Drain drain(params);
  for (const auto& ev : events) drain.add(ev.event_id, ev.command_line);
  return drain.take();
}

std::vector<Template> mine_lines(const std::vector<std::string>& lines, const DrainParams& params) {
  Drain drain(params);
  for (std::size_t i = 0; i < lines.size(); ++i) drain.add(std::to_string(i), lines[i]);
  return drain.take();
}

std::vector<ClusterSummary> cluster_summary(const std::vector<Template>& templates,
                                            const std::map<std::string, double>& scores) {
  std::vector<ClusterSummary> out;
  for (const auto& t : templates) {
    ClusterSummary s;
    s.template_id = t.template_id;
    s.template_text = t.text();
    s.size = t.member_event_ids.size();
    double total = 0.0;
    bool first = true;
    for (const auto& id : t.member_event_ids) {
      const auto it = scores.find(id);
      if (it == scores.end()) throw NotFoundError("no score for event " + id);
      total += it->second;
      if (first || it->second > s.max_score || (it->second == s.max_score && id < s.representative_event_id)) {
        s.max_score = it->second;
        s.representative_event_id = id;
        first = false;
      }
    }
    s.mean_score = s.size ? total / static_cast<double>(s.size) : 0.0;
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const ClusterSummary& a, const ClusterSummary& b) {
    if (a.max_score != b.max_score) return a.max_score > b.max_score;
    return a.template_id < b.template_id;
  });
  return out;
}

}  // namespace isoex::cluster
