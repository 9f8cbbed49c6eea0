#include "isoex/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "isoex/error.hpp"
#include "isoex/random.hpp"
#include "isoex/text.hpp"
#include "json.hpp"

namespace isoex::forest {

namespace {

constexpr double kEulerGamma = std::numbers::egamma;
constexpr const char* kModelFormat = "isoex.forest/1";

void assign_depths(IsolationTree& tree) {
  if (tree.nodes.empty()) return;
  // Preorder guarantees parents precede children.
  tree.nodes[0].depth = 0;
  for (auto& node : tree.nodes) {
    if (node.external()) continue;
    tree.nodes[node.left].depth = node.depth + 1;
    tree.nodes[node.right].depth = node.depth + 1;
  }
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& rows, std::size_t feature_count, int height_limit,
              std::uint64_t seed)
      : rows_(rows), feature_count_(feature_count), height_limit_(height_limit), rng_(seed) {}

  IsolationTree build(std::vector<std::size_t> sample) {
    tree_.height_limit = height_limit_;
    grow(sample, 0);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::vector<std::size_t>& idx, int depth) {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.push_back(Node{});
    tree_.nodes[id].size = static_cast<std::uint32_t>(idx.size());
    tree_.nodes[id].depth = static_cast<std::uint32_t>(depth);
    if (idx.size() <= 1 || depth >= height_limit_) return id;

    candidates_.clear();
    lows_.assign(feature_count_, 0.0);
    highs_.assign(feature_count_, 0.0);
    for (std::size_t f = 0; f < feature_count_; ++f) {
      double lo = rows_[idx[0]][f];
      double hi = lo;
      for (std::size_t r : idx) {
        lo = std::min(lo, rows_[r][f]);
        hi = std::max(hi, rows_[r][f]);
      }
      // Spread means some double lies strictly between the extremes.
      if (std::nextafter(lo, hi) < hi) {
        candidates_.push_back(f);
        lows_[f] = lo;
        highs_[f] = hi;
      }
    }
    if (candidates_.empty()) return id;

    const std::size_t f = candidates_[rng_.below(candidates_.size())];
    const double split = rng_.uniform_open(lows_[f], highs_[f]);
    std::vector<std::size_t> left, right;
    for (std::size_t r : idx) (rows_[r][f] < split ? left : right).push_back(r);
    idx.clear();
    idx.shrink_to_fit();

    const std::int32_t l = grow(left, depth + 1);
    const std::int32_t rr = grow(right, depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = static_cast<std::int32_t>(f);
    node.split = split;
    node.left = l;
    node.right = rr;
    return id;
  }

  const std::vector<std::vector<double>>& rows_;
  std::size_t feature_count_;
  int height_limit_;
  random::Xoshiro256 rng_;
  IsolationTree tree_;
  std::vector<std::size_t> candidates_;
  std::vector<double> lows_, highs_;
};

}  // namespace

double average_path_normalizer(std::int64_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + kEulerGamma) - 2.0 * m / static_cast<double>(n);
}

double IsolationTree::path_length(const double* x) const {
  std::size_t i = 0;
  int edges = 0;
  while (!nodes[i].external()) {
    i = static_cast<std::size_t>(x[nodes[i].feature] < nodes[i].split ? nodes[i].left : nodes[i].right);
    ++edges;
  }
  return edges + average_path_normalizer(nodes[i].size);
}

int IsolationTree::depth() const {
  std::uint32_t d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return static_cast<int>(d);
}

double IsolationForestModel::path_length(const std::vector<double>& x) const {
  if (x.size() != static_cast<std::size_t>(feature_count)) {
    throw ShapeError("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                     std::to_string(feature_count));
  }
  double total = 0.0;
  for (const auto& t : trees) total += t.path_length(x.data());
  return trees.empty() ? 0.0 : total / static_cast<double>(trees.size());
}

double score_from_path_length(double path_length, double c_psi) { return std::exp2(-path_length / c_psi); }

double IsolationForestModel::score(const std::vector<double>& x) const {
  return score_from_path_length(path_length(x), c_psi);
}

IsolationForestModel make_model(std::vector<IsolationTree> trees, int subsample_size, int feature_count,
                                std::uint64_t seed) {
  IsolationForestModel m;
  for (auto& t : trees) assign_depths(t);
  m.tree_count = static_cast<int>(trees.size());
  m.trees = std::move(trees);
  m.subsample_size = subsample_size;
  m.feature_count = feature_count;
  m.seed = seed;
  m.c_psi = average_path_normalizer(subsample_size);
  return m;
}

std::uint64_t row_key(const std::string& event_id) { return text::fnv1a64(event_id); }

IsolationForestModel fit(const std::vector<std::vector<double>>& rows, const std::vector<std::uint64_t>& row_keys,
                         const ForestParams& params, kernels::Execution exec) {
  if (rows.size() < 2) throw InsufficientDataError("fit needs at least 2 rows, got " + std::to_string(rows.size()));
  if (row_keys.size() != rows.size()) throw ShapeError("row_keys must align with rows");
  if (params.trees < 1) throw ValidationError("trees", "must be at least 1");
  if (params.subsample < 2) throw ValidationError("subsample", "must be at least 2");
  if (params.max_depth && *params.max_depth < 0) throw ValidationError("max_depth", "must be non-negative");
  const std::size_t width = rows[0].size();
  for (const auto& r : rows) {
    if (r.size() != width) throw ShapeError("rows differ in length");
  }

  const std::size_t psi = std::min<std::size_t>(static_cast<std::size_t>(params.subsample), rows.size());
  const int height_limit =
      params.max_depth ? *params.max_depth : static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));

  std::vector<IsolationTree> trees(static_cast<std::size_t>(params.trees));
  kernels::for_each_index(trees.size(), exec, [&](std::size_t t) {
    const std::uint64_t tree_seed = random::stream_seed(params.seed, t);
    // The psi rows with the smallest seeded priorities form the subsample.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> priority(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) priority[r] = {random::mix(tree_seed ^ row_keys[r]), r};
    std::partial_sort(priority.begin(), priority.begin() + static_cast<std::ptrdiff_t>(psi), priority.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return row_keys[a.second] < row_keys[b.second];
                      });
    std::vector<std::size_t> sample(psi);
    for (std::size_t k = 0; k < psi; ++k) sample[k] = priority[k].second;
    TreeBuilder builder(rows, width, height_limit, random::mix(tree_seed));
    trees[t] = builder.build(std::move(sample));
  });

  IsolationForestModel m = make_model(std::move(trees), static_cast<int>(psi), static_cast<int>(width), params.seed);
  return m;
}

IsolationForestModel fit(const features::FeatureMatrix& matrix, const ForestParams& params, kernels::Execution exec) {
  std::vector<std::vector<double>> rows;
  std::vector<std::uint64_t> keys;
  rows.reserve(matrix.rows.size());
  keys.reserve(matrix.rows.size());
  for (const auto& r : matrix.rows) {
    rows.push_back(r.values);
    keys.push_back(row_key(r.event_id));
  }
  return fit(rows, keys, params, exec);
}

std::vector<double> path_lengths(const IsolationForestModel& model, const std::vector<std::vector<double>>& rows,
                                 kernels::Execution exec) {
  std::vector<double> out(rows.size());
  kernels::for_each_index(rows.size(), exec, [&](std::size_t i) { out[i] = model.path_length(rows[i]); });
  return out;
}

std::vector<double> scores(const IsolationForestModel& model, const std::vector<std::vector<double>>& rows,
                           kernels::Execution exec) {
  auto out = path_lengths(model, rows, exec);
  for (double& v : out) v = score_from_path_length(v, model.c_psi);
  return out;
}

std::string serialize_model(const IsolationForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.external()) {
        nodes.push_back({{"size", n.size}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"split", n.split}, {"left", n.left}, {"right", n.right},
                         {"size", n.size}});
      }
    }
    trees.push_back({{"height_limit", t.height_limit}, {"nodes", std::move(nodes)}});
  }
  nlohmann::json j = {{"format", kModelFormat},
                      {"seed", model.seed},
                      {"subsample_size", model.subsample_size},
                      {"tree_count", model.tree_count},
                      {"feature_count", model.feature_count},
                      {"c_psi", model.c_psi},
                      {"trees", std::move(trees)}};
  return j.dump();
}

IsolationForestModel deserialize_model(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw ValidationError("format", "unsupported model format");
    std::vector<IsolationTree> trees;
    for (const auto& jt : j.at("trees")) {
      IsolationTree t;
      t.height_limit = jt.at("height_limit").get<int>();
      for (const auto& jn : jt.at("nodes")) {
        Node n;
        n.size = jn.at("size").get<std::uint32_t>();
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<std::int32_t>();
          n.split = jn.at("split").get<double>();
          n.left = jn.at("left").get<std::int32_t>();
          n.right = jn.at("right").get<std::int32_t>();
        }
        t.nodes.push_back(n);
      }
      const auto count = static_cast<std::int32_t>(t.nodes.size());
      if (count == 0) throw ValidationError("trees", "empty tree");
      for (std::int32_t i = 0; i < count; ++i) {
        const auto& n = t.nodes[static_cast<std::size_t>(i)];
        if (n.external()) continue;
        if (n.left <= i || n.right <= i || n.left >= count || n.right >= count) {
          throw ValidationError("trees", "child index out of preorder range");
        }
      }
      trees.push_back(std::move(t));
    }
    auto m = make_model(std::move(trees), j.at("subsample_size").get<int>(), j.at("feature_count").get<int>(),
                        j.at("seed").get<std::uint64_t>());
    for (const auto& t : m.trees) {
      for (const auto& n : t.nodes) {
        if (!n.external() && n.feature >= m.feature_count) throw ValidationError("trees", "feature index out of range");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

}  // namespace isoex::forest
