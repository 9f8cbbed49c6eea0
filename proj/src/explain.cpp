#include "isoex/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isoex/error.hpp"
#include "isoex/text.hpp"

namespace isoex::explain {

namespace {

using forest::IsolationTree;
using forest::Node;

struct PathElement {
  int feature;
  double zero_fraction;
  double one_fraction;
  double weight;
};

void extend_path(PathElement* path, int depth, double zero, double one, int feature) {
  path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1) / static_cast<double>((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / static_cast<double>(zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / static_cast<double>((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      total += (path[i].weight / zero) / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

struct Recursion {
  const std::vector<Node>& nodes;
  const std::vector<double>& value;
  const double* x;
  double* phi;

  void run(std::size_t node_index, PathElement* parent_path, int unique_depth, double zero, double one,
           int feature) const {
    PathElement* path = parent_path + unique_depth + 1;
    std::copy(parent_path, parent_path + unique_depth + 1, path);
    extend_path(path, unique_depth, zero, one, feature);

    const Node& node = nodes[node_index];
    if (node.external()) {
      for (int i = 1; i <= unique_depth; ++i) {
        const double w = unwound_path_sum(path, unique_depth, i);
        const PathElement& el = path[i];
        phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value[node_index];
      }
      return;
    }

    const auto hot = static_cast<std::size_t>(x[node.feature] < node.split ? node.left : node.right);
    const auto cold = static_cast<std::size_t>(hot == static_cast<std::size_t>(node.left) ? node.right : node.left);
    const double cover = node.size;
    const double hot_zero = nodes[hot].size / cover;
    const double cold_zero = nodes[cold].size / cover;

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    int k = 0;
    for (; k <= unique_depth; ++k) {
      if (path[k].feature == node.feature) break;
    }
    if (k != unique_depth + 1) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, unique_depth, k);
      --unique_depth;
    }
    run(hot, path, unique_depth + 1, hot_zero * incoming_zero, incoming_one, node.feature);
    run(cold, path, unique_depth + 1, cold_zero * incoming_zero, 0.0, node.feature);
  }
};

double negate(double v) { return 0.0 - v; }

// Expected leaf value with features in `fixed` taken from x and the rest
// marginalized by training coverage.
double conditional_expectation(const IsolationTree& tree, const std::vector<double>& leaf_value, std::size_t node_index,
                               const double* x, std::uint32_t fixed) {
  const Node& node = tree.nodes[node_index];
  if (node.external()) return leaf_value[node_index];
  const auto l = static_cast<std::size_t>(node.left);
  const auto r = static_cast<std::size_t>(node.right);
  if (fixed & (std::uint32_t{1} << node.feature)) {
    return conditional_expectation(tree, leaf_value, x[node.feature] < node.split ? l : r, x, fixed);
  }
  const double cover = node.size;
  return tree.nodes[l].size / cover * conditional_expectation(tree, leaf_value, l, x, fixed) +
         tree.nodes[r].size / cover * conditional_expectation(tree, leaf_value, r, x, fixed);
}

std::vector<double> leaf_values(const IsolationTree& tree) {
  std::vector<double> v(tree.nodes.size(), 0.0);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    if (n.external()) v[i] = n.depth + forest::average_path_normalizer(n.size);
  }
  return v;
}

void check_shape(const forest::IsolationForestModel& model, const std::vector<double>& x) {
  if (x.size() != static_cast<std::size_t>(model.feature_count)) {
    throw ShapeError("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                     std::to_string(model.feature_count));
  }
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

TreeExplainer::TreeExplainer(const forest::IsolationForestModel& model) : model_(model) {
  double base = 0.0;
  trees_.reserve(model.trees.size());
  for (const auto& t : model.trees) {
    Tree pre;
    pre.value = leaf_values(t);
    pre.max_depth = t.depth();
    const double root = t.nodes[0].size;
    double expected = 0.0;
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      if (t.nodes[i].external()) expected += t.nodes[i].size / root * pre.value[i];
    }
    base += expected;
    trees_.push_back(std::move(pre));
  }
  base_value_ = trees_.empty() ? 0.0 : negate(base / static_cast<double>(trees_.size()));
}

Attribution TreeExplainer::explain(const std::vector<double>& x) const {
  check_shape(model_, x);
  Attribution a;
  a.base_value = base_value_;
  a.phi.assign(x.size(), 0.0);
  std::vector<PathElement> buffer;
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto& tree = model_.trees[t];
    const int d = trees_[t].max_depth + 2;
    buffer.assign(static_cast<std::size_t>(d * (d + 1) / 2 + d + 1), PathElement{});
    Recursion rec{tree.nodes, trees_[t].value, x.data(), a.phi.data()};
    rec.run(0, buffer.data(), 0, 1.0, 1.0, -1);
  }
  const double count = trees_.empty() ? 1.0 : static_cast<double>(trees_.size());
  for (double& p : a.phi) p = negate(p / count);
  a.explained_output = negate(model_.path_length(x));
  return a;
}

Attribution tree_shap(const forest::IsolationForestModel& model, const std::vector<double>& x) {
  return TreeExplainer(model).explain(x);
}

std::vector<double> brute_force_shapley(const forest::IsolationForestModel& model, const std::vector<double>& x) {
  check_shape(model, x);
  const int m = model.feature_count;
  if (m > 12) throw TooLargeError("brute-force Shapley supports at most 12 features, model has " + std::to_string(m));
  const std::uint32_t subsets = std::uint32_t{1} << m;

  std::vector<std::vector<double>> leaves;
  for (const auto& t : model.trees) leaves.push_back(leaf_values(t));
  std::vector<double> v(subsets, 0.0);
  for (std::uint32_t s = 0; s < subsets; ++s) {
    double total = 0.0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      total += conditional_expectation(model.trees[t], leaves[t], 0, x.data(), s);
    }
    v[s] = model.trees.empty() ? 0.0 : total / static_cast<double>(model.trees.size());
  }

  std::vector<double> factorial(static_cast<std::size_t>(m) + 1, 1.0);
  for (int i = 1; i <= m; ++i) factorial[i] = factorial[i - 1] * i;
  std::vector<double> phi(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    const std::uint32_t bit = std::uint32_t{1} << i;
    double sum = 0.0;
    for (std::uint32_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      const int size = __builtin_popcount(s);
      const double weight = factorial[size] * factorial[m - size - 1] / factorial[m];
      sum += weight * (v[s | bit] - v[s]);
    }
    phi[i] = negate(sum);
  }
  return phi;
}

std::vector<Attribution> explain_rows(const forest::IsolationForestModel& model, const features::FeatureMatrix& matrix,
                                      kernels::Execution exec) {
  const TreeExplainer explainer(model);
  std::vector<Attribution> out(matrix.rows.size());
  kernels::for_each_index(matrix.rows.size(), exec, [&](std::size_t i) {
    out[i] = explainer.explain(matrix.rows[i].values);
    out[i].event_id = matrix.rows[i].event_id;
  });
  return out;
}

void describe(Attribution& attribution, const features::FeatureMatrix& matrix, const features::FeatureVector& row,
              std::size_t k) {
  std::vector<std::size_t> order;
  for (std::size_t f = 0; f < attribution.phi.size(); ++f) {
    if (attribution.phi[f] != 0.0) order.push_back(f);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(attribution.phi[a]) > std::fabs(attribution.phi[b]);
  });
  if (order.size() > k) order.resize(k);

  attribution.top_contributors.clear();
  for (std::size_t f : order) {
    const auto& spec = matrix.registry[f];
    Contributor c;
    c.feature_index = f;
    c.feature_id = spec.feature_id;
    c.family = std::string(features::family_name(spec.family));
    c.phi = attribution.phi[f];
    c.value = row.values[f];
    const auto ev = row.evidence.find(f);
    if (ev != row.evidence.end()) c.evidence = ev->second;
    if (spec.kind == features::Kind::kBoolean && c.value == 0.0) {
      c.description = "not observed: " + spec.feature_id;
    } else {
      c.description = features::render_description(spec, c.evidence.empty() ? format_value(c.value) : c.evidence);
    }
    attribution.top_contributors.push_back(std::move(c));
  }
}

double local_accuracy_error(const Attribution& attribution) {
  const double sum = std::accumulate(attribution.phi.begin(), attribution.phi.end(), attribution.base_value);
  return std::fabs(sum - attribution.explained_output);
}

std::vector<FeatureImportance> global_importance(const std::vector<Attribution>& attributions,
                                                 const features::FeatureMatrix& matrix) {
  const std::size_t width = matrix.registry.size();
  std::vector<FeatureImportance> out(width);
  for (std::size_t f = 0; f < width; ++f) {
    const auto& spec = matrix.registry[f];
    out[f].feature_id = spec.feature_id;
    out[f].family = std::string(features::family_name(spec.family));
    out[f].kind = std::string(features::kind_name(spec.kind));
    if (f < matrix.activation_rates.size()) out[f].activation_rate = matrix.activation_rates[f];
  }
  if (attributions.empty()) return out;
  for (const auto& a : attributions) {
    if (a.phi.size() != width) throw ShapeError("attribution width differs from registry");
    for (std::size_t f = 0; f < width; ++f) {
      out[f].mean_phi += a.phi[f];
      out[f].mean_abs_phi += std::fabs(a.phi[f]);
    }
  }
  const double n = static_cast<double>(attributions.size());
  for (auto& fi : out) {
    fi.mean_phi /= n;
    fi.mean_abs_phi /= n;
  }
  return out;
}

std::string importance_csv(const std::vector<FeatureImportance>& importance) {
  std::string out = "feature_id,mean_phi,mean_abs_phi,activation_rate\n";
  for (const auto& fi : importance) {
    out += text::csv_escape(fi.feature_id) + "," + text::format_double(fi.mean_phi) + "," +
           text::format_double(fi.mean_abs_phi) + "," +
           (fi.activation_rate ? text::format_double(*fi.activation_rate) : std::string()) + "\n";
  }
  return out;
}

}  // namespace isoex::explain
