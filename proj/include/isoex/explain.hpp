#pragma once

#include <optional>
#include <string>
#include <vector>

#include "isoex/features.hpp"
#include "isoex/forest.hpp"
#include "isoex/kernels.hpp"

namespace isoex::explain {

struct Contributor {
  std::size_t feature_index = 0;
  std::string feature_id;
  std::string family;
  double phi = 0.0;
  double value = 0.0;
  std::string evidence;
  std::string description;
};

// The decomposed output is the negated mean path length, so positive phi
// pushes toward anomalous and base_value + sum(phi) == explained_output.
struct Attribution {
  std::string event_id;
  double base_value = 0.0;
  std::vector<double> phi;
  double explained_output = 0.0;
  std::vector<Contributor> top_contributors;  // sorted by |phi| descending
};

// Per-model precomputation shared by every explained row.
class TreeExplainer {
 public:
  explicit TreeExplainer(const forest::IsolationForestModel& model);

  // Fills base_value, phi and explained_output.
  Attribution explain(const std::vector<double>& x) const;
  double base_value() const { return base_value_; }

 private:
  struct Tree {
    std::vector<double> value;  // per node: depth + c(size) at leaves
    int max_depth = 0;
  };
  const forest::IsolationForestModel& model_;
  std::vector<Tree> trees_;
  double base_value_ = 0.0;
};

Attribution tree_shap(const forest::IsolationForestModel& model, const std::vector<double>& x);

// Exhaustive Shapley values over all 2^M coalitions; M <= 12.
std::vector<double> brute_force_shapley(const forest::IsolationForestModel& model, const std::vector<double>& x);

// Attributions for every row, in row order; top_contributors left empty.
std::vector<Attribution> explain_rows(const forest::IsolationForestModel& model, const features::FeatureMatrix& matrix,
                                      kernels::Execution exec = kernels::Execution::kParallel);

// Fills top_contributors with the k largest |phi| (nonzero only), ties by registry order.
void describe(Attribution& attribution, const features::FeatureMatrix& matrix, const features::FeatureVector& row,
              std::size_t k);

// |base + sum(phi) - output|.
double local_accuracy_error(const Attribution& attribution);

struct FeatureImportance {
  std::string feature_id;
  std::string family;
  std::string kind;
  double mean_phi = 0.0;
  double mean_abs_phi = 0.0;
  std::optional<double> activation_rate;
};

std::vector<FeatureImportance> global_importance(const std::vector<Attribution>& attributions,
                                                 const features::FeatureMatrix& matrix);

// feature_id,mean_phi,mean_abs_phi,activation_rate
std::string importance_csv(const std::vector<FeatureImportance>& importance);

}  // namespace isoex::explain
