#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isoex/features.hpp"
#include "isoex/kernels.hpp"

namespace isoex::forest {

// c(n): average unsuccessful-search path length of a BST with n points.
// c(0) = c(1) = 0 and c(2) = 1.
double average_path_normalizer(std::int64_t n);

struct Node {
  std::int32_t feature = -1;  // -1 marks an external node
  double split = 0.0;         // x[feature] < split goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t size = 0;     // training rows reaching the node
  std::uint32_t depth = 0;

  bool external() const { return feature < 0; }
};

// Nodes in preorder; nodes[0] is the root.
struct IsolationTree {
  std::vector<Node> nodes;
  int height_limit = 0;

  double path_length(const double* x) const;
  int depth() const;
};

struct ForestParams {
  int trees = 100;
  int subsample = 256;
  std::uint64_t seed = 0;
  // Overrides ceil(log2 psi) when set.
  std::optional<int> max_depth;
};

struct IsolationForestModel {
  std::vector<IsolationTree> trees;
  int subsample_size = 0;
  int tree_count = 0;
  std::uint64_t seed = 0;
  int feature_count = 0;
  double c_psi = 0.0;

  // Mean over trees of edges traversed plus c(external size).
  double path_length(const std::vector<double>& x) const;
  double score(const std::vector<double>& x) const;
};

// Assembles a model from explicit trees; fills depths and c_psi.
IsolationForestModel make_model(std::vector<IsolationTree> trees, int subsample_size, int feature_count,
                                std::uint64_t seed = 0);

double score_from_path_length(double path_length, double c_psi);

// Rows are keyed for subsampling so that membership depends on the keys and
// the seed, never on row positions.
IsolationForestModel fit(const std::vector<std::vector<double>>& rows, const std::vector<std::uint64_t>& row_keys,
                         const ForestParams& params, kernels::Execution exec = kernels::Execution::kParallel);

// Keys are hashes of event ids.
IsolationForestModel fit(const features::FeatureMatrix& matrix, const ForestParams& params,
                         kernels::Execution exec = kernels::Execution::kParallel);

std::uint64_t row_key(const std::string& event_id);

std::vector<double> path_lengths(const IsolationForestModel& model, const std::vector<std::vector<double>>& rows,
                                 kernels::Execution exec = kernels::Execution::kParallel);
std::vector<double> scores(const IsolationForestModel& model, const std::vector<std::vector<double>>& rows,
                           kernels::Execution exec = kernels::Execution::kParallel);

std::string serialize_model(const IsolationForestModel& model);
IsolationForestModel deserialize_model(const std::string& json);

}  // namespace isoex::forest
