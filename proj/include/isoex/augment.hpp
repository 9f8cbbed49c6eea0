#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isoex/features.hpp"
#include "isoex/forest.hpp"
#include "isoex/kernels.hpp"

namespace isoex::augment {

struct BoostedFeature {
  std::string feature_id;
  double original_rate = 0.0;
  std::size_t synthetic_rows_added = 0;
  double final_rate = 0.0;
};

struct AugmentationReport {
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::vector<BoostedFeature> boosted;
  // Booleans below tau with no active row to copy.
  std::vector<std::string> skipped_zero_rate;
  // Booleans still below tau when the iteration cap was reached.
  std::vector<std::string> still_short;
  std::size_t total_synthetic_rows = 0;
  std::size_t iterations = 0;
};

struct Augmented {
  features::FeatureMatrix matrix;  // real rows first, then synthetic rows
  AugmentationReport report;
};

// Smallest k >= 0 with (active + k) / (rows + k) >= tau.
std::size_t minimal_copies(std::size_t active, std::size_t rows, double tau);

// Donor-copy augmentation: every boolean with 0 < rate < tau receives copies
// of seeded random real rows on which it is active, repeated until no
// boolean is short or 100 rounds have run. tau in [0, 1); 0 disables.
Augmented augment(const features::FeatureMatrix& matrix, double tau, std::uint64_t seed);

struct Trained {
  forest::IsolationForestModel model;
  features::FeatureMatrix training_matrix;
  std::vector<double> scores;        // real rows only, in matrix order
  std::vector<double> path_lengths;  // aligned with scores
  AugmentationReport report;
};

Trained train_with_augmentation(const features::FeatureMatrix& matrix, double tau, const forest::ForestParams& params,
                                std::uint64_t seed, kernels::Execution exec = kernels::Execution::kParallel);

}  // namespace isoex::augment
