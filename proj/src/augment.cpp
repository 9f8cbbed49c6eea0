#include "isoex/augment.hpp"

#include <cmath>
#include <map>

#include "isoex/error.hpp"
#include "isoex/random.hpp"

namespace isoex::augment {

namespace {

constexpr int kMaxRounds = 100;
constexpr std::uint64_t kDonorStream = 0x646f6e6f72ULL;

bool reaches(std::size_t active, std::size_t rows, double tau) {
  return static_cast<double>(active) / static_cast<double>(rows) >= tau;
}

}  // namespace

std::size_t minimal_copies(std::size_t active, std::size_t rows, double tau) {
  if (rows == 0 || reaches(active, rows, tau)) return 0;
  const double estimate = (tau * static_cast<double>(rows) - static_cast<double>(active)) / (1.0 - tau);
  auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(estimate)));
  while (!reaches(active + k, rows + k, tau)) ++k;
  while (k > 0 && reaches(active + k - 1, rows + k - 1, tau)) --k;
  return k;
}

Augmented augment(const features::FeatureMatrix& matrix, double tau, std::uint64_t seed) {
  if (!(tau >= 0.0 && tau < 1.0)) throw ValidationError("tau", "must be in [0, 1)");
  Augmented out{matrix, {}};
  auto& m = out.matrix;
  auto& report = out.report;
  report.tau = tau;
  report.seed = seed;

  const std::size_t real = matrix.rows.size();
  const std::size_t width = matrix.registry.size();
  std::vector<std::size_t> booleans;
  for (std::size_t f = 0; f < width; ++f) {
    if (matrix.registry[f].kind == features::Kind::kBoolean) booleans.push_back(f);
  }

  std::vector<std::size_t> active(width, 0);
  std::vector<std::vector<std::size_t>> donors(width);
  for (std::size_t r = 0; r < real; ++r) {
    for (std::size_t f : booleans) {
      if (matrix.rows[r].values[f] == 1.0) {
        ++active[f];
        donors[f].push_back(r);
      }
    }
  }

  const std::vector<std::size_t> real_active = active;
  std::map<std::size_t, BoostedFeature> boosted;
  for (std::size_t f : booleans) {
    if (active[f] == 0 && tau > 0.0) report.skipped_zero_rate.push_back(matrix.registry[f].feature_id);
  }

  random::Xoshiro256 rng(random::stream_seed(seed, kDonorStream));
  std::size_t synthetic = 0;
  for (int round = 0; round < kMaxRounds; ++round) {
    bool added = false;
    for (std::size_t f : booleans) {
      if (active[f] == 0) continue;
      const std::size_t k = minimal_copies(active[f], m.rows.size(), tau);
      if (k == 0) continue;
      auto [it, fresh] = boosted.try_emplace(f);
      if (fresh) {
        it->second.feature_id = matrix.registry[f].feature_id;
        it->second.original_rate = static_cast<double>(real_active[f]) / static_cast<double>(real);
      }
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t donor = donors[f][rng.below(donors[f].size())];
        features::FeatureVector row = matrix.rows[donor];
        row.event_id = matrix.rows[donor].event_id + "#syn" + std::to_string(synthetic++);
        row.synthetic = true;
        for (std::size_t g : booleans) {
          if (row.values[g] == 1.0) ++active[g];
        }
        m.rows.push_back(std::move(row));
      }
      it->second.synthetic_rows_added += k;
      added = true;
    }
    report.iterations = static_cast<std::size_t>(round) + 1;
    if (!added) break;
  }

  m.recompute_activation_rates();
  for (auto& [f, b] : boosted) {
    b.final_rate = *m.activation_rates[f];
    report.boosted.push_back(b);
  }
  for (std::size_t f : booleans) {
    if (active[f] > 0 && !reaches(active[f], m.rows.size(), tau)) {
      report.still_short.push_back(matrix.registry[f].feature_id);
    }
  }
  report.total_synthetic_rows = synthetic;
  return out;
}

Trained train_with_augmentation(const features::FeatureMatrix& matrix, double tau, const forest::ForestParams& params,
                                std::uint64_t seed, kernels::Execution exec) {
  Augmented aug = augment(matrix, tau, seed);
  Trained t;
  t.model = forest::fit(aug.matrix, params, exec);
  std::vector<std::vector<double>> real_rows;
  real_rows.reserve(matrix.rows.size());
  for (const auto& r : aug.matrix.rows) {
    if (!r.synthetic) real_rows.push_back(r.values);
  }
  t.path_lengths = forest::path_lengths(t.model, real_rows, exec);
  t.scores.reserve(t.path_lengths.size());
  for (double pl : t.path_lengths) t.scores.push_back(forest::score_from_path_length(pl, t.model.c_psi));
  t.training_matrix = std::move(aug.matrix);
  t.report = std::move(aug.report);
  return t;
}

}  // namespace isoex::augment
