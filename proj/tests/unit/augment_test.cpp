#include <gtest/gtest.h>

#include <map>

#include "isoex/augment.hpp"
#include "isoex/error.hpp"
#include "isoex/random.hpp"

using namespace isoex;
using features::FeatureMatrix;

namespace {

// Minimal k by plain search, using integer cross-multiplication.
std::size_t oracle_copies(std::size_t active, std::size_t rows, std::size_t tau_num, std::size_t tau_den) {
  std::size_t k = 0;
  while ((active + k) * tau_den < tau_num * (rows + k)) ++k;
  return k;
}

// Numeric column 0 plus booleans with the given active counts over n rows.
FeatureMatrix fixture(std::size_t n, const std::vector<std::size_t>& active, std::uint64_t seed) {
  FeatureMatrix m;
  m.registry.push_back({"num", features::Family::kEntropy, features::Kind::kNumeric, features::Target::kChild, "{value}"});
  for (std::size_t b = 0; b < active.size(); ++b) {
    m.registry.push_back({"flag" + std::to_string(b), features::Family::kIoc, features::Kind::kBoolean,
                          features::Target::kChild, "flag"});
  }
  random::Xoshiro256 rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    features::FeatureVector row;
    row.event_id = "e" + std::to_string(r);
    row.values.push_back(rng.uniform01());
    for (std::size_t b = 0; b < active.size(); ++b) row.values.push_back(r < active[b] * (b + 1) && r % (b + 1) == 0 ? 1.0 : 0.0);
    m.rows.push_back(row);
  }
  m.recompute_activation_rates();
  return m;
}

std::size_t count_active(const FeatureMatrix& m, std::size_t f) {
  std::size_t c = 0;
  for (const auto& r : m.rows) c += r.values[f] == 1.0;
  return c;
}

}  // namespace

TEST(Augment, MinimalCopiesWorkedExample) {
  EXPECT_EQ(augment::minimal_copies(2, 1000, 0.01), 9u);
  EXPECT_EQ(oracle_copies(2, 1000, 1, 100), 9u);
  EXPECT_GE(11.0 / 1009.0, 0.01);
  EXPECT_LT(10.0 / 1008.0, 0.01);
}

TEST(Augment, MinimalCopiesMatchesSearch) {
  const std::vector<std::pair<std::size_t, std::size_t>> taus = {{1, 100}, {1, 20}, {3, 10}, {1, 2}};
  for (auto [num, den] : taus) {
    const double tau = static_cast<double>(num) / static_cast<double>(den);
    for (std::size_t rows = 1; rows < 400; rows += 13) {
      for (std::size_t active = 1; active <= rows; active += 1 + rows / 10) {
        EXPECT_EQ(augment::minimal_copies(active, rows, tau), oracle_copies(active, rows, num, den))
            << active << "/" << rows << " tau " << tau;
      }
    }
  }
}

TEST(Augment, IdentityWhenAllAboveTau) {
  const auto m = fixture(200, {20, 30}, 1);
  const auto out = augment::augment(m, 0.01, 5);
  EXPECT_EQ(out.matrix.rows.size(), m.rows.size());
  EXPECT_EQ(out.report.total_synthetic_rows, 0u);
  EXPECT_TRUE(out.report.boosted.empty());
}

TEST(Augment, DonorCopiesAndFinalRates) {
  const auto m = fixture(1000, {2, 5, 0, 40}, 3);
  const auto out = augment::augment(m, 0.01, 17);
  std::map<std::string, const features::FeatureVector*> real;
  for (const auto& r : m.rows) real[r.event_id] = &r;
  std::size_t synthetic = 0;
  for (std::size_t i = 0; i < out.matrix.rows.size(); ++i) {
    const auto& row = out.matrix.rows[i];
    if (i < m.rows.size()) {
      EXPECT_FALSE(row.synthetic);
      EXPECT_EQ(row.values, m.rows[i].values);
      continue;
    }
    ++synthetic;
    EXPECT_TRUE(row.synthetic);
    const auto donor = row.event_id.substr(0, row.event_id.find('#'));
    EXPECT_EQ(row.values, real.at(donor)->values);
  }
  EXPECT_EQ(synthetic, out.report.total_synthetic_rows);
  EXPECT_GT(synthetic, 0u);
  for (const auto& b : out.report.boosted) {
    const auto f = *out.matrix.index_of(b.feature_id);
    EXPECT_GE(b.final_rate, 0.01);
    EXPECT_DOUBLE_EQ(b.final_rate, static_cast<double>(count_active(out.matrix, f)) / out.matrix.rows.size());
    EXPECT_DOUBLE_EQ(b.original_rate, static_cast<double>(count_active(m, f)) / m.rows.size());
  }
  EXPECT_EQ(out.report.skipped_zero_rate, std::vector<std::string>{"flag2"});
  EXPECT_TRUE(out.report.still_short.empty());
}

TEST(Augment, SingleShortFeatureGetsExactlyMinimalCopies) {
  auto m = fixture(1000, {2}, 9);
  const auto out = augment::augment(m, 0.01, 1);
  EXPECT_EQ(out.report.total_synthetic_rows, 9u);
  EXPECT_EQ(count_active(out.matrix, 1), 11u);
}

TEST(Augment, DeterministicUnderSeed) {
  const auto m = fixture(1500, {3, 6, 9}, 4);
  const auto a = augment::augment(m, 0.01, 42);
  const auto b = augment::augment(m, 0.01, 42);
  ASSERT_EQ(a.matrix.rows.size(), b.matrix.rows.size());
  for (std::size_t i = 0; i < a.matrix.rows.size(); ++i) EXPECT_EQ(a.matrix.rows[i].event_id, b.matrix.rows[i].event_id);
}

TEST(Augment, TauOutsideRangeIsValidationError) {
  const auto m = fixture(10, {1}, 1);
  for (double tau : {-0.1, 1.0, 2.0}) {
    try {
      augment::augment(m, tau, 1);
      FAIL() << tau;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    }
  }
}

TEST(Augment, ZeroTauEqualsPlainFit) {
  const auto m = fixture(600, {2, 3}, 8);
  forest::ForestParams p;
  p.seed = 31;
  const auto trained = augment::train_with_augmentation(m, 0.0, p, 31);
  const auto plain = forest::fit(m, p);
  EXPECT_EQ(forest::serialize_model(trained.model), forest::serialize_model(plain));
  std::vector<std::vector<double>> rows;
  for (const auto& r : m.rows) rows.push_back(r.values);
  EXPECT_EQ(trained.scores, forest::scores(plain, rows));
}

TEST(Augment, ScoresCoverRealRowsOnly) {
  const auto m = fixture(800, {2, 4, 7}, 6);
  forest::ForestParams p;
  p.seed = 2;
  const auto t = augment::train_with_augmentation(m, 0.01, p, 2);
  EXPECT_GT(t.training_matrix.rows.size(), m.rows.size());
  ASSERT_EQ(t.scores.size(), m.rows.size());
  ASSERT_EQ(t.path_lengths.size(), m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(t.scores[i], t.model.score(m.rows[i].values));
  }
}
