#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "generators.hpp"
#include "kinship/csv_io.hpp"
#include "kinship/error.hpp"
#include "kinship/metrics.hpp"
#include "oracles.hpp"

using namespace kinship;

TEST_CASE("roc_auc matches the brute-force pair count exactly") {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(199);
    const auto y = gen::labels(rng, n, 0.1 + 0.8 * rng.uniform());
    // Alternate continuous scores and heavily tied ones.
    const auto s = trial % 2 == 0 ? gen::uniform_scores(rng, n) : gen::tied_scores(rng, n, 1 + rng.index(6));
    CHECK(roc_auc(s, y) == oracle::brute_force_auc(s, y));
  }
}

TEST_CASE("roc_auc closed forms") {
  const std::vector<int> y = {1, 1, 0, 0};
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.9, 0.4, 0.6, 0.1}, y) == 0.75);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1}), DimensionError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), ParameterError);
}

TEST_CASE("roc_auc is invariant to strictly increasing transforms and complements") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.index(100);
    const auto y = gen::labels(rng, n);
    const auto s = gen::tied_scores(rng, n, 8);
    std::vector<double> warped(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      warped[i] = std::exp(3.0 * s[i]) - 7.0;
      flipped[i] = 1.0 - s[i];
    }
    const double auc = roc_auc(s, y);
    CHECK(roc_auc(warped, y) == auc);
    CHECK(roc_auc(flipped, y) + auc == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("roc_auc on prediction sets joins by pair id") {
  const auto p = gen::prediction_set("m", {0.2, 0.9, 0.4});
  LabelSet labels;
  labels.add(gen::pair_id(2), 0);
  labels.add(gen::pair_id(1), 1);
  labels.add(gen::pair_id(0), 0);
  CHECK(roc_auc(p, labels) == 1.0);
  LabelSet partial;
  partial.add(gen::pair_id(0), 0);
  CHECK_THROWS_AS(roc_auc(p, partial), JoinError);
  CHECK_THROWS_AS(partial.add(gen::pair_id(0), 1), ParameterError);
  CHECK_THROWS_AS(partial.add(gen::pair_id(5), 3), ParameterError);
}

TEST_CASE("pearson_corr matches the definition and is affine invariant") {
  Rng rng(102);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(300);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal(0, 5);
      b[i] = 0.3 * a[i] + rng.normal(1, 2);
    }
    const double r = pearson_corr(a, b);
    CHECK(std::abs(r - oracle::pearson(a, b)) <= 1e-12);
    CHECK(std::abs(r) <= 1.0);

    const double alpha = 0.1 + 10.0 * rng.uniform(), beta = rng.normal(0, 100);
    std::vector<double> moved(n), negated(n);
    for (std::size_t i = 0; i < n; ++i) {
      moved[i] = alpha * a[i] + beta;
      negated[i] = -alpha * a[i] + beta;
    }
    CHECK(std::abs(pearson_corr(moved, b) - r) <= 1e-12);
    CHECK(std::abs(pearson_corr(negated, b) + r) <= 1e-12);
    CHECK(std::abs(pearson_corr(b, a) - r) <= 1e-15);
  }
  const std::vector<double> flat = {2, 2, 2};
  CHECK_THROWS_AS(pearson_corr(flat, std::vector<double>{1, 2, 3}), UndefinedMetricError);
  CHECK_THROWS_AS(pearson_corr(std::vector<double>{1}, std::vector<double>{1}), DimensionError);
  CHECK_THROWS_AS(pearson_corr(flat, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("corr_matrix recovers a planted correlation") {
  Rng rng(103);
  for (double rho : {0.0, 0.55, 0.9, -0.4}) {
    auto [a, b] = gen::correlated_pair(rng, 5310, rho);
    const std::vector<PredictionSet> sets = {gen::prediction_set("a", a), gen::prediction_set("b", b)};
    const CorrelationMatrix m = corr_matrix(sets);
    CHECK(std::abs(m.at(0, 1) - rho) <= 0.05);
    CHECK(m.at(0, 1) == m.at(1, 0));
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.mean_off_diagonal(0) == m.at(0, 1));
  }
}

TEST_CASE("corr_matrix uses the shared ids only") {
  auto a = gen::prediction_set("a", {0.1, 0.2, 0.3, 0.4});
  auto b = gen::prediction_set("b", {0.4, 0.1, 0.35});
  b.entries.emplace_back("zz.jpg-yy.jpg", 0.9);
  const std::vector<PredictionSet> sets = {a, b};
  const auto m = corr_matrix(sets);
  CHECK(m.at(0, 1) == doctest::Approx(oracle::pearson({0.1, 0.2, 0.3}, {0.4, 0.1, 0.35})).epsilon(1e-12));
  auto c = gen::prediction_set("c", {0.5});
  const std::vector<PredictionSet> disjoint = {a, c};
  CHECK_THROWS_AS(corr_matrix(disjoint), JoinError);
}

TEST_CASE("weighted_ensemble examples") {
  const std::vector<PredictionSet> sets = {gen::prediction_set("a", {0.2, 1.0, 0.0}),
                                           gen::prediction_set("b", {0.6, 0.0, 1.0})};
  const auto e = weighted_ensemble(sets, std::vector<double>{1, 3}, "mix");
  CHECK(e.name == "mix");
  CHECK(e.entries[0].second == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(e.entries[1].second == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(e.entries[2].second == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(e.entries[1].first == gen::pair_id(1));

  const auto single = weighted_ensemble(std::span(sets.data(), 1), std::vector<double>{2.5});
  CHECK(single.entries == sets[0].entries);

  CHECK_THROWS_AS(weighted_ensemble(sets, std::vector<double>{1}), ParameterError);
  CHECK_THROWS_AS(weighted_ensemble(sets, std::vector<double>{-1, 2}), ParameterError);
  CHECK_THROWS_AS(weighted_ensemble(sets, std::vector<double>{0, 0}), ParameterError);
  const std::vector<PredictionSet> ragged = {sets[0], gen::prediction_set("c", {0.1, 0.2})};
  CHECK_THROWS_AS(weighted_ensemble(ragged, std::vector<double>{1, 1}), JoinError);
}

TEST_CASE("weighted_ensemble stays inside the members' hull") {
  Rng rng(104);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.index(5), n = 1 + rng.index(40);
    std::vector<PredictionSet> sets;
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) {
      sets.push_back(gen::prediction_set("m" + std::to_string(i), gen::uniform_scores(rng, n)));
      w[i] = rng.uniform() + (i == 0 ? 0.01 : 0.0);
    }
    const auto e = weighted_ensemble(sets, w);
    for (std::size_t j = 0; j < n; ++j) {
      double lo = 1.0, hi = 0.0;
      for (const auto& s : sets) lo = std::min(lo, s.entries[j].second), hi = std::max(hi, s.entries[j].second);
      CHECK(e.entries[j].second >= lo - 1e-15);
      CHECK(e.entries[j].second <= hi + 1e-15);
    }
  }
}

TEST_CASE("heuristic weights favour skill and diversity") {
  Rng rng(105);
  const auto y = gen::labels(rng, 400);
  const auto labels = gen::label_set(y);

  // A model ranking worse than chance gets weight zero.
  const auto good = gen::ensemble_members(rng, y, 1, 0.5, 1.5)[0];
  std::vector<double> contrarian(good.size());
  for (std::size_t i = 0; i < good.size(); ++i) contrarian[i] = 1.0 - good[i];
  std::vector<PredictionSet> sets = {gen::prediction_set("good", good), gen::prediction_set("contrarian", contrarian)};
  auto w = heuristic_weights(sets, labels, 0.5);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.0);

  // Equal skill: the member less correlated with the others gets more weight.
  auto twins = gen::ensemble_members(rng, y, 2, 0.95, 1.5);
  auto independent = gen::ensemble_members(rng, y, 1, 0.0, 1.5)[0];
  sets = {gen::prediction_set("t0", twins[0]), gen::prediction_set("t1", twins[1]),
          gen::prediction_set("solo", independent)};
  w = heuristic_weights(sets, labels, 1.0);
  CHECK(w[2] > w[0]);
  CHECK(w[2] > w[1]);

  // lambda = 0 reduces to skill-proportional weights.
  w = heuristic_weights(sets, labels, 0.0);
  double total = 0.0;
  for (const auto& s : sets) total += roc_auc(s, labels) - 0.5;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    CHECK(w[i] == doctest::Approx((roc_auc(sets[i], labels) - 0.5) / total).epsilon(1e-12));
  }

  std::vector<int> flipped(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - y[i];
  CHECK_THROWS_AS(heuristic_weights(std::span(sets.data(), 1), gen::label_set(flipped), 0.5), ParameterError);
  CHECK_THROWS_AS(heuristic_weights(sets, labels, -1.0), ParameterError);
}

TEST_CASE("diversity report histograms count every score") {
  Rng rng(106);
  std::vector<double> s = gen::uniform_scores(rng, 997);
  s[0] = 1.0;
  s[1] = 0.0;
  s[2] = 0.05;
  const std::vector<PredictionSet> sets = {gen::prediction_set("a", s),
                                           gen::prediction_set("b", gen::uniform_scores(rng, 997))};
  const auto r = diversity_report(sets);
  CHECK_FALSE(r.aucs.has_value());
  for (const auto& h : r.histograms) CHECK(std::accumulate(h.begin(), h.end(), std::size_t{0}) == 997);
  CHECK(r.sizes == std::vector<std::size_t>{997, 997});
}

TEST_CASE("diversity report matches the golden rendering") {
  const std::string dir = KINSHIP_TEST_DATA;
  std::vector<PredictionSet> sets;
  for (const char* m : {"model_a", "model_b", "model_c", "model_d"}) {
    sets.push_back(parse_submission_csv(std::filesystem::path(dir + "/" + m + ".csv")));
  }
  const LabelSet labels = parse_label_csv(std::filesystem::path(dir + "/labels.csv"));
  const auto report = diversity_report(sets, &labels);
  REQUIRE(report.aucs.has_value());
  // Pair counts by hand: a ranks 8 of 9 positive/negative pairs correctly,
  // b scores 6.5 with ties counted as one half.
  CHECK((*report.aucs)[0] == 8.0 / 9.0);
  CHECK((*report.aucs)[1] == 6.5 / 9.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(report.correlation.at(i, i) == 1.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(report.correlation.at(i, j) == report.correlation.at(j, i));
  }
  CHECK(report.correlation.at(0, 1) == doctest::Approx(0.88877246).epsilon(1e-8));

  std::ifstream golden(dir + "/report_golden.txt");
  REQUIRE(golden);
  std::stringstream expected;
  expected << golden.rdbuf();
  CHECK(format_text(report) == expected.str());
}
