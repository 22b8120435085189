#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kinship {

/// Named list of (pair_id, score) in file order. Ids are unique and scores
/// lie in [0, 1]; `validate` enforces both.
struct PredictionSet {
  std::string name;
  std::vector<std::pair<std::string, double>> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<double> scores() const;
  void validate() const;
};

/// pair_id -> {0, 1}.
struct LabelSet {
  std::unordered_map<std::string, int> labels;

  // Throws ParameterError for labels outside {0, 1} or duplicate ids.
  void add(const std::string& pair_id, int label);
  bool contains(const std::string& pair_id) const { return labels.count(pair_id) != 0; }
  int at(const std::string& pair_id) const;
  std::size_t size() const { return labels.size(); }
};

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<double> values;  // row-major names.size()^2

  std::size_t size() const { return names.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
  // Mean of row i excluding the diagonal.
  double mean_off_diagonal(std::size_t i) const;
};

/// Exact ROC-AUC as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting 1/2.
/// O(n log n) via midranks. Throws UndefinedMetricError unless both
/// classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Joins on pair_id; every prediction id must be labeled (JoinError lists
// the missing ones).
double roc_auc(const PredictionSet& predictions, const LabelSet& labels);

/// Two-pass Pearson correlation. Throws UndefinedMetricError if either
/// vector is constant and DimensionError if lengths differ or n < 2.
double pearson_corr(std::span<const double> a, std::span<const double> b);

// Inner join on pair_id, then pearson_corr.
double pearson_corr(const PredictionSet& a, const PredictionSet& b);

/// Pairwise correlations over the pair_ids shared by every set. Throws
/// JoinError if fewer than two ids are shared.
CorrelationMatrix corr_matrix(std::span<const PredictionSet> sets);

/// Per pair, sum_i w_i * score_i with weights normalized to sum 1. Every set
/// must cover exactly the first set's ids; output keeps the first set's
/// order.
PredictionSet weighted_ensemble(std::span<const PredictionSet> sets, std::span<const double> weights,
                                std::string name = "ensemble");

/// Diversity-aware weights: w_i proportional to
///   max(0, AUC_i - 0.5) * max(0, 1 - lambda * meanOffDiagCorr_i),
/// normalized to sum 1. AUC is measured on `validation`. Throws
/// ParameterError when every weight clips to zero.
std::vector<double> heuristic_weights(std::span<const PredictionSet> sets, const LabelSet& validation,
                                      double lambda = 0.5);

inline constexpr std::size_t kHistogramBins = 20;

struct DiversityReport {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::optional<std::vector<double>> aucs;
  CorrelationMatrix correlation;
  // 20 equal bins over [0, 1]; a score of exactly 1 lands in the last bin.
  std::vector<std::array<std::size_t, kHistogramBins>> histograms;
};

DiversityReport diversity_report(std::span<const PredictionSet> sets, const LabelSet* labels = nullptr);
std::string format_text(const DiversityReport& report);
std::string format_csv(const DiversityReport& report);
std::string format_text(const CorrelationMatrix& matrix);
std::string format_csv(const CorrelationMatrix& matrix);

}  // namespace kinship
