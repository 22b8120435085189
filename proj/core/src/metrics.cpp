#include "kinship/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "kinship/error.hpp"

namespace kinship {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string list_ids(const std::vector<std::string>& ids) {
  constexpr std::size_t shown = 5;
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < shown; ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

// Ids present in every set, in the first set's order.
std::vector<std::string> shared_ids(std::span<const PredictionSet> sets) {
  std::vector<std::string> ids;
  if (sets.empty()) return ids;
  std::vector<std::unordered_set<std::string>> lookup;
  for (std::size_t s = 1; s < sets.size(); ++s) {
    std::unordered_set<std::string> keys;
    for (const auto& e : sets[s].entries) keys.insert(e.first);
    lookup.push_back(std::move(keys));
  }
  for (const auto& e : sets[0].entries) {
    const bool everywhere =
        std::all_of(lookup.begin(), lookup.end(), [&](const auto& keys) { return keys.count(e.first) != 0; });
    if (everywhere) ids.push_back(e.first);
  }
  return ids;
}

std::vector<double> scores_for(const PredictionSet& set, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, double> index;
  index.reserve(set.entries.size());
  for (const auto& e : set.entries) index.emplace(e.first, e.second);
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(index.at(id));
  return out;
}

}  // namespace

std::vector<double> PredictionSet::scores() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.second);
  return out;
}

void PredictionSet::validate() const {
  std::unordered_set<std::string> seen;
  seen.reserve(entries.size());
  for (const auto& [id, score] : entries) {
    if (!seen.insert(id).second) throw ParameterError("duplicate pair_id '" + id + "' in prediction set '" + name + "'");
    if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
      throw ParameterError("score " + std::to_string(score) + " for pair_id '" + id + "' is outside [0, 1]");
    }
  }
}

void LabelSet::add(const std::string& pair_id, int label) {
  if (label != 0 && label != 1) {
    throw ParameterError("label for '" + pair_id + "' must be 0 or 1, got " + std::to_string(label));
  }
  if (!labels.emplace(pair_id, label).second) throw ParameterError("duplicate label for pair_id '" + pair_id + "'");
}

int LabelSet::at(const std::string& pair_id) const {
  auto it = labels.find(pair_id);
  if (it == labels.end()) throw JoinError("no label for pair_id '" + pair_id + "'");
  return it->second;
}

double CorrelationMatrix::mean_off_diagonal(std::size_t i) const {
  const std::size_t n = size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) total += at(i, j);
  }
  return total / static_cast<double>(n - 1);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::uint64_t positives = 0;
  for (int label : labels) {
    if (label != 0 && label != 1) throw ParameterError("roc_auc: labels must be 0 or 1");
    positives += static_cast<std::uint64_t>(label);
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("roc_auc is undefined unless both classes are present (" + std::to_string(positives) +
                               " positive, " + std::to_string(negatives) + " negative)");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw ParameterError("roc_auc: NaN score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, with tied groups sharing their midrank
  // (first + last + 2) / 2 in 1-based ranks; doubled it stays integral.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_midrank = static_cast<std::uint64_t>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_midrank;
    }
    i = j;
  }
  // 2U = 2 * rank_sum - P (P + 1)
  const std::uint64_t doubled_u = doubled_rank_sum - positives * (positives + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double roc_auc(const PredictionSet& predictions, const LabelSet& labels) {
  std::vector<std::string> missing;
  std::vector<double> scores;
  std::vector<int> truth;
  scores.reserve(predictions.size());
  truth.reserve(predictions.size());
  for (const auto& [id, score] : predictions.entries) {
    auto it = labels.labels.find(id);
    if (it == labels.labels.end()) {
      missing.push_back(id);
      continue;
    }
    scores.push_back(score);
    truth.push_back(it->second);
  }
  if (!missing.empty()) {
    throw JoinError("pair_ids of '" + predictions.name + "' missing from labels: " + list_ids(missing));
  }
  return roc_auc(scores, truth);
}

double pearson_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("pearson_corr: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw DimensionError("pearson_corr needs at least 2 observations");
  const double n = static_cast<double>(a.size());
  const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedMetricError("pearson_corr is undefined for a constant vector");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

double pearson_corr(const PredictionSet& a, const PredictionSet& b) {
  const PredictionSet pair[] = {a, b};
  const auto ids = shared_ids(pair);
  if (ids.size() < 2) {
    throw JoinError("'" + a.name + "' and '" + b.name + "' share " + std::to_string(ids.size()) + " pair_ids");
  }
  return pearson_corr(scores_for(a, ids), scores_for(b, ids));
}

CorrelationMatrix corr_matrix(std::span<const PredictionSet> sets) {
  if (sets.size() < 2) throw ParameterError("corr_matrix needs at least two prediction sets");
  const auto ids = shared_ids(sets);
  if (ids.size() < 2) {
    throw JoinError("prediction sets share " + std::to_string(ids.size()) + " pair_ids; need at least 2");
  }
  std::vector<std::vector<double>> columns;
  for (const auto& s : sets) columns.push_back(scores_for(s, ids));

  CorrelationMatrix m;
  const std::size_t k = sets.size();
  for (const auto& s : sets) m.names.push_back(s.name);
  m.values.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    m.values[i * k + i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      const double r = pearson_corr(columns[i], columns[j]);
      m.values[i * k + j] = r;
      m.values[j * k + i] = r;
    }
  }
  return m;
}

PredictionSet weighted_ensemble(std::span<const PredictionSet> sets, std::span<const double> weights,
                                std::string name) {
  if (sets.empty()) throw ParameterError("weighted_ensemble needs at least one prediction set");
  if (weights.size() != sets.size()) {
    throw ParameterError("weighted_ensemble: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(sets.size()) + " sets");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw ParameterError("ensemble weights must be non-negative, got " + std::to_string(w));
    total += w;
  }
  if (total <= 0.0) throw ParameterError("ensemble weights sum to zero");

  const PredictionSet& base = sets[0];
  std::unordered_set<std::string> base_ids;
  for (const auto& e : base.entries) base_ids.insert(e.first);
  std::vector<std::vector<double>> columns;
  for (const auto& s : sets) {
    std::vector<std::string> extra;
    std::unordered_set<std::string> ids;
    for (const auto& e : s.entries) {
      ids.insert(e.first);
      if (!base_ids.count(e.first)) extra.push_back(e.first);
    }
    std::vector<std::string> missing;
    for (const auto& e : base.entries) {
      if (!ids.count(e.first)) missing.push_back(e.first);
    }
    if (!missing.empty() || !extra.empty() || s.entries.size() != base.entries.size()) {
      std::string msg = "'" + s.name + "' does not cover the same pair_ids as '" + base.name + "'";
      if (!missing.empty()) msg += "; missing: " + list_ids(missing);
      if (!extra.empty()) msg += "; unexpected: " + list_ids(extra);
      throw JoinError(msg);
    }
    std::vector<std::string> order;
    order.reserve(base.entries.size());
    for (const auto& e : base.entries) order.push_back(e.first);
    columns.push_back(scores_for(s, order));
  }

  PredictionSet out;
  out.name = std::move(name);
  out.entries.reserve(base.entries.size());
  for (std::size_t r = 0; r < base.entries.size(); ++r) {
    double fused = 0.0;
    for (std::size_t s = 0; s < sets.size(); ++s) fused += (weights[s] / total) * columns[s][r];
    // Rounding can step a hair past the convex hull; keep the [0, 1] contract.
    out.entries.emplace_back(base.entries[r].first, std::clamp(fused, 0.0, 1.0));
  }
  return out;
}

std::vector<double> heuristic_weights(std::span<const PredictionSet> sets, const LabelSet& validation,
                                      double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be non-negative");
  if (sets.empty()) throw ParameterError("heuristic_weights needs at least one prediction set");
  std::vector<double> mean_corr(sets.size(), 0.0);
  if (sets.size() >= 2) {
    const CorrelationMatrix m = corr_matrix(sets);
    for (std::size_t i = 0; i < sets.size(); ++i) mean_corr[i] = m.mean_off_diagonal(i);
  }
  std::vector<double> weights(sets.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const double skill = std::max(0.0, roc_auc(sets[i], validation) - 0.5);
    const double diversity = std::max(0.0, 1.0 - lambda * mean_corr[i]);
    weights[i] = skill * diversity;
    total += weights[i];
  }
  if (total <= 0.0) {
    throw ParameterError("all heuristic weights are zero (no model beats AUC 0.5 with positive diversity factor)");
  }
  for (double& w : weights) w /= total;
  return weights;
}

DiversityReport diversity_report(std::span<const PredictionSet> sets, const LabelSet* labels) {
  for (const auto& s : sets) s.validate();
  DiversityReport r;
  r.correlation = corr_matrix(sets);
  r.names = r.correlation.names;
  if (labels) r.aucs.emplace();
  for (const auto& s : sets) {
    r.sizes.push_back(s.size());
    if (labels) r.aucs->push_back(roc_auc(s, *labels));
    std::array<std::size_t, kHistogramBins> bins{};
    for (const auto& e : s.entries) {
      auto bin = static_cast<std::size_t>(std::floor(e.second * static_cast<double>(kHistogramBins)));
      bins[std::min(bin, kHistogramBins - 1)] += 1;
    }
    r.histograms.push_back(bins);
  }
  return r;
}

std::string format_text(const CorrelationMatrix& matrix) {
  std::size_t width = 8;
  for (const auto& n : matrix.names) width = std::max(width, n.size());
  auto pad = [&](const std::string& s) { return s + std::string(width + 2 - std::min(width + 1, s.size()), ' '); };
  std::string out = pad("");
  for (const auto& n : matrix.names) out += pad(n);
  out += pad("mean_off_diag") + "\n";
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += pad(matrix.names[i]);
    for (std::size_t j = 0; j < matrix.size(); ++j) out += pad(fixed6(matrix.at(i, j)));
    out += fixed6(matrix.mean_off_diagonal(i)) + "\n";
  }
  return out;
}

std::string format_csv(const CorrelationMatrix& matrix) {
  std::string out = "model";
  for (const auto& n : matrix.names) out += "," + n;
  out += ",mean_off_diag\n";
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += matrix.names[i];
    for (std::size_t j = 0; j < matrix.size(); ++j) out += "," + fixed6(matrix.at(i, j));
    out += "," + fixed6(matrix.mean_off_diagonal(i)) + "\n";
  }
  return out;
}

std::string format_text(const DiversityReport& report) {
  std::string out = "== models ==\n";
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    out += report.names[i] + "  n=" + std::to_string(report.sizes[i]);
    if (report.aucs) out += "  auc=" + fixed6((*report.aucs)[i]);
    out += "\n";
  }
  out += "\n== correlation (pearson) ==\n" + format_text(report.correlation);
  out += "\n== score histogram (20 bins over [0,1]) ==\n";
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    out += report.names[i] + ":";
    for (auto c : report.histograms[i]) out += " " + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::string format_csv(const DiversityReport& report) {
  std::string out = "section,model,key,value\n";
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    out += "summary," + report.names[i] + ",n," + std::to_string(report.sizes[i]) + "\n";
    if (report.aucs) out += "summary," + report.names[i] + ",auc," + fixed6((*report.aucs)[i]) + "\n";
    out += "summary," + report.names[i] + ",mean_off_diag," + fixed6(report.correlation.mean_off_diagonal(i)) + "\n";
  }
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    for (std::size_t j = 0; j < report.names.size(); ++j) {
      out += "correlation," + report.names[i] + "," + report.names[j] + "," + fixed6(report.correlation.at(i, j)) + "\n";
    }
  }
  for (std::size_t i = 0; i < report.names.size(); ++i) {
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      char key[32];
      std::snprintf(key, sizeof(key), "%.2f-%.2f", static_cast<double>(b) / kHistogramBins,
                    static_cast<double>(b + 1) / kHistogramBins);
      out += "histogram," + report.names[i] + "," + key + "," + std::to_string(report.histograms[i][b]) + "\n";
    }
  }
  return out;
}

}  // namespace kinship
