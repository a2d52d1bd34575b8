#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "meshgcn/core.hpp"

namespace meshgcn {

/// Binary classification metrics at threshold 0.5. Sensitivity and
/// specificity are undefined when their class is absent; AUC is undefined
/// unless both classes are present.
struct MetricsResult {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double auc = 0.0;
  bool sensitivity_defined = false;
  bool specificity_defined = false;
  bool auc_defined = false;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

/// Mann-Whitney rank AUC: average rank of the positives among all scores,
/// ties contributing 1/2. Requires both classes present.
inline double rank_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  detail::require_arg(probs.size() == labels.size() && !probs.empty(),
                      "rank_auc: probs and labels must be nonempty and equal length");
  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && probs[order[j]] == probs[order[i]]) ++j;
    // Tied scores share the average of the ranks they span (1-based).
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = probs.size() - n_pos;
  detail::require_arg(n_pos > 0 && n_neg > 0, "rank_auc: both classes must be present");
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Trapezoidal integration of the ROC curve, sweeping unique score
/// thresholds from high to low. Independent of the rank formulation; the
/// two agree to floating-point accuracy, ties handled by the diagonal
/// segment the trapezoid cuts across.
inline double trapezoid_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  detail::require_arg(probs.size() == labels.size() && !probs.empty(),
                      "trapezoid_auc: probs and labels must be nonempty and equal length");
  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  detail::require_arg(n_pos > 0 && n_neg > 0, "trapezoid_auc: both classes must be present");

  double area = 0.0;
  double tp = 0.0, fp = 0.0, prev_tp = 0.0, prev_fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double score = probs[order[i]];
    while (i < order.size() && probs[order[i]] == score) {
      if (labels[order[i]] == 1) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++i;
    }
    area += 0.5 * (fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  return area / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline MetricsResult compute_metrics(const std::vector<double>& probs,
                                     const std::vector<int>& labels) {
  detail::require_arg(probs.size() == labels.size() && !probs.empty(),
                      "compute_metrics: probs and labels must be nonempty and equal length");
  MetricsResult m;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    detail::require_arg(labels[i] == 0 || labels[i] == 1,
                        "compute_metrics: labels must be 0 or 1");
    const bool predicted_positive = probs[i] >= 0.5;
    if (labels[i] == 1) {
      (predicted_positive ? m.tp : m.fn)++;
    } else {
      (predicted_positive ? m.fp : m.tn)++;
    }
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(probs.size());
  const std::size_t n_pos = m.tp + m.fn;
  const std::size_t n_neg = m.tn + m.fp;
  if (n_pos > 0) {
    m.sensitivity = static_cast<double>(m.tp) / static_cast<double>(n_pos);
    m.sensitivity_defined = true;
  }
  if (n_neg > 0) {
    m.specificity = static_cast<double>(m.tn) / static_cast<double>(n_neg);
    m.specificity_defined = true;
  }
  if (n_pos > 0 && n_neg > 0) {
    m.auc = rank_auc(probs, labels);
    m.auc_defined = true;
  }
  return m;
}

}  // namespace meshgcn
