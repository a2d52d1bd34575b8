#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/dataset.hpp"
#include "meshgcn/metrics.hpp"
#include "meshgcn/mlp.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/split.hpp"
#include "meshgcn/train.hpp"

namespace meshgcn {

enum class ModelKind { gcn, mlp };

/// Normalized, precision-cast tensors for one train/val/test assignment.
/// The normalizer is fit on the training scans only; padded entries stay 0.
template <typename T>
struct PreparedSplit {
  std::vector<Mat<T>> train_x, val_x, test_x;
  std::vector<int> train_y, val_y, test_y;
  MinMaxNormalizer<double> normalizer;
};

template <typename T>
PreparedSplit<T> prepare_split(const SyntheticDataset& ds, const SplitResult& split) {
  const Mat<double>* mask = &ds.mask;

  std::vector<Mat<double>> train_features;
  train_features.reserve(split.train.size());
  for (std::size_t i : split.train) train_features.push_back(ds.samples[i].features);

  PreparedSplit<T> out;
  out.normalizer = MinMaxNormalizer<double>::fit(train_features, mask);
  auto emit = [&](const std::vector<std::size_t>& idx, std::vector<Mat<T>>& xs,
                  std::vector<int>& ys) {
    xs.reserve(idx.size());
    ys.reserve(idx.size());
    for (std::size_t i : idx) {
      xs.push_back(out.normalizer.apply(ds.samples[i].features, mask).template cast<T>());
      ys.push_back(ds.samples[i].label);
    }
  };
  emit(split.train, out.train_x, out.train_y);
  emit(split.val, out.val_x, out.val_y);
  emit(split.test, out.test_x, out.test_y);
  return out;
}

struct TrialOutcome {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  MetricsResult metrics;
  SplitAudit audit;
  bool split_within_tolerance = true;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::size_t model_params = 0;
  std::size_t mlp_width = 0;       // 0 for the graph model
  bool mlp_within_5pct = true;
};

struct MetricSummary {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  std::size_t n = 0;  // trials where the metric was defined
};

struct CvResult {
  std::vector<TrialOutcome> trials;
  MetricSummary accuracy, sensitivity, specificity, auc;
};

/// Linear-interpolation quantile (the common "type 7" rule) on a sorted copy.
inline double quantile_type7(std::vector<double> v, double p) {
  detail::require_arg(!v.empty(), "quantile_type7: empty input");
  detail::require_arg(p >= 0.0 && p <= 1.0, "quantile_type7: p must be in [0,1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

inline MetricSummary summarize_metric(const std::vector<double>& values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  s.min = values[0];
  s.max = values[0];
  for (double v : values) {
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  s.q1 = quantile_type7(values, 0.25);
  s.median = quantile_type7(values, 0.5);
  s.q3 = quantile_type7(values, 0.75);
  return s;
}

struct CvConfig {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  ModelKind kind = ModelKind::gcn;
  std::size_t jobs = 1;
};

namespace detail {

template <typename T>
TrialOutcome run_cv_trial(const SyntheticDataset& ds, const CvConfig& cfg, std::size_t trial) {
  TrialOutcome out;
  out.trial = trial;
  out.seed = cfg.split.seed + trial;

  const SplitResult split = subject_level_split(ds.samples, cfg.split, out.seed);
  out.split_within_tolerance = split.within_tolerance;
  out.audit = audit_split(ds.samples, split);
  require_state(out.audit.subjects_disjoint,
                "monte_carlo_cv: subject leakage in trial " + std::to_string(trial));
  out.n_train = split.train.size();
  out.n_val = split.val.size();
  out.n_test = split.test.size();

  const PreparedSplit<T> prep = prepare_split<T>(ds, split);
  TrainConfig tc = cfg.train;
  tc.seed = out.seed;

  const std::size_t rows = ds.mask.rows();
  LevelStack<double> stack = ds.second_hierarchy
                                 ? build_level_stack(ds.hierarchies(), cfg.model.n_blocks,
                                                     cfg.model.lambda_max_mode)
                                 : build_level_stack(ds.hierarchy, cfg.model.n_blocks,
                                                     cfg.model.lambda_max_mode);
  TrainResult trained;
  std::vector<double> test_probs;
  if (cfg.kind == ModelKind::gcn) {
    ResGcnModel<T> model(cfg.model, stack.cast<T>(), ds.n_features);
    out.model_params = model.param_count();
    trained = train_model(model, prep.train_x, prep.train_y, prep.val_x, prep.val_y, tc);
    test_probs = predict_probs(model, prep.test_x);
  } else {
    // Width chosen so the baseline's parameter count matches the graph
    // model it stands in for.
    ResGcnModel<double> reference(cfg.model, std::move(stack), ds.n_features);
    const std::size_t hidden_depth = cfg.model.n_blocks * 2 + 2;
    const MlpWidthPlan plan =
        solve_mlp_width(rows * ds.n_features, hidden_depth, reference.param_count());
    MlpModel<T> model(rows, ds.n_features, hidden_depth, plan.width);
    out.model_params = model.param_count();
    out.mlp_width = plan.width;
    out.mlp_within_5pct = plan.within_5pct;
    trained = train_model(model, prep.train_x, prep.train_y, prep.val_x, prep.val_y, tc);
    test_probs = predict_probs(model, prep.test_x);
  }
  out.best_epoch = trained.best_epoch;
  out.best_val_accuracy = trained.best_val_accuracy;
  out.metrics = compute_metrics(test_probs, prep.test_y);
  return out;
}

}  // namespace detail

/// Repeated random resampling: per trial a fresh subject-level split, fresh
/// initialization, training, and test-set evaluation, all seeded by
/// base seed + trial index. Trials are independent, so the optional thread
/// pool changes wall time only, never results.
inline CvResult monte_carlo_cv(const SyntheticDataset& ds, const CvConfig& cfg) {
  cfg.model.validate();
  cfg.train.validate();
  cfg.split.validate();
  const std::size_t n_trials = cfg.split.n_trials;
  std::vector<TrialOutcome> outcomes(n_trials);

  auto run_one = [&](std::size_t t) {
    outcomes[t] = cfg.model.precision == Precision::f64
                      ? detail::run_cv_trial<double>(ds, cfg, t)
                      : detail::run_cv_trial<float>(ds, cfg, t);
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, n_trials));
  if (jobs == 1) {
    for (std::size_t t = 0; t < n_trials; ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= n_trials) return;
          try {
            run_one(t);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  CvResult result;
  result.trials = std::move(outcomes);
  std::vector<double> acc, sens, spec, auc;
  for (const auto& t : result.trials) {
    acc.push_back(t.metrics.accuracy);
    if (t.metrics.sensitivity_defined) sens.push_back(t.metrics.sensitivity);
    if (t.metrics.specificity_defined) spec.push_back(t.metrics.specificity);
    if (t.metrics.auc_defined) auc.push_back(t.metrics.auc);
  }
  result.accuracy = summarize_metric(acc);
  if (!sens.empty()) result.sensitivity = summarize_metric(sens);
  if (!spec.empty()) result.specificity = summarize_metric(spec);
  if (!auc.empty()) result.auc = summarize_metric(auc);
  return result;
}

inline void write_trials_csv(const CvResult& r, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "write_trials_csv: cannot open " + path);
  out << "trial,seed,accuracy,sensitivity,specificity,auc,n_train,n_val,n_test,"
         "best_epoch,split_within_tolerance,subjects_disjoint\n";
  for (const auto& t : r.trials) {
    out << t.trial << ',' << t.seed << ',' << format_double(t.metrics.accuracy) << ','
        << (t.metrics.sensitivity_defined ? format_double(t.metrics.sensitivity) : "undefined")
        << ','
        << (t.metrics.specificity_defined ? format_double(t.metrics.specificity) : "undefined")
        << ',' << (t.metrics.auc_defined ? format_double(t.metrics.auc) : "undefined") << ','
        << t.n_train << ',' << t.n_val << ',' << t.n_test << ',' << t.best_epoch << ','
        << (t.split_within_tolerance ? 1 : 0) << ',' << (t.audit.subjects_disjoint ? 1 : 0)
        << '\n';
  }
  detail::require_state(out.good(), "write_trials_csv: write failed");
}

inline void write_summary_csv(const CvResult& r, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "write_summary_csv: cannot open " + path);
  out << "metric,n,mean,std,min,q1,median,q3,max\n";
  auto row = [&](const char* name, const MetricSummary& s) {
    out << name << ',' << s.n << ',' << format_double(s.mean) << ',' << format_double(s.stddev)
        << ',' << format_double(s.min) << ',' << format_double(s.q1) << ','
        << format_double(s.median) << ',' << format_double(s.q3) << ',' << format_double(s.max)
        << '\n';
  };
  row("accuracy", r.accuracy);
  row("sensitivity", r.sensitivity);
  row("specificity", r.specificity);
  row("auc", r.auc);
  detail::require_state(out.good(), "write_summary_csv: write failed");
}

}  // namespace meshgcn
