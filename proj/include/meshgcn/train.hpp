#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "meshgcn/adam.hpp"
#include "meshgcn/core.hpp"
#include "meshgcn/layers.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double lr = 5e-4;
  double lr_decay = 0.999;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require_arg(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require_arg(lr > 0.0, "TrainConfig: lr must be positive");
    detail::require_arg(lr_decay > 0.0 && lr_decay <= 1.0,
                        "TrainConfig: lr_decay must be in (0, 1]");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::string init_rng_state;     // generator states when training finished
  std::string shuffle_rng_state;
};

/// Final-step optimizer moments, captured for checkpoints when requested.
template <typename T>
struct OptimizerState {
  std::size_t t = 0;
  std::vector<std::vector<T>> m, v;
};

/// Values of every parameter and state tensor, for best-epoch restore.
template <typename T>
struct ParamSnapshot {
  std::vector<std::vector<T>> values;
  std::vector<std::vector<T>> state_values;

  template <typename Model>
  static ParamSnapshot capture(Model& model) {
    ParamSnapshot snap;
    for (const auto& r : model.tensors()) snap.values.push_back(r.value->data());
    for (const auto& r : model.state_tensors()) snap.state_values.push_back(r.value->data());
    return snap;
  }

  template <typename Model>
  void restore(Model& model) const {
    detail::require_arg(values.size() == model.tensors().size() &&
                            state_values.size() == model.state_tensors().size(),
                        "ParamSnapshot::restore: tensor count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      detail::require_arg(values[i].size() == model.tensors()[i].value->size(),
                          "ParamSnapshot::restore: size mismatch");
      model.tensors()[i].value->data() = values[i];
    }
    for (std::size_t i = 0; i < state_values.size(); ++i) {
      model.state_tensors()[i].value->data() = state_values[i];
    }
  }
};

/// Positive-class probabilities in inference mode, chunked to bound memory.
template <typename Model, typename T = typename Model::value_type>
std::vector<double> predict_probs(Model& model, const std::vector<Mat<T>>& xs,
                                  std::size_t chunk = 64) {
  std::vector<double> probs;
  probs.reserve(xs.size());
  for (std::size_t start = 0; start < xs.size(); start += chunk) {
    const std::size_t end = std::min(xs.size(), start + chunk);
    std::vector<Mat<T>> slice(xs.begin() + static_cast<std::ptrdiff_t>(start),
                              xs.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<Mat<T>> logits = model.forward(slice, false);
    for (const auto& z : logits) {
      const double z0 = static_cast<double>(z(0, 0));
      const double z1 = static_cast<double>(z(0, 1));
      const double zmax = std::max(z0, z1);
      const double e0 = std::exp(z0 - zmax);
      const double e1 = std::exp(z1 - zmax);
      probs.push_back(e1 / (e0 + e1));
    }
  }
  return probs;
}

inline double accuracy_at_half(const std::vector<double>& probs, const std::vector<int>& labels) {
  detail::require_arg(!probs.empty() && probs.size() == labels.size(),
                      "accuracy_at_half: size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    hits += (probs[i] >= 0.5 ? 1 : 0) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

/// Trains in place: deterministic init and shuffles from the config seed,
/// per-epoch learning rate lr * decay^epoch, and best-validation-accuracy
/// parameter selection (earliest best wins; the winning snapshot is
/// restored into the model before returning).
template <typename Model, typename T = typename Model::value_type>
TrainResult train_model(Model& model, const std::vector<Mat<T>>& train_x,
                        const std::vector<int>& train_y, const std::vector<Mat<T>>& val_x,
                        const std::vector<int>& val_y, const TrainConfig& tc,
                        OptimizerState<T>* opt_out = nullptr) {
  tc.validate();
  detail::require_arg(train_x.size() == train_y.size() && val_x.size() == val_y.size(),
                      "train_model: features/labels size mismatch");
  detail::require_arg(!train_x.empty() && !val_x.empty(), "train_model: empty split");

  Rng init_rng(mix_seed(tc.seed, 0x696e6974));    // "init"
  Rng shuffle_rng(mix_seed(tc.seed, 0x73687566)); // "shuf"
  model.init(init_rng);
  Adam<T> adam(model.tensors(), tc.beta1, tc.beta2, tc.adam_eps);

  TrainResult result;
  if (tc.epochs == 0) {
    result.init_rng_state = init_rng.state();
    result.shuffle_rng_state = shuffle_rng.state();
    return result;
  }
  detail::require_arg(train_x.size() >= 2, "train_model: need at least 2 training samples");

  ParamSnapshot<T> best = ParamSnapshot<T>::capture(model);
  double best_acc = -1.0;
  std::size_t best_epoch = 0;

  std::vector<std::size_t> order(train_x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr_t = tc.lr * std::pow(tc.lr_decay, static_cast<double>(epoch));
    shuffle_rng.shuffle(order);

    // Batch boundaries; a trailing single sample joins the previous batch
    // so train-mode batch normalization always sees at least two samples.
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s < order.size(); s += tc.batch_size) starts.push_back(s);
    if (starts.size() >= 2 && order.size() - starts.back() < 2) starts.pop_back();

    double loss_sum = 0.0;
    std::size_t hit_sum = 0;
    for (std::size_t bi = 0; bi < starts.size(); ++bi) {
      const std::size_t lo = starts[bi];
      const std::size_t hi = bi + 1 < starts.size() ? starts[bi + 1] : order.size();
      std::vector<Mat<T>> bx;
      std::vector<int> by;
      bx.reserve(hi - lo);
      for (std::size_t s = lo; s < hi; ++s) {
        bx.push_back(train_x[order[s]]);
        by.push_back(train_y[order[s]]);
      }
      model.zero_grad();
      std::vector<Mat<T>> logits = model.forward(bx, true);
      HeadResult<T> head = softmax_bce_head(logits, by);
      detail::require_state(std::isfinite(head.loss),
                            "train_model: nonfinite loss at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(bi));
      model.backward(head.d_logits);
      adam.step(lr_t);
      loss_sum += head.loss * static_cast<double>(by.size());
      for (std::size_t s = 0; s < by.size(); ++s) {
        hit_sum += (head.prob_positive[s] >= 0.5 ? 1 : 0) == by[s];
      }
    }

    const std::vector<double> val_probs = predict_probs(model, val_x);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_t;
    stats.train_loss = loss_sum / static_cast<double>(train_x.size());
    stats.train_acc = static_cast<double>(hit_sum) / static_cast<double>(train_x.size());
    stats.val_loss = bce_loss(val_probs, val_y);
    stats.val_acc = accuracy_at_half(val_probs, val_y);
    result.history.push_back(stats);

    if (stats.val_acc > best_acc) {
      best_acc = stats.val_acc;
      best_epoch = epoch;
      best = ParamSnapshot<T>::capture(model);
    }
  }

  best.restore(model);
  result.best_epoch = best_epoch;
  result.best_val_accuracy = best_acc;
  result.init_rng_state = init_rng.state();
  result.shuffle_rng_state = shuffle_rng.state();
  if (opt_out) {
    // Final-step moments: the parameters were rolled back to the best
    // epoch, but the optimizer trajectory itself ends at the last step.
    opt_out->t = adam.t();
    opt_out->m.clear();
    opt_out->v.clear();
    for (const auto& m : adam.first_moments()) opt_out->m.push_back(m.data());
    for (const auto& v : adam.second_moments()) opt_out->v.push_back(v.data());
  }
  return result;
}

inline void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "write_history_csv: cannot open " + path);
  out << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : history) {
    out << e.epoch << "," << format_double(e.lr) << "," << format_double(e.train_loss) << ","
        << format_double(e.train_acc) << "," << format_double(e.val_loss) << ","
        << format_double(e.val_acc) << "\n";
  }
  detail::require_state(out.good(), "write_history_csv: write failed for " + path);
}

}  // namespace meshgcn
