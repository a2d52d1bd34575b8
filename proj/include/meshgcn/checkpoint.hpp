#pragma once

#include <json.hpp>

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/layers.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/train.hpp"

namespace meshgcn {

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["kernels_per_conv"] = c.kernels_per_conv;
  j["cheb_order"] = c.cheb_order;
  j["pool_size"] = c.pool_size;
  j["n_blocks"] = c.n_blocks;
  j["fc_units"] = c.fc_units;
  j["post_resblock_units"] = c.post_resblock_units;
  j["bias_enabled"] = c.bias_enabled;
  j["lambda_max_mode"] = c.lambda_max_mode == LambdaMaxMode::computed ? "computed" : "fixed2";
  j["precision"] = c.precision == Precision::f32 ? "f32" : "f64";
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kernels_per_conv = j.value("kernels_per_conv", c.kernels_per_conv);
  c.cheb_order = j.value("cheb_order", c.cheb_order);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.fc_units = j.value("fc_units", c.fc_units);
  c.post_resblock_units = j.value("post_resblock_units", c.post_resblock_units);
  c.bias_enabled = j.value("bias_enabled", c.bias_enabled);
  const std::string lm = j.value("lambda_max_mode", "computed");
  detail::require_state(lm == "computed" || lm == "fixed2",
                        "model_config_from_json: unknown lambda_max_mode '" + lm + "'");
  c.lambda_max_mode = lm == "computed" ? LambdaMaxMode::computed : LambdaMaxMode::fixed2;
  const std::string prec = j.value("precision", "f32");
  detail::require_state(prec == "f32" || prec == "f64",
                        "model_config_from_json: unknown precision '" + prec + "'");
  c.precision = prec == "f32" ? Precision::f32 : Precision::f64;
  return c;
}

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["lr_decay"] = c.lr_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace detail {

template <typename T>
nlohmann::ordered_json tensor_to_json(const TensorRef<T>& ref) {
  nlohmann::ordered_json j;
  j["name"] = ref.name;
  j["rows"] = ref.value->rows();
  j["cols"] = ref.value->cols();
  // float -> double is exact, so every value round-trips bitwise.
  std::vector<double> values(ref.value->size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(ref.value->data()[i]);
  }
  j["values"] = values;
  return j;
}

template <typename T>
void tensor_from_json(const nlohmann::json& j, const TensorRef<T>& ref) {
  require_state(j.at("name").get<std::string>() == ref.name,
                "load_checkpoint: tensor order mismatch at '" + ref.name + "'");
  require_state(j.at("rows").get<std::size_t>() == ref.value->rows() &&
                    j.at("cols").get<std::size_t>() == ref.value->cols(),
                "load_checkpoint: shape mismatch for tensor '" + ref.name + "'");
  const auto& values = j.at("values");
  require_state(values.size() == ref.value->size(),
                "load_checkpoint: value count mismatch for tensor '" + ref.name + "'");
  for (std::size_t i = 0; i < ref.value->size(); ++i) {
    ref.value->data()[i] = static_cast<T>(values[i].get<double>());
  }
}

}  // namespace detail

/// Everything a checkpoint stores beside the tensors themselves.
struct CheckpointExtras {
  std::optional<TrainConfig> train_config;
  std::optional<MinMaxNormalizer<double>> normalizer;
  std::string init_rng_state;
  std::string shuffle_rng_state;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Versioned JSON container: config echo, named parameter and state tensors
/// with shapes and row-major values, optimizer moments, and RNG states.
/// Serialization is deterministic, so identical runs write identical bytes.
template <typename Model, typename T = typename Model::value_type>
void save_checkpoint(const std::string& path, Model& model, const ModelConfig& config,
                     const OptimizerState<T>* opt = nullptr,
                     const CheckpointExtras* extras = nullptr) {
  nlohmann::ordered_json j;
  j["format"] = "model-checkpoint/1";
  j["model_config"] = model_config_to_json(config);
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& ref : model.tensors()) j["tensors"].push_back(detail::tensor_to_json(ref));
  j["state_tensors"] = nlohmann::ordered_json::array();
  for (const auto& ref : model.state_tensors()) {
    j["state_tensors"].push_back(detail::tensor_to_json(ref));
  }
  if (opt) {
    nlohmann::ordered_json oj;
    oj["t"] = opt->t;
    oj["m"] = opt->m;
    oj["v"] = opt->v;
    j["optimizer"] = std::move(oj);
  } else {
    j["optimizer"] = nullptr;
  }
  if (extras) {
    if (extras->train_config) j["train_config"] = train_config_to_json(*extras->train_config);
    if (extras->normalizer) {
      j["normalizer"] = {{"min", extras->normalizer->min_v}, {"max", extras->normalizer->max_v}};
    }
    j["rng"] = {{"init", extras->init_rng_state}, {"shuffle", extras->shuffle_rng_state}};
    j["best_epoch"] = extras->best_epoch;
    j["best_val_accuracy"] = extras->best_val_accuracy;
  }
  std::ofstream out(path);
  detail::require_state(out.good(), "save_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
  detail::require_state(out.good(), "save_checkpoint: write failed for " + path);
}

/// Reads the config echo without instantiating a model, so callers can
/// construct one of the right shape first.
inline nlohmann::json read_checkpoint_json(const std::string& path) {
  std::ifstream in(path);
  detail::require_state(in.good(), "load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  detail::require_state(!in.fail(), "load_checkpoint: malformed JSON in " + path);
  detail::require_state(j.value("format", "") == "model-checkpoint/1",
                        "load_checkpoint: unknown checkpoint format");
  return j;
}

/// Restores tensors (and optionally optimizer moments and extras) into an
/// already-constructed model of matching shape.
template <typename Model, typename T = typename Model::value_type>
void load_checkpoint_into(const nlohmann::json& j, Model& model,
                          OptimizerState<T>* opt = nullptr,
                          CheckpointExtras* extras = nullptr) {
  const auto& tensors = j.at("tensors");
  detail::require_state(tensors.size() == model.tensors().size(),
                        "load_checkpoint: parameter tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    detail::tensor_from_json(tensors[i], model.tensors()[i]);
  }
  const auto& state = j.at("state_tensors");
  detail::require_state(state.size() == model.state_tensors().size(),
                        "load_checkpoint: state tensor count mismatch");
  for (std::size_t i = 0; i < state.size(); ++i) {
    detail::tensor_from_json(state[i], model.state_tensors()[i]);
  }
  if (opt) {
    detail::require_state(j.contains("optimizer") && !j.at("optimizer").is_null(),
                          "load_checkpoint: checkpoint has no optimizer state");
    const auto& oj = j.at("optimizer");
    opt->t = oj.at("t").get<std::size_t>();
    opt->m.clear();
    opt->v.clear();
    for (const auto& row : oj.at("m")) opt->m.push_back(row.get<std::vector<T>>());
    for (const auto& row : oj.at("v")) opt->v.push_back(row.get<std::vector<T>>());
  }
  if (extras) {
    if (j.contains("train_config")) extras->train_config = train_config_from_json(j.at("train_config"));
    if (j.contains("normalizer")) {
      MinMaxNormalizer<double> norm;
      norm.min_v = j.at("normalizer").at("min").get<std::vector<double>>();
      norm.max_v = j.at("normalizer").at("max").get<std::vector<double>>();
      extras->normalizer = std::move(norm);
    }
    if (j.contains("rng")) {
      extras->init_rng_state = j.at("rng").at("init").get<std::string>();
      extras->shuffle_rng_state = j.at("rng").at("shuffle").get<std::string>();
    }
    extras->best_epoch = j.value("best_epoch", std::size_t{0});
    extras->best_val_accuracy = j.value("best_val_accuracy", 0.0);
  }
}

}  // namespace meshgcn
