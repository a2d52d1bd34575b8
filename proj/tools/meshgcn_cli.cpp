// Command-line front end: dataset generation, hierarchy construction,
// training, evaluation, Monte Carlo cross-validation, activation-map export,
// and the gradient validation suite. Exit codes: 0 success, 1 validation
// failure, 2 I/O or configuration error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "meshgcn/checkpoint.hpp"
#include "meshgcn/cv.hpp"
#include "meshgcn/dataset.hpp"
#include "meshgcn/explain.hpp"
#include "meshgcn/gradcheck.hpp"
#include "meshgcn/metrics.hpp"
#include "meshgcn/split.hpp"

namespace {

using nlohmann::ordered_json;
using namespace meshgcn;

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kIoConfigError = 2;

ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open " + path);
  return ordered_json::parse(in);
}

// Layered configuration: library defaults, then the optional config file
// section, then any flags the user actually passed.
ordered_json section_or_empty(const std::optional<ordered_json>& cfg, const char* key) {
  if (cfg && cfg->contains(key)) return cfg->at(key);
  return ordered_json::object();
}

struct SplitFlags {
  double test_fraction = 0.0;
  double val_fraction = 0.0;
  std::size_t n_trials = 0;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--test_fraction", test_fraction, "Subject fraction held out for testing");
    cmd->add_option("--val_fraction_of_remaining", val_fraction,
                    "Fraction of the remaining subjects used for validation");
    cmd->add_option("--n_trials", n_trials, "Number of Monte Carlo trials");
  }

  SplitSpec resolve(const CLI::App* cmd, const ordered_json& file_section) const {
    SplitSpec spec;
    ordered_json base;
    base["test_fraction"] = spec.test_fraction;
    base["val_fraction_of_remaining"] = spec.val_fraction_of_remaining;
    base["n_trials"] = spec.n_trials;
    base["seed"] = spec.seed;
    base.update(file_section);
    spec.test_fraction = base.at("test_fraction").get<double>();
    spec.val_fraction_of_remaining = base.at("val_fraction_of_remaining").get<double>();
    spec.n_trials = base.at("n_trials").get<std::size_t>();
    spec.seed = base.at("seed").get<std::uint64_t>();
    if (cmd->count("--test_fraction")) spec.test_fraction = test_fraction;
    if (cmd->count("--val_fraction_of_remaining")) spec.val_fraction_of_remaining = val_fraction;
    if (cmd->count("--n_trials")) spec.n_trials = n_trials;
    return spec;
  }
};

struct ModelFlags {
  std::size_t kernels_per_conv = 0;
  std::size_t cheb_order = 0;
  std::size_t pool_size = 0;
  std::size_t n_blocks = 0;
  std::size_t fc_units = 0;
  std::size_t post_resblock_units = 0;
  bool bias_enabled = true;
  bool bias_flag_given = false;
  std::string lambda_max_mode;
  std::string precision;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--kernels_per_conv", kernels_per_conv, "Feature maps per convolution");
    cmd->add_option("--cheb_order", cheb_order, "Chebyshev polynomial order K");
    cmd->add_option("--pool_size", pool_size, "Pooling factor (the binary tree fixes 2)");
    cmd->add_option("--n_blocks", n_blocks, "Residual blocks before the post block");
    cmd->add_option("--fc_units", fc_units, "Units entering the fully connected layer");
    cmd->add_option("--post_resblock_units", post_resblock_units,
                    "Channels of the post residual block");
    cmd->add_flag("--bias_enabled,!--no-bias_enabled", bias_enabled,
                  "Convolution bias terms")
        ->each([this](const std::string&) { bias_flag_given = true; });
    cmd->add_option("--lambda_max_mode", lambda_max_mode, "Spectrum bound: computed or fixed2")
        ->check(CLI::IsMember({"computed", "fixed2"}));
    cmd->add_option("--precision", precision, "Floating point width: f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
  }

  ModelConfig resolve(const CLI::App* cmd, const ordered_json& file_section) const {
    ordered_json base = model_config_to_json(ModelConfig{});
    base.update(file_section);
    ModelConfig mc = model_config_from_json(base);
    if (cmd->count("--kernels_per_conv")) mc.kernels_per_conv = kernels_per_conv;
    if (cmd->count("--cheb_order")) mc.cheb_order = cheb_order;
    if (cmd->count("--pool_size")) mc.pool_size = pool_size;
    if (cmd->count("--n_blocks")) mc.n_blocks = n_blocks;
    if (cmd->count("--fc_units")) mc.fc_units = fc_units;
    if (cmd->count("--post_resblock_units")) mc.post_resblock_units = post_resblock_units;
    if (bias_flag_given) mc.bias_enabled = bias_enabled;
    if (cmd->count("--lambda_max_mode")) {
      mc.lambda_max_mode =
          lambda_max_mode == "fixed2" ? LambdaMaxMode::fixed2 : LambdaMaxMode::computed;
    }
    if (cmd->count("--precision")) {
      mc.precision = precision == "f64" ? Precision::f64 : Precision::f32;
    }
    return mc;
  }
};

struct TrainFlags {
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  double lr = 0.0;
  double lr_decay = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double adam_eps = 0.0;
  std::uint64_t seed = 0;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--batch_size", batch_size, "Mini-batch size");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--lr_decay", lr_decay, "Per-epoch learning rate decay");
    cmd->add_option("--beta1", beta1, "Adam first-moment decay");
    cmd->add_option("--beta2", beta2, "Adam second-moment decay");
    cmd->add_option("--adam_eps", adam_eps, "Adam epsilon");
  }

  TrainConfig resolve(const CLI::App* cmd, const ordered_json& file_section) const {
    ordered_json base = train_config_to_json(TrainConfig{});
    base.update(file_section);
    TrainConfig tc = train_config_from_json(base);
    if (cmd->count("--batch_size")) tc.batch_size = batch_size;
    if (cmd->count("--epochs")) tc.epochs = epochs;
    if (cmd->count("--lr")) tc.lr = lr;
    if (cmd->count("--lr_decay")) tc.lr_decay = lr_decay;
    if (cmd->count("--beta1")) tc.beta1 = beta1;
    if (cmd->count("--beta2")) tc.beta2 = beta2;
    if (cmd->count("--adam_eps")) tc.adam_eps = adam_eps;
    return tc;
  }
};

LevelStack<double> dataset_level_stack(const SyntheticDataset& ds, const ModelConfig& mc) {
  return build_level_stack(ds.hierarchies(), mc.n_blocks, mc.lambda_max_mode);
}

std::string metrics_to_text(const MetricsResult& m) {
  ordered_json j;
  j["accuracy"] = m.accuracy;
  j["sensitivity"] = m.sensitivity_defined ? ordered_json(m.sensitivity) : ordered_json();
  j["specificity"] = m.specificity_defined ? ordered_json(m.specificity) : ordered_json();
  j["auc"] = m.auc_defined ? ordered_json(m.auc) : ordered_json();
  j["tp"] = m.tp;
  j["tn"] = m.tn;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string out_dir;
  std::string params_path;
  std::size_t n_subjects = 0;
  std::size_t scans_per_subject = 0;
  int subdivisions = -1;
  double radius_mm = -1.0;
  double sigma = -1.0;
  double stop_distance_mm = -1.0;
  std::size_t max_levels = 0;
  double patch_radius_mm = -1.0;
  double patch_depth_mm = -1.0;
  std::string center_mode;
  std::size_t identity_bumps = 0;
  double identity_bump_radius_mm = -1.0;
  double identity_bump_depth_mm = -1.0;
  double jitter_mm = -1.0;
  bool two_structure = false;
  std::uint64_t seed = 0;
};

int run_generate(const CLI::App* cmd, const GenerateArgs& a) {
  ordered_json base = generator_params_to_json(GeneratorParams{});
  if (!a.params_path.empty()) base.update(read_json_file(a.params_path));
  GeneratorParams p = generator_params_from_json(base);
  if (cmd->count("--n_subjects")) p.n_subjects = a.n_subjects;
  if (cmd->count("--scans_per_subject")) p.scans_per_subject = a.scans_per_subject;
  if (cmd->count("--subdivisions")) p.subdivisions = a.subdivisions;
  if (cmd->count("--radius_mm")) p.radius_mm = a.radius_mm;
  if (cmd->count("--sigma")) p.sigma = a.sigma;
  if (cmd->count("--stop_distance_mm")) p.stop_distance_mm = a.stop_distance_mm;
  if (cmd->count("--max_levels")) p.max_levels = a.max_levels;
  if (cmd->count("--patch_radius_mm")) p.patch_radius_mm = a.patch_radius_mm;
  if (cmd->count("--patch_depth_mm")) p.patch_depth_mm = a.patch_depth_mm;
  if (cmd->count("--center_mode")) {
    p.center_mode =
        a.center_mode == "per_subject" ? PatchCenterMode::per_subject : PatchCenterMode::fixed;
  }
  if (cmd->count("--identity_bumps")) p.identity_bumps = a.identity_bumps;
  if (cmd->count("--identity_bump_radius_mm")) {
    p.identity_bump_radius_mm = a.identity_bump_radius_mm;
  }
  if (cmd->count("--identity_bump_depth_mm")) p.identity_bump_depth_mm = a.identity_bump_depth_mm;
  if (cmd->count("--jitter_mm")) p.jitter_mm = a.jitter_mm;
  if (cmd->count("--two_structure")) p.two_structure = a.two_structure;
  if (cmd->count("--seed")) p.seed = a.seed;

  const SyntheticDataset ds = generate_synthetic_dataset(p);
  save_dataset(ds, a.out_dir);
  std::printf("wrote %zu subjects, %zu scans, %zu mesh vertices, %zu tree levels, "
              "%zu features -> %s\n",
              ds.subjects.size(), ds.samples.size(), ds.base_mesh.n_vertices(),
              ds.hierarchy.levels.size(), ds.n_features, a.out_dir.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// hierarchy

struct HierarchyArgs {
  std::string mesh_path;
  std::string out_path;
  double sigma = 2.0;
  double stop_distance = 2.5;
  std::size_t max_levels = 6;
};

int run_hierarchy(const HierarchyArgs& a) {
  const std::filesystem::path mesh_path(a.mesh_path);
  TriangleMesh mesh;
  if (mesh_path.extension() == ".off") {
    mesh = load_off(a.mesh_path);
  } else if (mesh_path.extension() == ".obj") {
    mesh = load_obj(a.mesh_path);
  } else {
    std::fprintf(stderr, "hierarchy: unsupported mesh format '%s' (expected .off or .obj)\n",
                 mesh_path.extension().string().c_str());
    return kIoConfigError;
  }
  const MeshHierarchy h = build_hierarchy(mesh, a.sigma, a.stop_distance, a.max_levels);
  std::ofstream out(a.out_path);
  if (!out.good()) {
    std::fprintf(stderr, "hierarchy: cannot open %s\n", a.out_path.c_str());
    return kIoConfigError;
  }
  out << hierarchy_to_json(h).dump(2) << "\n";
  if (!out.good()) {
    std::fprintf(stderr, "hierarchy: write failed for %s\n", a.out_path.c_str());
    return kIoConfigError;
  }
  std::printf("depth %zu, partitions per level:", h.depth());
  for (const auto& lv : h.levels) std::printf(" %zu", lv.centers.size());
  std::printf("\n");
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    if (h.levels[l].avg_neighbor_distance) {
      std::printf("level %zu avg neighbor center distance %.6f\n", l,
                  *h.levels[l].avg_neighbor_distance);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// train

template <typename T>
int train_with(const SyntheticDataset& ds, const ModelConfig& mc, TrainConfig tc,
               const SplitSpec& spec, std::uint64_t split_seed, const std::string& out_path,
               const std::string& history_path) {
  const SplitResult split = subject_level_split(ds.samples, spec, split_seed);
  if (!split.within_tolerance) {
    std::fprintf(stderr,
                 "warning: no split within label tolerance after %zu attempts "
                 "(deviation %.4f); using the best attempt\n",
                 split.attempts, split.max_label_deviation);
  }
  const PreparedSplit<T> prep = prepare_split<T>(ds, split);
  LevelStack<double> stack = dataset_level_stack(ds, mc);
  ResGcnModel<T> model(mc, stack.template cast<T>(), ds.n_features);
  OptimizerState<T> opt;
  const TrainResult trained =
      train_model(model, prep.train_x, prep.train_y, prep.val_x, prep.val_y, tc, &opt);

  if (!history_path.empty()) write_history_csv(trained.history, history_path);

  CheckpointExtras extras;
  extras.train_config = tc;
  extras.normalizer = prep.normalizer;
  extras.init_rng_state = trained.init_rng_state;
  extras.shuffle_rng_state = trained.shuffle_rng_state;
  extras.best_epoch = trained.best_epoch;
  extras.best_val_accuracy = trained.best_val_accuracy;
  save_checkpoint(out_path, model, mc, &opt, &extras);

  const MetricsResult test = compute_metrics(predict_probs(model, prep.test_x), prep.test_y);
  std::printf("parameters %zu, best epoch %zu, best val accuracy %.4f\n", model.param_count(),
              trained.best_epoch, trained.best_val_accuracy);
  std::printf("held-out test metrics:\n%s\n", metrics_to_text(test).c_str());
  std::printf("checkpoint -> %s\n", out_path.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate / explain

struct EvalSets {
  std::vector<std::size_t> indices;
  std::string name;
};

EvalSets pick_eval_set(const SyntheticDataset& ds, const std::string& which,
                       const SplitSpec& spec, std::uint64_t split_seed) {
  EvalSets out;
  out.name = which;
  if (which == "all") {
    out.indices.resize(ds.samples.size());
    for (std::size_t i = 0; i < out.indices.size(); ++i) out.indices[i] = i;
    return out;
  }
  const SplitResult split = subject_level_split(ds.samples, spec, split_seed);
  if (which == "train") {
    out.indices = split.train;
  } else if (which == "val") {
    out.indices = split.val;
  } else {
    out.indices = split.test;
  }
  return out;
}

template <typename T>
int evaluate_with(const SyntheticDataset& ds, const ModelConfig& mc, const nlohmann::json& ckpt,
                  const EvalSets& set, const std::string& out_path) {
  LevelStack<double> stack = dataset_level_stack(ds, mc);
  ResGcnModel<T> model(mc, stack.template cast<T>(), ds.n_features);
  CheckpointExtras extras;
  load_checkpoint_into(ckpt, model, static_cast<OptimizerState<T>*>(nullptr), &extras);
  detail::require_state(extras.normalizer.has_value(),
                        "evaluate: checkpoint lacks the feature normalizer");
  std::vector<Mat<T>> xs;
  std::vector<int> ys;
  for (std::size_t i : set.indices) {
    xs.push_back(extras.normalizer->apply(ds.samples[i].features, &ds.mask).template cast<T>());
    ys.push_back(ds.samples[i].label);
  }
  const MetricsResult m = compute_metrics(predict_probs(model, xs), ys);
  const std::string text = metrics_to_text(m);
  std::printf("%zu scans in set '%s'\n%s\n", xs.size(), set.name.c_str(), text.c_str());
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    detail::require_state(out.good(), "evaluate: cannot open " + out_path);
    out << text << "\n";
    detail::require_state(out.good(), "evaluate: write failed for " + out_path);
  }
  return kOk;
}

template <typename T>
int explain_with(const SyntheticDataset& ds, const ModelConfig& mc, const nlohmann::json& ckpt,
                 const EvalSets& set, int class_id, bool normalize,
                 const std::string& out_path) {
  detail::require_arg(!ds.second_hierarchy.has_value(),
                      "explain: activation-map export supports single-structure datasets");
  LevelStack<double> stack = dataset_level_stack(ds, mc);
  ResGcnModel<T> model(mc, stack.template cast<T>(), ds.n_features);
  CheckpointExtras extras;
  load_checkpoint_into(ckpt, model, static_cast<OptimizerState<T>*>(nullptr), &extras);
  detail::require_state(extras.normalizer.has_value(),
                        "explain: checkpoint lacks the feature normalizer");
  std::vector<Mat<T>> xs;
  std::vector<int> ys;
  for (std::size_t i : set.indices) {
    xs.push_back(extras.normalizer->apply(ds.samples[i].features, &ds.mask).template cast<T>());
    ys.push_back(ds.samples[i].label);
  }
  const ClassActivationMap avg = average_tp_cam(model, xs, ys, class_id, ds.hierarchy);
  std::vector<double> per_vertex =
      partition_values_to_vertices(ds.hierarchy, *avg.finest_values, ds.hierarchy.finest());
  if (normalize) per_vertex = normalized_for_export(per_vertex);

  const std::filesystem::path out(out_path);
  if (out.extension() == ".ply") {
    export_cam_ply(ds.base_mesh, per_vertex, out_path);
  } else if (out.extension() == ".csv") {
    export_cam_csv(per_vertex, out_path);
  } else {
    std::fprintf(stderr, "explain: unsupported output format '%s' (expected .ply or .csv)\n",
                 out.extension().string().c_str());
    return kIoConfigError;
  }
  double total = 0.0, peak = 0.0;
  for (double v : per_vertex) {
    total += v;
    peak = std::max(peak, v);
  }
  std::printf("averaged class-%d map over set '%s': %zu vertices, mass %.6f, peak %.6f -> %s\n",
              class_id, set.name.c_str(), per_vertex.size(), total, peak, out_path.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// cv

int run_cv(const SyntheticDataset& ds, const CvConfig& cfg, bool audit_only,
           const std::string& trials_out, const std::string& summary_out) {
  if (audit_only) {
    bool all_ok = true;
    for (std::size_t trial = 0; trial < cfg.split.n_trials; ++trial) {
      const SplitResult r =
          subject_level_split(ds.samples, cfg.split, cfg.split.seed + trial);
      const SplitAudit audit = audit_split(ds.samples, r);
      const bool ok =
          audit.subjects_disjoint && audit.scans_cover_all && audit.labels_within_tolerance;
      all_ok = all_ok && ok;
      std::printf("trial %zu: subjects_disjoint=%s scans_cover_all=%s "
                  "max_label_deviation=%.4f within_tolerance=%s "
                  "(train/val/test = %zu/%zu/%zu)\n",
                  trial, audit.subjects_disjoint ? "yes" : "NO",
                  audit.scans_cover_all ? "yes" : "NO", audit.max_label_deviation,
                  audit.labels_within_tolerance ? "yes" : "NO", audit.n_train, audit.n_val,
                  audit.n_test);
    }
    std::printf("audit %s over %zu trials\n", all_ok ? "passed" : "FAILED",
                cfg.split.n_trials);
    return all_ok ? kOk : kValidationError;
  }

  const CvResult res = monte_carlo_cv(ds, cfg);
  const auto print_summary = [](const char* name, const MetricSummary& s) {
    if (s.n == 0) {
      std::printf("%-12s undefined in all trials\n", name);
      return;
    }
    std::printf("%-12s mean %.4f std %.4f min %.4f q1 %.4f median %.4f q3 %.4f max %.4f "
                "(n=%zu)\n",
                name, s.mean, s.stddev, s.min, s.q1, s.median, s.q3, s.max, s.n);
  };
  print_summary("accuracy", res.accuracy);
  print_summary("sensitivity", res.sensitivity);
  print_summary("specificity", res.specificity);
  print_summary("auc", res.auc);
  if (!res.trials.empty()) {
    std::printf("model parameters %zu", res.trials.front().model_params);
    if (res.trials.front().mlp_width > 0) {
      std::printf(" (baseline width %zu, within 5%% of target: %s)",
                  res.trials.front().mlp_width,
                  res.trials.front().mlp_within_5pct ? "yes" : "NO");
    }
    std::printf("\n");
  }
  if (!trials_out.empty()) write_trials_csv(res, trials_out);
  if (!summary_out.empty()) write_summary_csv(res, summary_out);
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int run_gradcheck(std::uint64_t seed, double layer_tol, double model_tol) {
  const std::vector<GradSuiteRow> rows = standard_gradient_suite(seed);
  bool all_ok = true;
  for (const auto& r : rows) {
    const double tol = r.layer_wise ? layer_tol : model_tol;
    const bool ok = r.report.pass(tol);
    all_ok = all_ok && ok;
    std::printf("%-20s max relative error %.3e (tolerance %.0e, %zu coordinates, worst %s) "
                "%s\n",
                r.name.c_str(), r.report.max_rel_error, tol, r.report.n_coordinates,
                r.report.worst_tensor.c_str(), ok ? "ok" : "FAILED");
  }
  std::printf("gradient suite %s\n", all_ok ? "passed" : "FAILED");
  return all_ok ? kOk : kValidationError;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoConfigError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidationError;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::fprintf(stderr, "error: %s\n", what.c_str());
    const bool io = what.find("cannot open") != std::string::npos ||
                    what.find("write failed") != std::string::npos ||
                    what.find("malformed") != std::string::npos ||
                    what.find("truncated") != std::string::npos ||
                    what.find("unknown") != std::string::npos;
    return io ? kIoConfigError : kValidationError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual spectral graph convolutional networks on triangulated surface "
               "meshes: data generation, training, evaluation, and explanation"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON file with optional 'model', 'train', and 'split' sections; "
                 "flags override file values")
      ->expected(1);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Create a synthetic mesh dataset");
  GenerateArgs gen;
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--params", gen.params_path, "Generator parameter JSON file");
  gen_cmd->add_option("--n_subjects", gen.n_subjects, "Subjects (even, half per class)");
  gen_cmd->add_option("--scans_per_subject", gen.scans_per_subject, "Scans per subject");
  gen_cmd->add_option("--subdivisions", gen.subdivisions, "Icosphere subdivision depth");
  gen_cmd->add_option("--radius_mm", gen.radius_mm, "Sphere radius in mm");
  gen_cmd->add_option("--sigma", gen.sigma, "Gaussian kernel width for edge weights");
  gen_cmd->add_option("--stop_distance_mm", gen.stop_distance_mm,
                      "Coarsening stop distance in mm");
  gen_cmd->add_option("--max_levels", gen.max_levels, "Maximum partition tree depth");
  gen_cmd->add_option("--patch_radius_mm", gen.patch_radius_mm, "Deformation patch radius");
  gen_cmd->add_option("--patch_depth_mm", gen.patch_depth_mm, "Deformation patch depth");
  gen_cmd->add_option("--center_mode", gen.center_mode, "Patch center: fixed or per_subject")
      ->check(CLI::IsMember({"fixed", "per_subject"}));
  gen_cmd->add_option("--identity_bumps", gen.identity_bumps, "Identity bumps per subject");
  gen_cmd->add_option("--identity_bump_radius_mm", gen.identity_bump_radius_mm,
                      "Identity bump radius");
  gen_cmd->add_option("--identity_bump_depth_mm", gen.identity_bump_depth_mm,
                      "Identity bump depth");
  gen_cmd->add_option("--jitter_mm", gen.jitter_mm, "Per-scan radial jitter");
  gen_cmd->add_flag("--two_structure", gen.two_structure,
                    "Compose two structures block-diagonally");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  // hierarchy
  auto* hier_cmd = app.add_subcommand("hierarchy", "Build and serialize a partition tree");
  HierarchyArgs hier;
  hier_cmd->add_option("--mesh", hier.mesh_path, "Input mesh (.off or .obj)")->required();
  hier_cmd->add_option("--out", hier.out_path, "Output hierarchy JSON")->required();
  hier_cmd->add_option("--sigma", hier.sigma, "Gaussian kernel width");
  hier_cmd->add_option("--stop_distance", hier.stop_distance, "Coarsening stop distance");
  hier_cmd->add_option("--max_levels", hier.max_levels, "Maximum tree depth");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on one subject-level split");
  std::string train_data, train_out, train_history;
  std::uint64_t train_split_seed = 1;
  ModelFlags train_model_flags;
  TrainFlags train_train_flags;
  SplitFlags train_split_flags;
  train_cmd->add_option("--data", train_data, "Dataset manifest JSON")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--history", train_history, "Per-epoch metrics CSV");
  train_cmd->add_option("--split_seed", train_split_seed, "Seed of the single split");
  train_cmd->add_option("--seed", train_train_flags.seed, "Training seed");
  train_model_flags.add_options(train_cmd);
  train_train_flags.add_options(train_cmd);
  train_split_flags.add_options(train_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  std::string eval_data, eval_ckpt, eval_out, eval_set = "test";
  std::uint64_t eval_split_seed = 1;
  SplitFlags eval_split_flags;
  eval_cmd->add_option("--data", eval_data, "Dataset manifest JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--set", eval_set, "Evaluation set: test, val, train, or all")
      ->check(CLI::IsMember({"test", "val", "train", "all"}));
  eval_cmd->add_option("--split_seed", eval_split_seed,
                       "Split seed (match the one used at training time)");
  eval_cmd->add_option("--out", eval_out, "Write metrics JSON here as well");
  eval_split_flags.add_options(eval_cmd);

  // cv
  auto* cv_cmd = app.add_subcommand("cv", "Monte Carlo cross-validation");
  std::string cv_data, cv_trials_out, cv_summary_out, cv_kind = "gcn";
  std::size_t cv_jobs = 1;
  bool cv_audit_only = false;
  ModelFlags cv_model_flags;
  TrainFlags cv_train_flags;
  SplitFlags cv_split_flags;
  std::uint64_t cv_seed = 0;
  cv_cmd->add_option("--data", cv_data, "Dataset manifest JSON")->required();
  cv_cmd->add_option("--model", cv_kind, "Classifier: gcn or mlp baseline")
      ->check(CLI::IsMember({"gcn", "mlp"}));
  cv_cmd->add_option("--jobs", cv_jobs, "Worker threads (results are identical)");
  cv_cmd->add_flag("--audit-only", cv_audit_only, "Audit the splits without training");
  cv_cmd->add_option("--trials_out", cv_trials_out, "Per-trial metrics CSV");
  cv_cmd->add_option("--summary_out", cv_summary_out, "Aggregate metrics CSV");
  cv_cmd->add_option("--seed", cv_seed, "Base split seed (trial t uses seed + t)");
  cv_model_flags.add_options(cv_cmd);
  cv_train_flags.add_options(cv_cmd);
  cv_split_flags.add_options(cv_cmd);

  // explain
  auto* explain_cmd =
      app.add_subcommand("explain", "Export the averaged true-positive activation map");
  std::string ex_data, ex_ckpt, ex_out, ex_set = "test";
  std::uint64_t ex_split_seed = 1;
  int ex_class = 1;
  bool ex_normalize = false;
  SplitFlags ex_split_flags;
  explain_cmd->add_option("--data", ex_data, "Dataset manifest JSON")->required();
  explain_cmd->add_option("--checkpoint", ex_ckpt, "Checkpoint path")->required();
  explain_cmd->add_option("--out", ex_out, "Output map (.csv or .ply)")->required();
  explain_cmd->add_option("--class_id", ex_class, "Class whose map to export (0 or 1)")
      ->check(CLI::Range(0, 1));
  explain_cmd->add_option("--set", ex_set, "Sample set: test, val, train, or all")
      ->check(CLI::IsMember({"test", "val", "train", "all"}));
  explain_cmd->add_option("--split_seed", ex_split_seed,
                          "Split seed (match the one used at training time)");
  explain_cmd->add_flag("--normalize", ex_normalize, "Scale the map to peak 1");
  ex_split_flags.add_options(explain_cmd);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t grad_seed = 102;
  double grad_layer_tol = 1e-6, grad_model_tol = 1e-5;
  grad_cmd->add_option("--seed", grad_seed, "Random seed for the suite");
  grad_cmd->add_option("--layer_tol", grad_layer_tol, "Layer-wise tolerance");
  grad_cmd->add_option("--model_tol", grad_model_tol, "End-to-end tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kIoConfigError;
  }

  std::optional<ordered_json> config;
  if (!config_path.empty()) {
    const int rc = guarded([&] {
      config = read_json_file(config_path);
      return kOk;
    });
    if (rc != kOk) return rc;
  }

  if (gen_cmd->parsed()) {
    return guarded([&] { return run_generate(gen_cmd, gen); });
  }
  if (hier_cmd->parsed()) {
    return guarded([&] { return run_hierarchy(hier); });
  }
  if (train_cmd->parsed()) {
    return guarded([&] {
      const SyntheticDataset ds = load_dataset(train_data);
      const ModelConfig mc = train_model_flags.resolve(train_cmd, section_or_empty(config, "model"));
      TrainConfig tc = train_train_flags.resolve(train_cmd, section_or_empty(config, "train"));
      if (train_cmd->count("--seed")) tc.seed = train_train_flags.seed;
      const SplitSpec spec = train_split_flags.resolve(train_cmd, section_or_empty(config, "split"));
      return mc.precision == Precision::f64
                 ? train_with<double>(ds, mc, tc, spec, train_split_seed, train_out,
                                      train_history)
                 : train_with<float>(ds, mc, tc, spec, train_split_seed, train_out,
                                     train_history);
    });
  }
  if (eval_cmd->parsed()) {
    return guarded([&] {
      const SyntheticDataset ds = load_dataset(eval_data);
      const nlohmann::json ckpt = read_checkpoint_json(eval_ckpt);
      const ModelConfig mc = model_config_from_json(ckpt.at("model_config"));
      const SplitSpec spec = eval_split_flags.resolve(eval_cmd, section_or_empty(config, "split"));
      const EvalSets set = pick_eval_set(ds, eval_set, spec, eval_split_seed);
      return mc.precision == Precision::f64
                 ? evaluate_with<double>(ds, mc, ckpt, set, eval_out)
                 : evaluate_with<float>(ds, mc, ckpt, set, eval_out);
    });
  }
  if (cv_cmd->parsed()) {
    return guarded([&] {
      const SyntheticDataset ds = load_dataset(cv_data);
      CvConfig cfg;
      cfg.model = cv_model_flags.resolve(cv_cmd, section_or_empty(config, "model"));
      cfg.train = cv_train_flags.resolve(cv_cmd, section_or_empty(config, "train"));
      cfg.split = cv_split_flags.resolve(cv_cmd, section_or_empty(config, "split"));
      if (cv_cmd->count("--seed")) cfg.split.seed = cv_seed;
      cfg.kind = cv_kind == "mlp" ? ModelKind::mlp : ModelKind::gcn;
      cfg.jobs = cv_jobs;
      return run_cv(ds, cfg, cv_audit_only, cv_trials_out, cv_summary_out);
    });
  }
  if (explain_cmd->parsed()) {
    return guarded([&] {
      const SyntheticDataset ds = load_dataset(ex_data);
      const nlohmann::json ckpt = read_checkpoint_json(ex_ckpt);
      const ModelConfig mc = model_config_from_json(ckpt.at("model_config"));
      const SplitSpec spec = ex_split_flags.resolve(explain_cmd, section_or_empty(config, "split"));
      const EvalSets set = pick_eval_set(ds, ex_set, spec, ex_split_seed);
      return mc.precision == Precision::f64
                 ? explain_with<double>(ds, mc, ckpt, set, ex_class, ex_normalize, ex_out)
                 : explain_with<float>(ds, mc, ckpt, set, ex_class, ex_normalize, ex_out);
    });
  }
  return guarded([&] { return run_gradcheck(grad_seed, grad_layer_tol, grad_model_tol); });
}
