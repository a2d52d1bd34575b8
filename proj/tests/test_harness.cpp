#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "meshgcn/checkpoint.hpp"
#include "meshgcn/cv.hpp"
#include "meshgcn/dataset.hpp"
#include "meshgcn/gradcheck.hpp"
#include "meshgcn/metrics.hpp"
#include "meshgcn/mlp.hpp"
#include "meshgcn/split.hpp"

using namespace meshgcn;

namespace {

GeneratorParams small_params() {
  GeneratorParams p;
  p.n_subjects = 6;
  p.scans_per_subject = 2;
  p.subdivisions = 1;
  p.radius_mm = 20.0;
  p.stop_distance_mm = 1e-3;
  p.max_levels = 3;
  p.seed = 11;
  return p;
}

// Ten subjects so the default split fractions give every class at least one
// subject in each of train, validation, and test.
GeneratorParams cv_params() {
  GeneratorParams p = small_params();
  p.n_subjects = 10;
  return p;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Minimal scan records for split tests; features are irrelevant there.
std::vector<ScanSample> make_scans(std::size_t n_subjects, std::size_t scans_each) {
  std::vector<ScanSample> samples;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    for (std::size_t k = 0; k < scans_each; ++k) {
      ScanSample sample;
      sample.subject_id = "s" + std::to_string(s);
      sample.scan_id = "scan" + std::to_string(k);
      sample.label = static_cast<int>(s % 2);
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

}  // namespace

TEST(Generator, DeterministicAndBalanced) {
  const GeneratorParams p = small_params();
  const SyntheticDataset a = generate_synthetic_dataset(p);
  const SyntheticDataset b = generate_synthetic_dataset(p);

  ASSERT_EQ(a.subjects.size(), 6u);
  ASSERT_EQ(a.samples.size(), 12u);
  std::size_t positives = 0;
  for (const auto& s : a.subjects) positives += s.label == 1 ? 1 : 0;
  EXPECT_EQ(positives, 3u);

  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].subject_id, b.samples[i].subject_id);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
    EXPECT_EQ(a.samples[i].features.data(), b.samples[i].features.data());  // bitwise
  }

  GeneratorParams other = p;
  other.seed = 12;
  const SyntheticDataset c = generate_synthetic_dataset(other);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.samples.size() && !any_difference; ++i) {
    any_difference = a.samples[i].features.data() != c.samples[i].features.data();
  }
  EXPECT_TRUE(any_difference);
}

TEST(Generator, FixedCenterSharesOnePatch) {
  const SyntheticDataset ds = generate_synthetic_dataset(small_params());

  const std::size_t pole = [&] {
    std::size_t best = 0;
    for (std::size_t v = 1; v < ds.base_mesh.n_vertices(); ++v) {
      if (ds.base_mesh.vertices[v].z > ds.base_mesh.vertices[best].z) best = v;
    }
    return best;
  }();

  const std::vector<std::size_t>* shared = nullptr;
  for (const auto& s : ds.subjects) {
    EXPECT_EQ(s.patch_center, pole);
    if (s.label == 0) {
      EXPECT_TRUE(s.patch_vertices.empty());
    } else {
      EXPECT_FALSE(s.patch_vertices.empty());
      if (!shared) shared = &s.patch_vertices;
      EXPECT_EQ(s.patch_vertices, *shared);
    }
  }
  ASSERT_NE(shared, nullptr);
  EXPECT_EQ(ds.shared_patch_vertices(), *shared);

  // The patch respects its advertised arc radius.
  for (std::size_t v : *shared) {
    const Vec3& a = ds.base_mesh.vertices[v];
    const Vec3& b = ds.base_mesh.vertices[pole];
    const double cosine =
        std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    EXPECT_LT(ds.params.radius_mm * std::acos(cosine), ds.params.patch_radius_mm);
  }
}

TEST(Generator, PerSubjectCentersVary) {
  GeneratorParams p = small_params();
  p.n_subjects = 10;
  p.center_mode = PatchCenterMode::per_subject;
  const SyntheticDataset ds = generate_synthetic_dataset(p);

  std::set<std::size_t> positive_centers;
  for (const auto& s : ds.subjects) {
    if (s.label == 1) positive_centers.insert(s.patch_center);
  }
  EXPECT_GT(positive_centers.size(), 1u);
  EXPECT_THROW(ds.shared_patch_vertices(), std::runtime_error);
}

TEST(Generator, PositiveScansIndentedAtPatchCenter) {
  const SyntheticDataset ds = generate_synthetic_dataset(small_params());
  const std::size_t center = ds.subjects.front().patch_center;
  for (const auto& sample : ds.samples) {
    const double r = sample.positions[center].norm();
    if (sample.label == 1) {
      EXPECT_LT(r, 18.0);  // 4mm patch (scaled 0.9-1.1) minus bump/jitter slack
    } else {
      EXPECT_GT(r, 19.0);  // identity bumps are 0.4mm, jitter 0.05mm
      EXPECT_LT(r, 21.0);
    }
  }
}

TEST(Generator, TwoStructureBlockLayout) {
  GeneratorParams p = small_params();
  p.two_structure = true;
  const SyntheticDataset ds = generate_synthetic_dataset(p);

  ASSERT_TRUE(ds.second_hierarchy.has_value());
  const std::size_t leaves_a = ds.hierarchy.finest_level().members.size();
  const std::size_t leaves_b = ds.second_hierarchy->finest_level().members.size();
  EXPECT_EQ(ds.n_features, 9u);
  ASSERT_EQ(ds.mask.rows(), leaves_a + leaves_b);
  ASSERT_EQ(ds.mask.cols(), 9u);

  for (std::size_t r = 0; r < leaves_a + leaves_b; ++r) {
    for (std::size_t c = 0; c < 9; ++c) {
      const double expected = (r < leaves_a) == (c < 6) ? 1.0 : 0.0;
      EXPECT_EQ(ds.mask(r, c), expected) << "mask(" << r << "," << c << ")";
    }
  }

  for (const auto& sample : ds.samples) {
    ASSERT_EQ(sample.features.rows(), leaves_a + leaves_b);
    for (std::size_t r = 0; r < leaves_a + leaves_b; ++r) {
      for (std::size_t c = 0; c < 9; ++c) {
        if (ds.mask(r, c) == 0.0) {
          EXPECT_EQ(sample.features(r, c), 0.0);
        }
      }
    }
  }

  // The inner shell tracks the outer surface at 90% radius before jitter,
  // so its leaf means sit strictly inside.
  const auto& s0 = ds.samples.front();
  for (std::size_t p_i = 0; p_i < leaves_a; ++p_i) {
    const double outer = std::sqrt(s0.features(p_i, 0) * s0.features(p_i, 0) +
                                   s0.features(p_i, 1) * s0.features(p_i, 1) +
                                   s0.features(p_i, 2) * s0.features(p_i, 2));
    const double inner = std::sqrt(s0.features(p_i, 3) * s0.features(p_i, 3) +
                                   s0.features(p_i, 4) * s0.features(p_i, 4) +
                                   s0.features(p_i, 5) * s0.features(p_i, 5));
    EXPECT_LT(inner, outer);
  }
}

TEST(Generator, SaveLoadRoundTripBitwise) {
  const SyntheticDataset ds = generate_synthetic_dataset(small_params());
  const auto dir = temp_dir("meshgcn_test_dataset");
  save_dataset(ds, dir.string());
  const SyntheticDataset back = load_dataset((dir / "manifest.json").string());

  EXPECT_EQ(back.n_features, ds.n_features);
  EXPECT_EQ(back.mask.data(), ds.mask.data());
  ASSERT_EQ(back.subjects.size(), ds.subjects.size());
  for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
    EXPECT_EQ(back.subjects[s].subject_id, ds.subjects[s].subject_id);
    EXPECT_EQ(back.subjects[s].label, ds.subjects[s].label);
    EXPECT_EQ(back.subjects[s].patch_center, ds.subjects[s].patch_center);
    EXPECT_EQ(back.subjects[s].patch_vertices, ds.subjects[s].patch_vertices);
  }
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].subject_id, ds.samples[i].subject_id);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].features.data(), ds.samples[i].features.data());
  }
  std::filesystem::remove_all(dir);
}

TEST(Generator, ParameterValidation) {
  GeneratorParams odd = small_params();
  odd.n_subjects = 5;
  EXPECT_THROW(generate_synthetic_dataset(odd), std::invalid_argument);

  GeneratorParams deep = small_params();
  deep.patch_depth_mm = 25.0;
  EXPECT_THROW(generate_synthetic_dataset(deep), std::invalid_argument);
}

TEST(Split, TenBalancedSubjectsGiveOneTestSubjectPerClass) {
  const auto samples = make_scans(10, 1);
  SplitSpec spec;
  const SplitResult r = subject_level_split(samples, spec, 1);

  EXPECT_EQ(r.test.size(), 2u);
  EXPECT_EQ(r.val.size(), 2u);
  EXPECT_EQ(r.train.size(), 6u);
  int test_pos = 0;
  for (std::size_t i : r.test) test_pos += samples[i].label;
  EXPECT_EQ(test_pos, 1);
  EXPECT_TRUE(r.within_tolerance);
  EXPECT_DOUBLE_EQ(r.max_label_deviation, 0.0);
}

TEST(Split, ScansStayWithTheirSubject) {
  const auto samples = make_scans(6, 3);
  SplitSpec spec;
  spec.test_fraction = 0.34;            // 1 of 3 per class
  spec.val_fraction_of_remaining = 0.5; // 1 of remaining 2
  const SplitResult r = subject_level_split(samples, spec, 3);

  auto set_of = [&](const std::vector<std::size_t>& idx) {
    std::set<std::string> subjects;
    for (std::size_t i : idx) subjects.insert(samples[i].subject_id);
    return subjects;
  };
  const auto train = set_of(r.train), val = set_of(r.val), test = set_of(r.test);
  EXPECT_EQ(r.train.size(), train.size() * 3);
  EXPECT_EQ(r.val.size(), val.size() * 3);
  EXPECT_EQ(r.test.size(), test.size() * 3);

  const SplitAudit audit = audit_split(samples, r);
  EXPECT_TRUE(audit.subjects_disjoint);
  EXPECT_TRUE(audit.scans_cover_all);
  EXPECT_EQ(audit.n_train + audit.n_val + audit.n_test, samples.size());
}

TEST(Split, DeterministicPerSeed) {
  const auto samples = make_scans(10, 2);
  SplitSpec spec;
  const SplitResult a = subject_level_split(samples, spec, 7);
  const SplitResult b = subject_level_split(samples, spec, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.test_subjects, b.test_subjects);

  const SplitResult c = subject_level_split(samples, spec, 8);
  EXPECT_TRUE(a.train != c.train || a.val != c.val || a.test != c.test);
}

TEST(Split, AuditPassesAcrossTrials) {
  const auto samples = make_scans(10, 3);
  SplitSpec spec;
  for (std::size_t trial = 0; trial < spec.n_trials; ++trial) {
    const SplitResult r = subject_level_split(samples, spec, spec.seed + trial);
    const SplitAudit audit = audit_split(samples, r);
    EXPECT_TRUE(audit.subjects_disjoint) << "trial " << trial;
    EXPECT_TRUE(audit.scans_cover_all) << "trial " << trial;
    EXPECT_TRUE(audit.labels_within_tolerance) << "trial " << trial;
    EXPECT_LE(audit.max_label_deviation, kSplitLabelTolerance) << "trial " << trial;
  }
}

TEST(Split, MixedLabelSubjectRejected) {
  auto samples = make_scans(10, 1);
  samples.push_back(samples[0]);
  samples.back().scan_id = "scan1";
  samples.back().label = 1;  // s0 is a label-0 subject
  try {
    subject_level_split(samples, SplitSpec{}, 1);
    FAIL() << "expected label-constancy rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("different labels"), std::string::npos);
  }
}

TEST(Split, TooFewSubjectsRejected) {
  const auto samples = make_scans(4, 2);  // 2 subjects per class
  EXPECT_THROW(subject_level_split(samples, SplitSpec{}, 1), std::invalid_argument);
}

TEST(Split, UnreachableToleranceKeepsBestAttemptWithWarning) {
  // Class 1 mixes 10-scan and 1-scan subjects, so every subject-level
  // assignment leaves some set far from the global label proportion.
  std::vector<ScanSample> samples;
  auto add_subject = [&](const std::string& id, int label, std::size_t scans) {
    for (std::size_t k = 0; k < scans; ++k) {
      ScanSample s;
      s.subject_id = id;
      s.scan_id = "scan" + std::to_string(k);
      s.label = label;
      samples.push_back(std::move(s));
    }
  };
  for (int i = 0; i < 7; ++i) add_subject("neg" + std::to_string(i), 0, 1);
  for (int i = 0; i < 3; ++i) add_subject("big" + std::to_string(i), 1, 10);
  for (int i = 0; i < 4; ++i) add_subject("pos" + std::to_string(i), 1, 1);

  const SplitResult r = subject_level_split(samples, SplitSpec{}, 1);
  EXPECT_FALSE(r.within_tolerance);
  EXPECT_EQ(r.attempts, kSplitRetryCap);
  EXPECT_GT(r.max_label_deviation, kSplitLabelTolerance);

  const SplitAudit audit = audit_split(samples, r);
  EXPECT_TRUE(audit.subjects_disjoint);
  EXPECT_FALSE(audit.labels_within_tolerance);
}

TEST(Metrics, PerfectSeparationExample) {
  const MetricsResult m = compute_metrics({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.auc, 1.0);
  EXPECT_DOUBLE_EQ(m.sensitivity, 1.0);
  EXPECT_DOUBLE_EQ(m.specificity, 1.0);
  EXPECT_TRUE(m.sensitivity_defined && m.specificity_defined && m.auc_defined);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.tn, 2u);
  EXPECT_EQ(m.fp, 0u);
  EXPECT_EQ(m.fn, 0u);
}

TEST(Metrics, AllTiedScoresGiveChanceAuc) {
  const std::vector<double> probs(6, 0.5);
  const std::vector<int> labels = {1, 0, 1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(rank_auc(probs, labels), 0.5);
  EXPECT_DOUBLE_EQ(trapezoid_auc(probs, labels), 0.5);

  // At threshold 0.5 every tie predicts positive.
  const MetricsResult m = compute_metrics(probs, labels);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.sensitivity, 1.0);
  EXPECT_DOUBLE_EQ(m.specificity, 0.0);
}

TEST(Metrics, SingleClassLeavesMetricsUndefined) {
  const MetricsResult m = compute_metrics({0.9, 0.6}, {1, 1});
  EXPECT_TRUE(m.sensitivity_defined);
  EXPECT_FALSE(m.specificity_defined);
  EXPECT_FALSE(m.auc_defined);
  EXPECT_THROW(rank_auc({0.9, 0.6}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(trapezoid_auc({0.1, 0.2}, {0, 0}), std::invalid_argument);
}

TEST(Metrics, RankAndTrapezoidAgreeUnderTies) {
  Rng rng(300);
  const double levels[] = {0.1, 0.25, 0.5, 0.5, 0.75, 0.9};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + rng.uniform_below(24);
    std::vector<double> probs(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = levels[rng.uniform_below(6)];
      labels[i] = static_cast<int>(rng.uniform_below(2));
    }
    labels[0] = 1;  // force both classes
    labels[1] = 0;
    EXPECT_NEAR(rank_auc(probs, labels), trapezoid_auc(probs, labels), 1e-12);
  }
}

TEST(Metrics, AucInvariantUnderSampleOrder) {
  Rng rng(301);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) {
    probs.push_back(rng.uniform_below(5) * 0.2);  // heavy ties
    labels.push_back(static_cast<int>(rng.uniform_below(2)));
  }
  labels[0] = 1;
  labels[1] = 0;
  const double base = rank_auc(probs, labels);

  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<double> probs2;
  std::vector<int> labels2;
  for (std::size_t i : order) {
    probs2.push_back(probs[i]);
    labels2.push_back(labels[i]);
  }
  EXPECT_DOUBLE_EQ(rank_auc(probs2, labels2), base);
}

TEST(Metrics, QuantileAndSummary) {
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_type7({1, 2, 3, 4}, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_type7({4, 1, 3, 2}, 0.5), 2.5);  // sorts internally
  EXPECT_DOUBLE_EQ(quantile_type7({5}, 1.0), 5.0);
  EXPECT_THROW(quantile_type7({}, 0.5), std::invalid_argument);
  EXPECT_THROW(quantile_type7({1}, 1.5), std::invalid_argument);

  const MetricSummary s = summarize_metric({1, 2, 3, 4});
  EXPECT_EQ(s.n, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.max, 4.0);
  EXPECT_DOUBLE_EQ(s.median, 2.5);

  const MetricSummary single = summarize_metric({2.0});
  EXPECT_DOUBLE_EQ(single.stddev, 0.0);
  EXPECT_EQ(summarize_metric({}).n, 0u);
}

TEST(Mlp, ParamCountClosedForm) {
  EXPECT_EQ(mlp_param_count(10, 4, 3), 94u);
  EXPECT_EQ(mlp_param_count(1, 1, 1), 1u * 2 + 2u * 2);

  MlpModel<double> model(5, 2, 3, 4);
  EXPECT_EQ(model.param_count(), 94u);
}

TEST(Mlp, WidthSolverPicksNearestCount) {
  // input 10, depth 3: width 4 -> 94 params, width 5 -> 127.
  const MlpWidthPlan exact = solve_mlp_width(10, 3, 94);
  EXPECT_EQ(exact.width, 4u);
  EXPECT_EQ(exact.param_count, 94u);
  EXPECT_TRUE(exact.within_5pct);

  const MlpWidthPlan below = solve_mlp_width(10, 3, 110);
  EXPECT_EQ(below.width, 4u);  // 16 under beats 17 over
  const MlpWidthPlan above = solve_mlp_width(10, 3, 111);
  EXPECT_EQ(above.width, 5u);

  const MlpWidthPlan hopeless = solve_mlp_width(100, 10, 1);
  EXPECT_EQ(hopeless.width, 1u);
  EXPECT_FALSE(hopeless.within_5pct);
}

TEST(Mlp, ForwardShapeAndDeterminism) {
  MlpModel<double> model(4, 3, 2, 6);
  Rng rng(302);
  model.init(rng);
  Mat<double> x(4, 3);
  for (auto& v : x.data()) v = rng.uniform(-1, 1);
  const auto y1 = model.forward({x}, false);
  const auto y2 = model.forward({x}, true);  // flag is ignored: no batch norm
  ASSERT_EQ(y1.size(), 1u);
  EXPECT_EQ(y1[0].rows(), 1u);
  EXPECT_EQ(y1[0].cols(), 2u);
  EXPECT_EQ(y1[0].data(), y2[0].data());

  Mat<double> bad(3, 4);
  EXPECT_THROW(model.forward({bad}, false), std::invalid_argument);
}

namespace {

CvConfig tiny_cv_config() {
  CvConfig cfg;
  cfg.model.kernels_per_conv = 4;
  cfg.model.cheb_order = 2;
  cfg.model.n_blocks = 2;
  cfg.model.fc_units = 4;
  cfg.model.post_resblock_units = 4;
  cfg.model.precision = Precision::f64;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 4;
  cfg.train.lr = 1e-3;
  cfg.split.n_trials = 1;
  cfg.split.seed = 42;
  return cfg;
}

}  // namespace

TEST(Cv, SingleTrialMatchesManualPipeline) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  const CvConfig cfg = tiny_cv_config();
  const CvResult res = monte_carlo_cv(ds, cfg);
  ASSERT_EQ(res.trials.size(), 1u);
  const TrialOutcome& t = res.trials[0];
  EXPECT_EQ(t.seed, cfg.split.seed);

  const SplitResult split = subject_level_split(ds.samples, cfg.split, cfg.split.seed);
  const PreparedSplit<double> prep = prepare_split<double>(ds, split);
  LevelStack<double> stack =
      build_level_stack(ds.hierarchy, cfg.model.n_blocks, cfg.model.lambda_max_mode);
  ResGcnModel<double> model(cfg.model, stack.cast<double>(), ds.n_features);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.split.seed;
  const TrainResult trained =
      train_model(model, prep.train_x, prep.train_y, prep.val_x, prep.val_y, tc);
  const MetricsResult manual = compute_metrics(predict_probs(model, prep.test_x), prep.test_y);

  EXPECT_EQ(t.metrics.accuracy, manual.accuracy);
  EXPECT_EQ(t.metrics.tp, manual.tp);
  EXPECT_EQ(t.metrics.tn, manual.tn);
  if (manual.auc_defined) {
    EXPECT_EQ(t.metrics.auc, manual.auc);
  }
  EXPECT_EQ(t.best_epoch, trained.best_epoch);
  EXPECT_EQ(t.best_val_accuracy, trained.best_val_accuracy);
  EXPECT_EQ(t.model_params, model.param_count());
  EXPECT_EQ(t.mlp_width, 0u);
  EXPECT_TRUE(t.audit.subjects_disjoint);

  // The trial matches the summary for a single-trial run.
  EXPECT_EQ(res.accuracy.n, 1u);
  EXPECT_EQ(res.accuracy.mean, t.metrics.accuracy);
}

TEST(Cv, WorkerCountDoesNotChangeResults) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  CvConfig cfg = tiny_cv_config();
  cfg.split.n_trials = 3;

  cfg.jobs = 1;
  const CvResult serial = monte_carlo_cv(ds, cfg);
  cfg.jobs = 2;
  const CvResult threaded = monte_carlo_cv(ds, cfg);

  ASSERT_EQ(serial.trials.size(), threaded.trials.size());
  for (std::size_t t = 0; t < serial.trials.size(); ++t) {
    EXPECT_EQ(serial.trials[t].metrics.accuracy, threaded.trials[t].metrics.accuracy);
    EXPECT_EQ(serial.trials[t].metrics.auc, threaded.trials[t].metrics.auc);
    EXPECT_EQ(serial.trials[t].best_val_accuracy, threaded.trials[t].best_val_accuracy);
    EXPECT_EQ(serial.trials[t].seed, threaded.trials[t].seed);
  }
  EXPECT_EQ(serial.accuracy.mean, threaded.accuracy.mean);
}

TEST(Cv, TrialSeedsFollowBaseSeed) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  CvConfig cfg = tiny_cv_config();
  cfg.split.n_trials = 3;
  const CvResult res = monte_carlo_cv(ds, cfg);
  ASSERT_EQ(res.trials.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(res.trials[t].seed, cfg.split.seed + t);
    EXPECT_TRUE(res.trials[t].audit.subjects_disjoint);
  }
}

TEST(Cv, MlpBaselineMatchesParameterBudget) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  CvConfig cfg = tiny_cv_config();
  cfg.kind = ModelKind::mlp;
  const CvResult res = monte_carlo_cv(ds, cfg);
  ASSERT_EQ(res.trials.size(), 1u);
  const TrialOutcome& t = res.trials[0];
  EXPECT_GT(t.mlp_width, 0u);
  EXPECT_TRUE(t.mlp_within_5pct);

  LevelStack<double> stack =
      build_level_stack(ds.hierarchy, cfg.model.n_blocks, cfg.model.lambda_max_mode);
  ResGcnModel<double> reference(cfg.model, std::move(stack), ds.n_features);
  const double target = static_cast<double>(reference.param_count());
  EXPECT_LE(std::abs(static_cast<double>(t.model_params) - target), 0.05 * target);
}

TEST(Cv, CsvExportsAreWellFormed) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  CvConfig cfg = tiny_cv_config();
  cfg.split.n_trials = 2;
  const CvResult res = monte_carlo_cv(ds, cfg);

  const auto trials_path = std::filesystem::temp_directory_path() / "meshgcn_test_trials.csv";
  const auto summary_path = std::filesystem::temp_directory_path() / "meshgcn_test_summary.csv";
  write_trials_csv(res, trials_path.string());
  write_summary_csv(res, summary_path.string());

  std::ifstream tin(trials_path);
  std::string line;
  std::getline(tin, line);
  EXPECT_EQ(line,
            "trial,seed,accuracy,sensitivity,specificity,auc,n_train,n_val,n_test,"
            "best_epoch,split_within_tolerance,subjects_disjoint");
  std::size_t rows = 0;
  while (std::getline(tin, line)) ++rows;
  EXPECT_EQ(rows, 2u);

  std::ifstream sin(summary_path);
  std::getline(sin, line);
  EXPECT_EQ(line, "metric,n,mean,std,min,q1,median,q3,max");
  rows = 0;
  while (std::getline(sin, line)) {
    ++rows;
    EXPECT_FALSE(line.empty());
  }
  EXPECT_EQ(rows, 4u);
  std::filesystem::remove(trials_path);
  std::filesystem::remove(summary_path);
}

TEST(Checkpoint, RoundTripIsBitwiseAndRewriteIsByteIdentical) {
  const SyntheticDataset ds = generate_synthetic_dataset(cv_params());
  const CvConfig cfg = tiny_cv_config();
  const SplitResult split = subject_level_split(ds.samples, cfg.split, cfg.split.seed);
  const PreparedSplit<double> prep = prepare_split<double>(ds, split);
  LevelStack<double> stack =
      build_level_stack(ds.hierarchy, cfg.model.n_blocks, cfg.model.lambda_max_mode);

  ResGcnModel<double> model(cfg.model, stack.cast<double>(), ds.n_features);
  TrainConfig tc = cfg.train;
  tc.seed = 9;
  OptimizerState<double> opt;
  const TrainResult trained =
      train_model(model, prep.train_x, prep.train_y, prep.val_x, prep.val_y, tc, &opt);

  CheckpointExtras extras;
  extras.train_config = tc;
  extras.normalizer = prep.normalizer;
  extras.init_rng_state = trained.init_rng_state;
  extras.shuffle_rng_state = trained.shuffle_rng_state;
  extras.best_epoch = trained.best_epoch;
  extras.best_val_accuracy = trained.best_val_accuracy;

  const auto path = std::filesystem::temp_directory_path() / "meshgcn_test_ckpt.json";
  save_checkpoint(path.string(), model, cfg.model, &opt, &extras);

  ResGcnModel<double> restored(cfg.model, stack.cast<double>(), ds.n_features);
  OptimizerState<double> opt2;
  CheckpointExtras extras2;
  load_checkpoint_into(read_checkpoint_json(path.string()), restored, &opt2, &extras2);

  ASSERT_EQ(restored.tensors().size(), model.tensors().size());
  for (std::size_t i = 0; i < model.tensors().size(); ++i) {
    EXPECT_EQ(restored.tensors()[i].value->data(), model.tensors()[i].value->data());
  }
  for (std::size_t i = 0; i < model.state_tensors().size(); ++i) {
    EXPECT_EQ(restored.state_tensors()[i].value->data(),
              model.state_tensors()[i].value->data());
  }
  EXPECT_EQ(opt2.t, opt.t);
  EXPECT_EQ(opt2.m, opt.m);
  EXPECT_EQ(opt2.v, opt.v);
  ASSERT_TRUE(extras2.normalizer.has_value());
  EXPECT_EQ(extras2.normalizer->min_v, prep.normalizer.min_v);
  EXPECT_EQ(extras2.normalizer->max_v, prep.normalizer.max_v);
  EXPECT_EQ(extras2.init_rng_state, trained.init_rng_state);
  EXPECT_EQ(extras2.shuffle_rng_state, trained.shuffle_rng_state);
  EXPECT_EQ(extras2.best_epoch, trained.best_epoch);
  EXPECT_EQ(extras2.best_val_accuracy, trained.best_val_accuracy);
  ASSERT_TRUE(extras2.train_config.has_value());
  EXPECT_EQ(extras2.train_config->seed, tc.seed);
  EXPECT_EQ(extras2.train_config->lr, tc.lr);

  // Restored predictions match the original model exactly.
  const auto p1 = predict_probs(model, prep.test_x);
  const auto p2 = predict_probs(restored, prep.test_x);
  EXPECT_EQ(p1, p2);

  const auto path2 = std::filesystem::temp_directory_path() / "meshgcn_test_ckpt2.json";
  save_checkpoint(path2.string(), restored, cfg.model, &opt2, &extras2);
  EXPECT_EQ(slurp(path.string()), slurp(path2.string()));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST(Checkpoint, RejectsForeignFilesAndMismatchedShapes) {
  const auto path = std::filesystem::temp_directory_path() / "meshgcn_test_bad_ckpt.json";
  {
    std::ofstream out(path);
    out << "{\"format\": \"something-else/9\"}\n";
  }
  EXPECT_THROW(read_checkpoint_json(path.string()), std::runtime_error);
  std::filesystem::remove(path);

  Rng rng(303);
  ModelConfig small = tiny_cv_config().model;
  ResGcnModel<double> model(small, random_level_stack(rng, 8, small.n_blocks), 3);
  Rng init(304);
  model.init(init);
  const auto good = std::filesystem::temp_directory_path() / "meshgcn_test_good_ckpt.json";
  save_checkpoint(good.string(), model, small);

  ModelConfig wider = small;
  wider.kernels_per_conv = 5;
  Rng rng2(305);
  ResGcnModel<double> other(wider, random_level_stack(rng2, 8, wider.n_blocks), 3);
  EXPECT_THROW(load_checkpoint_into(read_checkpoint_json(good.string()), other),
               std::runtime_error);
  std::filesystem::remove(good);
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  ModelConfig cfg;
  cfg.kernels_per_conv = 7;
  cfg.cheb_order = 4;
  cfg.n_blocks = 3;
  cfg.fc_units = 32;
  cfg.post_resblock_units = 32;
  cfg.bias_enabled = false;
  cfg.lambda_max_mode = LambdaMaxMode::fixed2;
  cfg.precision = Precision::f64;
  const ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  EXPECT_EQ(back.kernels_per_conv, cfg.kernels_per_conv);
  EXPECT_EQ(back.cheb_order, cfg.cheb_order);
  EXPECT_EQ(back.n_blocks, cfg.n_blocks);
  EXPECT_EQ(back.fc_units, cfg.fc_units);
  EXPECT_EQ(back.bias_enabled, cfg.bias_enabled);
  EXPECT_TRUE(back.lambda_max_mode == cfg.lambda_max_mode);
  EXPECT_TRUE(back.precision == cfg.precision);

  TrainConfig t;
  t.batch_size = 8;
  t.epochs = 17;
  t.lr = 3e-4;
  t.lr_decay = 0.99;
  t.seed = 123;
  const TrainConfig tback = train_config_from_json(train_config_to_json(t));
  EXPECT_EQ(tback.batch_size, t.batch_size);
  EXPECT_EQ(tback.epochs, t.epochs);
  EXPECT_EQ(tback.lr, t.lr);
  EXPECT_EQ(tback.lr_decay, t.lr_decay);
  EXPECT_EQ(tback.seed, t.seed);
}
