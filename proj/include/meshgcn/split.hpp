#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/dataset.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

struct SplitSpec {
  double test_fraction = 0.2;
  double val_fraction_of_remaining = 0.2;
  std::size_t n_trials = 25;
  std::uint64_t seed = 1;

  void validate() const {
    detail::require_arg(test_fraction > 0.0 && test_fraction < 1.0,
                        "SplitSpec: test_fraction must be in (0,1)");
    detail::require_arg(val_fraction_of_remaining > 0.0 && val_fraction_of_remaining < 1.0,
                        "SplitSpec: val_fraction_of_remaining must be in (0,1)");
    detail::require_arg(n_trials >= 1, "SplitSpec: n_trials must be >= 1");
  }
};

/// One subject with all of its scan indices; labels are constant per
/// subject by construction.
struct SubjectGroup {
  std::string subject_id;
  int label = 0;
  std::vector<std::size_t> scan_indices;
};

/// Groups scans by subject in first-appearance order and rejects subjects
/// whose scans disagree on the label.
inline std::vector<SubjectGroup> group_by_subject(const std::vector<ScanSample>& samples) {
  detail::require_arg(!samples.empty(), "group_by_subject: no samples");
  std::vector<SubjectGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto it = index.find(s.subject_id);
    if (it == index.end()) {
      index.emplace(s.subject_id, groups.size());
      groups.push_back({s.subject_id, s.label, {i}});
    } else {
      SubjectGroup& g = groups[it->second];
      detail::require_state(g.label == s.label,
                            "group_by_subject: subject " + s.subject_id +
                                " has scans with different labels");
      g.scan_indices.push_back(i);
    }
  }
  return groups;
}

/// Scan indices per set plus the subject assignment behind them.
struct SplitResult {
  std::vector<std::size_t> train, val, test;                    // scan indices
  std::vector<std::string> train_subjects, val_subjects, test_subjects;
  double max_label_deviation = 0.0;  // worst per-set |proportion - global|, scan level
  bool within_tolerance = true;
  std::size_t attempts = 1;
};

namespace detail {

inline double scan_positive_fraction(const std::vector<ScanSample>& samples,
                                     const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t pos = 0;
  for (std::size_t i : idx) pos += samples[i].label == 1 ? 1 : 0;
  return static_cast<double>(pos) / static_cast<double>(idx.size());
}

}  // namespace detail

inline constexpr double kSplitLabelTolerance = 0.05;
inline constexpr std::size_t kSplitRetryCap = 100;

/// Stratified subject-level split: per class, a seeded shuffle assigns
/// round(test_fraction * n_class) subjects to test, then
/// round(val_fraction * remaining) to validation, and the rest to train.
/// Scans follow their subject, so no subject appears in two sets. Scan-level
/// label proportions are checked against the global proportion; draws are
/// retried up to the cap, then the best attempt is kept with a warning flag.
inline SplitResult subject_level_split(const std::vector<ScanSample>& samples,
                                       const SplitSpec& spec, std::uint64_t trial_seed) {
  spec.validate();
  const std::vector<SubjectGroup> groups = group_by_subject(samples);

  std::vector<std::size_t> class_members[2];
  for (std::size_t g = 0; g < groups.size(); ++g) {
    class_members[groups[g].label].push_back(g);
  }
  std::size_t n_test_c[2], n_val_c[2];
  for (int c = 0; c < 2; ++c) {
    const std::size_t n_c = class_members[c].size();
    n_test_c[c] = static_cast<std::size_t>(std::llround(spec.test_fraction * n_c));
    const std::size_t remaining = n_c - std::min(n_c, n_test_c[c]);
    n_val_c[c] =
        static_cast<std::size_t>(std::llround(spec.val_fraction_of_remaining * remaining));
    detail::require_arg(n_test_c[c] >= 1 && n_val_c[c] >= 1 &&
                            n_c >= n_test_c[c] + n_val_c[c] + 1,
                        "subject_level_split: too few subjects of class " + std::to_string(c) +
                            " to populate train, validation, and test sets");
  }
  const double global_pos = detail::scan_positive_fraction(
      samples, [&] {
        std::vector<std::size_t> all(samples.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
      }());

  SplitResult best;
  double best_dev = -1.0;
  for (std::size_t attempt = 0; attempt < kSplitRetryCap; ++attempt) {
    Rng rng(mix_seed(mix_seed(trial_seed, 0x73706c74), attempt));
    SplitResult r;
    r.attempts = attempt + 1;
    for (int c = 0; c < 2; ++c) {
      std::vector<std::size_t> pool = class_members[c];
      rng.shuffle(pool);
      for (std::size_t k = 0; k < pool.size(); ++k) {
        const SubjectGroup& g = groups[pool[k]];
        auto& set_scans = k < n_test_c[c]              ? r.test
                          : k < n_test_c[c] + n_val_c[c] ? r.val
                                                         : r.train;
        auto& set_subjects = k < n_test_c[c]              ? r.test_subjects
                             : k < n_test_c[c] + n_val_c[c] ? r.val_subjects
                                                            : r.train_subjects;
        set_subjects.push_back(g.subject_id);
        set_scans.insert(set_scans.end(), g.scan_indices.begin(), g.scan_indices.end());
      }
    }
    // Stable ordering regardless of the class interleaving above.
    std::sort(r.train.begin(), r.train.end());
    std::sort(r.val.begin(), r.val.end());
    std::sort(r.test.begin(), r.test.end());
    std::sort(r.train_subjects.begin(), r.train_subjects.end());
    std::sort(r.val_subjects.begin(), r.val_subjects.end());
    std::sort(r.test_subjects.begin(), r.test_subjects.end());

    double dev = 0.0;
    for (const auto* set : {&r.train, &r.val, &r.test}) {
      dev = std::max(dev, std::abs(detail::scan_positive_fraction(samples, *set) - global_pos));
    }
    r.max_label_deviation = dev;
    r.within_tolerance = dev <= kSplitLabelTolerance;
    if (r.within_tolerance) return r;
    if (best_dev < 0.0 || dev < best_dev) {
      best_dev = dev;
      best = std::move(r);
    }
  }
  best.attempts = kSplitRetryCap;
  return best;  // within_tolerance stays false; callers surface the warning
}

/// Post-hoc audit of a split against the samples it indexes.
struct SplitAudit {
  bool subjects_disjoint = true;
  bool scans_cover_all = true;
  bool labels_within_tolerance = true;
  double max_label_deviation = 0.0;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
};

inline SplitAudit audit_split(const std::vector<ScanSample>& samples, const SplitResult& r) {
  SplitAudit a;
  a.n_train = r.train.size();
  a.n_val = r.val.size();
  a.n_test = r.test.size();

  auto subjects_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> s;
    for (std::size_t i : idx) s.push_back(samples[i].subject_id);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  };
  const auto tr = subjects_of(r.train), va = subjects_of(r.val), te = subjects_of(r.test);
  auto intersects = [](const std::vector<std::string>& x, const std::vector<std::string>& y) {
    std::vector<std::string> out;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
    return !out.empty();
  };
  a.subjects_disjoint = !intersects(tr, va) && !intersects(tr, te) && !intersects(va, te);

  std::vector<std::size_t> all;
  all.insert(all.end(), r.train.begin(), r.train.end());
  all.insert(all.end(), r.val.begin(), r.val.end());
  all.insert(all.end(), r.test.begin(), r.test.end());
  std::sort(all.begin(), all.end());
  a.scans_cover_all = all.size() == samples.size();
  for (std::size_t i = 0; a.scans_cover_all && i < all.size(); ++i) {
    if (all[i] != i) a.scans_cover_all = false;
  }

  std::vector<std::size_t> everything(samples.size());
  for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;
  const double global_pos = detail::scan_positive_fraction(samples, everything);
  for (const auto* set : {&r.train, &r.val, &r.test}) {
    a.max_label_deviation = std::max(
        a.max_label_deviation,
        std::abs(detail::scan_positive_fraction(samples, *set) - global_pos));
  }
  a.labels_within_tolerance = a.max_label_deviation <= kSplitLabelTolerance;
  return a;
}

}  // namespace meshgcn
