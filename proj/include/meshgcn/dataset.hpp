#pragma once

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/hierarchy.hpp"
#include "meshgcn/mesh.hpp"
#include "meshgcn/rng.hpp"

namespace meshgcn {

enum class PatchCenterMode { fixed, per_subject };

/// Parameters of the synthetic cohort: spherical meshes where the positive
/// class carries a localized inward deformation patch, subjects carry
/// private shape quirks shared across their scans, and every scan adds
/// small radial jitter.
struct GeneratorParams {
  std::size_t n_subjects = 60;
  std::size_t scans_per_subject = 3;
  int subdivisions = 3;
  double radius_mm = 20.0;
  double sigma = 2.0;
  double stop_distance_mm = 2.5;
  std::size_t max_levels = 6;
  double patch_radius_mm = 14.0;
  double patch_depth_mm = 4.0;
  PatchCenterMode center_mode = PatchCenterMode::fixed;
  std::size_t identity_bumps = 3;
  double identity_bump_radius_mm = 6.0;
  double identity_bump_depth_mm = 0.4;
  double jitter_mm = 0.05;
  bool two_structure = false;
  std::uint64_t seed = 1;

  void validate() const {
    detail::require_arg(n_subjects >= 2 && n_subjects % 2 == 0,
                        "GeneratorParams: n_subjects must be even and >= 2");
    detail::require_arg(scans_per_subject >= 1,
                        "GeneratorParams: scans_per_subject must be >= 1");
    detail::require_arg(radius_mm > 0.0, "GeneratorParams: radius must be positive");
    detail::require_arg(patch_radius_mm > 0.0, "GeneratorParams: patch radius must be positive");
    detail::require_arg(patch_depth_mm >= 0.0, "GeneratorParams: patch depth must be >= 0");
    detail::require_arg(patch_depth_mm < radius_mm, "GeneratorParams: patch depth too large");
    detail::require_arg(jitter_mm >= 0.0, "GeneratorParams: jitter must be >= 0");
    detail::require_arg(identity_bump_radius_mm > 0.0,
                        "GeneratorParams: identity bump radius must be positive");
    detail::require_arg(sigma > 0.0 && stop_distance_mm > 0.0 && max_levels >= 1,
                        "GeneratorParams: bad hierarchy parameters");
  }
};

struct SubjectInfo {
  std::string subject_id;
  int label = 0;
  std::size_t patch_center = 0;
  std::vector<std::size_t> patch_vertices;  // empty for label-0 subjects
};

struct ScanSample {
  std::string subject_id;
  std::string scan_id;
  int label = 0;
  Mat<double> features;  // finest-level rows x n_features
  std::vector<Vec3> positions;        // deformed primary surface
  std::vector<Vec3> inner_positions;  // two-structure mode only
  std::vector<Vec3> small_positions;  // two-structure mode only
};

/// A generated cohort plus everything the pipeline needs downstream: the
/// partition hierarchy per structure, per-scan leaf features, the padding
/// mask for block-diagonal zeros, and the ground-truth patch vertex sets.
struct SyntheticDataset {
  GeneratorParams params;
  TriangleMesh base_mesh;
  MeshHierarchy hierarchy;
  std::optional<TriangleMesh> second_mesh;
  std::optional<MeshHierarchy> second_hierarchy;
  std::vector<SubjectInfo> subjects;
  std::vector<ScanSample> samples;
  std::size_t n_features = 0;
  Mat<double> mask;  // finest rows x n_features; 1 marks a real entry

  std::vector<const MeshHierarchy*> hierarchies() const {
    std::vector<const MeshHierarchy*> hs{&hierarchy};
    if (second_hierarchy) hs.push_back(&*second_hierarchy);
    return hs;
  }

  /// The class-1 deformation site, defined when all positive subjects share
  /// one patch (fixed center mode).
  const std::vector<std::size_t>& shared_patch_vertices() const {
    detail::require_state(params.center_mode == PatchCenterMode::fixed,
                          "shared_patch_vertices: centers vary per subject");
    for (const auto& s : subjects) {
      if (s.label == 1) return s.patch_vertices;
    }
    throw std::logic_error("shared_patch_vertices: no positive subjects");
  }
};

namespace detail {

inline std::size_t nearest_vertex_to_pole(const TriangleMesh& mesh) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < mesh.n_vertices(); ++v) {
    if (mesh.vertices[v].z > mesh.vertices[best].z) best = v;
  }
  return best;
}

/// Arc length along the sphere between two directions, in mm.
inline double sphere_arc(const Vec3& a, const Vec3& b, double radius) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return radius * std::acos(c);
}

/// Raised-cosine radial push: depth * (0.5 + 0.5 cos(pi * arc / patch_r))
/// inside the patch, zero outside. Positive depth moves vertices inward.
inline void apply_radial_patch(std::vector<Vec3>& positions, const Vec3& center_dir,
                               double sphere_radius, double patch_radius, double depth) {
  if (depth == 0.0) return;
  for (auto& p : positions) {
    const double arc = sphere_arc(p, center_dir, sphere_radius);
    if (arc >= patch_radius) continue;
    const double w = 0.5 + 0.5 * std::cos(std::acos(-1.0) * arc / patch_radius);
    const double r = p.norm();
    p = p * ((r - depth * w) / r);
  }
}

inline std::vector<std::size_t> patch_vertex_set(const TriangleMesh& mesh, std::size_t center,
                                                 double sphere_radius, double patch_radius) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
    if (sphere_arc(mesh.vertices[v], mesh.vertices[center], sphere_radius) < patch_radius) {
      out.push_back(v);
    }
  }
  return out;
}

inline Mat<double> leaf_means(const MeshHierarchy& h, const std::vector<Vec3>& positions) {
  const auto& leaves = h.finest_level();
  Mat<double> f(leaves.members.size(), 3);
  for (std::size_t p = 0; p < leaves.members.size(); ++p) {
    Vec3 acc;
    for (std::size_t v : leaves.members[p]) acc = acc + positions[v];
    const double inv = 1.0 / static_cast<double>(leaves.members[p].size());
    f(p, 0) = acc.x * inv;
    f(p, 1) = acc.y * inv;
    f(p, 2) = acc.z * inv;
  }
  return f;
}

inline void jitter_radial(std::vector<Vec3>& positions, Rng& rng, double sigma_mm) {
  for (auto& p : positions) {
    const double r = p.norm();
    p = p * ((r + rng.normal(0.0, sigma_mm)) / r);
  }
}

/// Fills per-scan features from the deformed positions: mean coordinates of
/// each finest-level partition, laid out block-diagonally in two-structure
/// mode (outer xyz, inner xyz | small xyz).
inline void fill_features(const SyntheticDataset& ds, ScanSample& sample) {
  const std::size_t leaves_a = ds.hierarchy.finest_level().members.size();
  const std::size_t features_a = ds.second_hierarchy ? 6 : 3;
  const std::size_t leaves_b =
      ds.second_hierarchy ? ds.second_hierarchy->finest_level().members.size() : 0;
  sample.features = Mat<double>(leaves_a + leaves_b, ds.n_features);
  const Mat<double> fa = leaf_means(ds.hierarchy, sample.positions);
  for (std::size_t p = 0; p < leaves_a; ++p) {
    for (std::size_t c = 0; c < 3; ++c) sample.features(p, c) = fa(p, c);
  }
  if (ds.second_hierarchy) {
    const Mat<double> fi = leaf_means(ds.hierarchy, sample.inner_positions);
    for (std::size_t p = 0; p < leaves_a; ++p) {
      for (std::size_t c = 0; c < 3; ++c) sample.features(p, 3 + c) = fi(p, c);
    }
    const Mat<double> fb = leaf_means(*ds.second_hierarchy, sample.small_positions);
    for (std::size_t p = 0; p < leaves_b; ++p) {
      for (std::size_t c = 0; c < 3; ++c) sample.features(leaves_a + p, features_a + c) = fb(p, c);
    }
  }
}

inline Mat<double> structure_mask(std::size_t leaves_a, std::size_t features_a,
                                  std::size_t leaves_b, std::size_t features_b) {
  Mat<double> mask(leaves_a + leaves_b, features_a + features_b);
  for (std::size_t r = 0; r < leaves_a; ++r) {
    for (std::size_t c = 0; c < features_a; ++c) mask(r, c) = 1.0;
  }
  for (std::size_t r = 0; r < leaves_b; ++r) {
    for (std::size_t c = 0; c < features_b; ++c) mask(leaves_a + r, features_a + c) = 1.0;
  }
  return mask;
}

}  // namespace detail

/// Deterministic synthetic cohort generator. Class 1 subjects carry an
/// inward raised-cosine patch; every subject carries private low-amplitude
/// bumps shared by all of their scans; every scan adds radial jitter.
/// Features are the mean deformed coordinates of each finest-level
/// partition. In two-structure mode an inner shell doubles the primary
/// surface's features and a smaller sphere contributes three more columns,
/// block-diagonal with a padding mask.
inline SyntheticDataset generate_synthetic_dataset(const GeneratorParams& params) {
  params.validate();
  SyntheticDataset ds;
  ds.params = params;
  ds.base_mesh = icosphere(params.subdivisions, params.radius_mm);
  ds.hierarchy = build_hierarchy(ds.base_mesh, params.sigma, params.stop_distance_mm,
                                 params.max_levels);
  if (params.two_structure) {
    ds.second_mesh = icosphere(params.subdivisions, params.radius_mm * 0.4);
    ds.second_hierarchy = build_hierarchy(*ds.second_mesh, params.sigma,
                                          params.stop_distance_mm, params.max_levels);
    detail::require_state(ds.second_hierarchy->finest() == ds.hierarchy.finest(),
                          "generate_synthetic_dataset: structure depths diverged");
  }

  const std::size_t leaves_a = ds.hierarchy.finest_level().members.size();
  const std::size_t features_a = params.two_structure ? 6 : 3;
  const std::size_t leaves_b =
      params.two_structure ? ds.second_hierarchy->finest_level().members.size() : 0;
  const std::size_t features_b = params.two_structure ? 3 : 0;
  ds.n_features = features_a + features_b;
  ds.mask = detail::structure_mask(leaves_a, features_a, leaves_b, features_b);

  const std::size_t fixed_center = detail::nearest_vertex_to_pole(ds.base_mesh);

  for (std::size_t s = 0; s < params.n_subjects; ++s) {
    Rng subject_rng(mix_seed(mix_seed(params.seed, 0x73756266), s));
    SubjectInfo info;
    info.subject_id = "subj" + std::to_string(s);
    info.label = static_cast<int>(s % 2);
    // Draw in a fixed order for every subject so the stream layout does not
    // depend on the label or the center mode.
    const std::size_t random_center = subject_rng.uniform_below(ds.base_mesh.n_vertices());
    const double depth_factor = subject_rng.uniform(0.9, 1.1);
    info.patch_center =
        params.center_mode == PatchCenterMode::fixed ? fixed_center : random_center;
    if (info.label == 1) {
      info.patch_vertices = detail::patch_vertex_set(ds.base_mesh, info.patch_center,
                                                     params.radius_mm, params.patch_radius_mm);
    }
    std::vector<std::size_t> bump_centers;
    std::vector<double> bump_depths;
    for (std::size_t b = 0; b < params.identity_bumps; ++b) {
      bump_centers.push_back(subject_rng.uniform_below(ds.base_mesh.n_vertices()));
      bump_depths.push_back(subject_rng.uniform(-params.identity_bump_depth_mm,
                                                params.identity_bump_depth_mm));
    }

    for (std::size_t scan = 0; scan < params.scans_per_subject; ++scan) {
      Rng scan_rng(mix_seed(mix_seed(params.seed, 0x7363616e),
                            s * params.scans_per_subject + scan));
      ScanSample sample;
      sample.subject_id = info.subject_id;
      sample.scan_id = "scan" + std::to_string(scan);
      sample.label = info.label;
      sample.positions = ds.base_mesh.vertices;
      for (std::size_t b = 0; b < bump_centers.size(); ++b) {
        detail::apply_radial_patch(sample.positions, ds.base_mesh.vertices[bump_centers[b]],
                                   params.radius_mm, params.identity_bump_radius_mm,
                                   bump_depths[b]);
      }
      if (info.label == 1) {
        detail::apply_radial_patch(sample.positions, ds.base_mesh.vertices[info.patch_center],
                                   params.radius_mm, params.patch_radius_mm,
                                   params.patch_depth_mm * depth_factor);
      }
      if (params.two_structure) {
        // Inner shell: same angular deformation, 10% smaller radius.
        sample.inner_positions = sample.positions;
        for (auto& p : sample.inner_positions) p = p * 0.9;
        sample.small_positions = ds.second_mesh->vertices;
      }
      detail::jitter_radial(sample.positions, scan_rng, params.jitter_mm);
      if (params.two_structure) {
        detail::jitter_radial(sample.inner_positions, scan_rng, params.jitter_mm);
        detail::jitter_radial(sample.small_positions, scan_rng, params.jitter_mm);
      }
      detail::fill_features(ds, sample);
      ds.samples.push_back(std::move(sample));
    }
    ds.subjects.push_back(std::move(info));
  }
  return ds;
}

inline nlohmann::ordered_json generator_params_to_json(const GeneratorParams& p) {
  nlohmann::ordered_json j;
  j["n_subjects"] = p.n_subjects;
  j["scans_per_subject"] = p.scans_per_subject;
  j["subdivisions"] = p.subdivisions;
  j["radius_mm"] = p.radius_mm;
  j["sigma"] = p.sigma;
  j["stop_distance_mm"] = p.stop_distance_mm;
  j["max_levels"] = p.max_levels;
  j["patch_radius_mm"] = p.patch_radius_mm;
  j["patch_depth_mm"] = p.patch_depth_mm;
  j["center_mode"] = p.center_mode == PatchCenterMode::fixed ? "fixed" : "per_subject";
  j["identity_bumps"] = p.identity_bumps;
  j["identity_bump_radius_mm"] = p.identity_bump_radius_mm;
  j["identity_bump_depth_mm"] = p.identity_bump_depth_mm;
  j["jitter_mm"] = p.jitter_mm;
  j["two_structure"] = p.two_structure;
  j["seed"] = p.seed;
  return j;
}

inline GeneratorParams generator_params_from_json(const nlohmann::json& j) {
  GeneratorParams p;
  p.n_subjects = j.value("n_subjects", p.n_subjects);
  p.scans_per_subject = j.value("scans_per_subject", p.scans_per_subject);
  p.subdivisions = j.value("subdivisions", p.subdivisions);
  p.radius_mm = j.value("radius_mm", p.radius_mm);
  p.sigma = j.value("sigma", p.sigma);
  p.stop_distance_mm = j.value("stop_distance_mm", p.stop_distance_mm);
  p.max_levels = j.value("max_levels", p.max_levels);
  p.patch_radius_mm = j.value("patch_radius_mm", p.patch_radius_mm);
  p.patch_depth_mm = j.value("patch_depth_mm", p.patch_depth_mm);
  const std::string mode = j.value("center_mode", "fixed");
  detail::require_state(mode == "fixed" || mode == "per_subject",
                        "generator_params_from_json: unknown center_mode '" + mode + "'");
  p.center_mode = mode == "fixed" ? PatchCenterMode::fixed : PatchCenterMode::per_subject;
  p.identity_bumps = j.value("identity_bumps", p.identity_bumps);
  p.identity_bump_radius_mm = j.value("identity_bump_radius_mm", p.identity_bump_radius_mm);
  p.identity_bump_depth_mm = j.value("identity_bump_depth_mm", p.identity_bump_depth_mm);
  p.jitter_mm = j.value("jitter_mm", p.jitter_mm);
  p.two_structure = j.value("two_structure", p.two_structure);
  p.seed = j.value("seed", p.seed);
  return p;
}

/// Writes the cohort as a directory: base mesh and hierarchy JSON per
/// structure, one OFF mesh per scan surface, and a manifest tying records
/// together. Features are not stored; loaders recompute them from the
/// meshes, whose coordinates round-trip exactly through the OFF text.
inline void save_dataset(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_off(ds.base_mesh, dir + "/base.off");
  save_hierarchy(ds.hierarchy, dir + "/hierarchy.json");
  if (ds.second_mesh) {
    save_off(*ds.second_mesh, dir + "/base_b.off");
    save_hierarchy(*ds.second_hierarchy, dir + "/hierarchy_b.json");
  }

  nlohmann::ordered_json manifest;
  manifest["format"] = "mesh-dataset/1";
  manifest["generator"] = generator_params_to_json(ds.params);
  manifest["n_features"] = ds.n_features;
  manifest["base_mesh"] = "base.off";
  manifest["hierarchy"] = "hierarchy.json";
  if (ds.second_mesh) {
    manifest["base_mesh_b"] = "base_b.off";
    manifest["hierarchy_b"] = "hierarchy_b.json";
  }
  manifest["subjects"] = nlohmann::ordered_json::array();
  for (const auto& info : ds.subjects) {
    nlohmann::ordered_json sj;
    sj["subject_id"] = info.subject_id;
    sj["label"] = info.label;
    sj["patch_center"] = info.patch_center;
    sj["patch_vertices"] = info.patch_vertices;
    manifest["subjects"].push_back(sj);
  }
  manifest["records"] = nlohmann::ordered_json::array();

  TriangleMesh scan_mesh = ds.base_mesh;
  for (const auto& sample : ds.samples) {
    const std::string stem = sample.subject_id + "_" + sample.scan_id;
    nlohmann::ordered_json rec;
    rec["subject_id"] = sample.subject_id;
    rec["scan_id"] = sample.scan_id;
    rec["label"] = sample.label;
    rec["mesh"] = stem + ".off";
    scan_mesh.vertices = sample.positions;
    save_off(scan_mesh, dir + "/" + stem + ".off");
    if (ds.second_mesh) {
      rec["mesh_inner"] = stem + "_inner.off";
      rec["mesh_small"] = stem + "_small.off";
      scan_mesh.vertices = sample.inner_positions;
      save_off(scan_mesh, dir + "/" + stem + "_inner.off");
      TriangleMesh small = *ds.second_mesh;
      small.vertices = sample.small_positions;
      save_off(small, dir + "/" + stem + "_small.off");
    }
    manifest["records"].push_back(rec);
  }
  std::ofstream mout(dir + "/manifest.json");
  detail::require_state(mout.good(), "save_dataset: cannot open manifest.json");
  mout << manifest.dump(2) << "\n";
  detail::require_state(mout.good(), "save_dataset: manifest write failed");
}

inline SyntheticDataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  detail::require_state(in.good(), "load_dataset: cannot open " + manifest_path);
  nlohmann::json manifest;
  in >> manifest;
  detail::require_state(!in.fail(), "load_dataset: malformed JSON in " + manifest_path);
  detail::require_state(manifest.value("format", "") == "mesh-dataset/1",
                        "load_dataset: unknown manifest format");
  const std::string dir = fs::path(manifest_path).parent_path().string();
  auto resolve = [&](const std::string& rel) { return dir.empty() ? rel : dir + "/" + rel; };

  SyntheticDataset ds;
  ds.params = generator_params_from_json(manifest.at("generator"));
  ds.base_mesh = load_off(resolve(manifest.at("base_mesh").get<std::string>()));
  ds.hierarchy = load_hierarchy(resolve(manifest.at("hierarchy").get<std::string>()));
  if (manifest.contains("base_mesh_b")) {
    ds.second_mesh = load_off(resolve(manifest.at("base_mesh_b").get<std::string>()));
    ds.second_hierarchy = load_hierarchy(resolve(manifest.at("hierarchy_b").get<std::string>()));
  }
  ds.n_features = manifest.at("n_features").get<std::size_t>();

  const std::size_t leaves_a = ds.hierarchy.finest_level().members.size();
  const std::size_t features_a = ds.second_hierarchy ? 6 : 3;
  const std::size_t leaves_b =
      ds.second_hierarchy ? ds.second_hierarchy->finest_level().members.size() : 0;
  const std::size_t features_b = ds.second_hierarchy ? 3 : 0;
  detail::require_state(ds.n_features == features_a + features_b,
                        "load_dataset: n_features does not match the structure layout");
  ds.mask = detail::structure_mask(leaves_a, features_a, leaves_b, features_b);

  for (const auto& sj : manifest.at("subjects")) {
    SubjectInfo info;
    info.subject_id = sj.at("subject_id").get<std::string>();
    info.label = sj.at("label").get<int>();
    detail::require_state(info.label == 0 || info.label == 1,
                          "load_dataset: subject label must be 0 or 1");
    info.patch_center = sj.at("patch_center").get<std::size_t>();
    info.patch_vertices = sj.at("patch_vertices").get<std::vector<std::size_t>>();
    ds.subjects.push_back(std::move(info));
  }

  for (const auto& rec : manifest.at("records")) {
    ScanSample sample;
    sample.subject_id = rec.at("subject_id").get<std::string>();
    sample.scan_id = rec.at("scan_id").get<std::string>();
    sample.label = rec.at("label").get<int>();
    detail::require_state(sample.label == 0 || sample.label == 1,
                          "load_dataset: record label must be 0 or 1");
    const TriangleMesh mesh = load_off(resolve(rec.at("mesh").get<std::string>()));
    detail::require_state(mesh.n_vertices() == ds.base_mesh.n_vertices(),
                          "load_dataset: scan mesh size differs from the base mesh");
    sample.positions = mesh.vertices;
    if (ds.second_mesh) {
      const TriangleMesh inner = load_off(resolve(rec.at("mesh_inner").get<std::string>()));
      detail::require_state(inner.n_vertices() == ds.base_mesh.n_vertices(),
                            "load_dataset: inner mesh size differs from the base mesh");
      sample.inner_positions = inner.vertices;
      const TriangleMesh small = load_off(resolve(rec.at("mesh_small").get<std::string>()));
      detail::require_state(small.n_vertices() == ds.second_mesh->n_vertices(),
                            "load_dataset: small mesh size differs from its base");
      sample.small_positions = small.vertices;
    }
    detail::fill_features(ds, sample);
    ds.samples.push_back(std::move(sample));
  }
  detail::require_state(!ds.samples.empty(), "load_dataset: no records");
  return ds;
}

}  // namespace meshgcn
