#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/geodesic.hpp"
#include "meshgcn/graph.hpp"
#include "meshgcn/mesh.hpp"
#include "meshgcn/spectral.hpp"

namespace meshgcn {

struct Bipartition {
  std::vector<std::size_t> part_a;
  std::vector<std::size_t> part_b;
};

/// Splits a connected graph in two by the sign of the Fiedler vector.
/// Zero entries go to the smaller side (ties to part_a). If the sign split
/// empties a side, the split falls back to the median Fiedler value. Stray
/// components are reassigned until both parts induce connected subgraphs,
/// so the result is always two nonempty connected parts.
inline Bipartition bipartition(const SparseGraph& g) {
  const std::size_t n = g.n_vertices();
  detail::require_arg(n >= 2, "bipartition: need at least 2 vertices");
  const std::vector<double> v = fiedler_vector(g);

  double amax = 0.0;
  for (double c : v) amax = std::max(amax, std::abs(c));
  const double eps = 1e-12 * amax;

  std::vector<char> in_a(n, 0);
  std::vector<std::size_t> zeros;
  std::size_t count_a = 0, count_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] > eps) {
      in_a[i] = 1;
      ++count_a;
    } else if (v[i] < -eps) {
      ++count_b;
    } else {
      zeros.push_back(i);
    }
  }
  const bool zeros_to_a = count_a <= count_b;
  for (std::size_t i : zeros) {
    in_a[i] = zeros_to_a ? 1 : 0;
    (zeros_to_a ? count_a : count_b)++;
  }

  if (count_a == 0 || count_b == 0) {
    // Median split: ascending by (value, index); lower half becomes part_b.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (v[x] != v[y]) return v[x] < v[y];
      return x < y;
    });
    std::fill(in_a.begin(), in_a.end(), 1);
    for (std::size_t r = 0; r < n / 2; ++r) in_a[order[r]] = 0;
  }

  // Reassign stray components of either side until both parts are connected.
  // The largest component is kept; ties go to the component holding the
  // lowest vertex id.
  auto repair_side = [&](char side) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_a[i] == side) members.push_back(i);
    }
    if (members.size() <= 1) return false;
    const SparseGraph sub = induced_subgraph(g, members);
    const std::vector<int> comp = sub.components();
    std::size_t n_comp = 0;
    for (int c : comp) n_comp = std::max(n_comp, static_cast<std::size_t>(c) + 1);
    if (n_comp <= 1) return false;
    std::vector<std::size_t> sizes(n_comp, 0);
    for (int c : comp) ++sizes[static_cast<std::size_t>(c)];
    std::size_t keep = 0;
    for (std::size_t c = 1; c < n_comp; ++c) {
      if (sizes[c] > sizes[keep]) keep = c;
    }
    for (std::size_t local = 0; local < members.size(); ++local) {
      if (static_cast<std::size_t>(comp[local]) != keep) in_a[members[local]] = side ? 0 : 1;
    }
    return true;
  };
  bool changed = true;
  for (std::size_t pass = 0; changed; ++pass) {
    detail::require_state(pass < 100, "bipartition: connectivity repair did not settle");
    changed = repair_side(1);
    changed = repair_side(0) || changed;
  }

  Bipartition out;
  for (std::size_t i = 0; i < n; ++i) (in_a[i] ? out.part_a : out.part_b).push_back(i);
  detail::require_state(!out.part_a.empty() && !out.part_b.empty(),
                        "bipartition: repair emptied a side");
  return out;
}

/// One level of the partition tree. Partitions act as graph vertices; the
/// level graph connects partitions joined by at least one mesh edge, weighted
/// by the Gaussian kernel of the center-to-center geodesic distance.
struct HierarchyLevel {
  SparseGraph graph;
  std::vector<std::size_t> centers;                // mesh vertex per partition
  std::vector<std::vector<std::size_t>> members;   // mesh vertices per partition
  std::vector<std::size_t> membership;             // mesh vertex -> partition
  std::optional<double> avg_neighbor_distance;     // empty when no neighbor pairs
};

/// Uniform-depth binary partition tree over a mesh. Level l has 2^l
/// partitions; partition p at level l has children 2p and 2p+1 at level l+1.
class MeshHierarchy {
 public:
  std::vector<HierarchyLevel> levels;
  double sigma = 0.0;
  double stop_distance = 0.0;
  std::size_t n_mesh_vertices = 0;

  std::size_t depth() const { return levels.size() - 1; }
  std::size_t finest() const { return depth(); }
  const HierarchyLevel& finest_level() const { return levels.back(); }

  static std::size_t parent_of(std::size_t partition) { return partition / 2; }
};

struct PoolGroup {
  std::size_t parent;
  std::size_t child_a;
  std::size_t child_b;
};

/// Sibling pairs pooled from `level` down to `level - 1`.
inline std::vector<PoolGroup> pooling_groups(const MeshHierarchy& h, std::size_t level) {
  detail::require_arg(level >= 1 && level <= h.finest(), "pooling_groups: level out of range");
  std::vector<PoolGroup> groups;
  const std::size_t n_parents = std::size_t{1} << (level - 1);
  groups.reserve(n_parents);
  for (std::size_t p = 0; p < n_parents; ++p) groups.push_back({p, 2 * p, 2 * p + 1});
  return groups;
}

/// Carries per-partition values at `level` down the tree to the finest level:
/// every finest partition takes the value of its ancestor.
inline std::vector<double> upsample_to_finest(const MeshHierarchy& h,
                                              const std::vector<double>& values,
                                              std::size_t level) {
  detail::require_arg(level <= h.finest(), "upsample_to_finest: level out of range");
  detail::require_arg(values.size() == (std::size_t{1} << level),
                      "upsample_to_finest: values length must be 2^level");
  const std::size_t shift = h.finest() - level;
  std::vector<double> out(std::size_t{1} << h.finest());
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = values[q >> shift];
  return out;
}

/// Spreads per-partition values at `level` onto the underlying mesh vertices.
inline std::vector<double> partition_values_to_vertices(const MeshHierarchy& h,
                                                        const std::vector<double>& values,
                                                        std::size_t level) {
  detail::require_arg(level < h.levels.size(), "partition_values_to_vertices: level out of range");
  const auto& lv = h.levels[level];
  detail::require_arg(values.size() == lv.centers.size(),
                      "partition_values_to_vertices: values length mismatch");
  std::vector<double> out(h.n_mesh_vertices);
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = values[lv.membership[v]];
  return out;
}

namespace detail {

/// Center = member with the smallest summed geodesic distance to the other
/// members, over the partition's induced subgraph (highest closeness
/// centrality); ties resolved to the lowest mesh vertex id.
inline std::size_t partition_center(const SparseGraph& mesh_graph,
                                    const std::vector<std::size_t>& members) {
  if (members.size() == 1) return members[0];
  const SparseGraph sub = induced_subgraph(mesh_graph, members);
  std::size_t best = 0;
  double best_sum = kUnreachable;
  for (std::size_t local = 0; local < members.size(); ++local) {
    const std::vector<double> dist = shortest_distances(sub, local);
    double sum = 0.0;
    for (double d : dist) sum += d;
    if (sum < best_sum) {
      best_sum = sum;
      best = local;
    } else if (sum == best_sum && members[local] < members[best]) {
      best = local;
    }
  }
  require_state(best_sum != kUnreachable, "partition_center: partition is disconnected");
  return members[best];
}

/// Assembles one hierarchy level from a complete membership assignment.
inline HierarchyLevel make_level(const SparseGraph& mesh_graph, double sigma,
                                 std::vector<std::size_t> membership,
                                 std::size_t n_partitions) {
  HierarchyLevel lv;
  lv.membership = std::move(membership);
  lv.members.assign(n_partitions, {});
  for (std::size_t v = 0; v < lv.membership.size(); ++v) {
    lv.members[lv.membership[v]].push_back(v);
  }
  lv.centers.resize(n_partitions);
  for (std::size_t p = 0; p < n_partitions; ++p) {
    require_state(!lv.members[p].empty(), "make_level: empty partition");
    lv.centers[p] = partition_center(mesh_graph, lv.members[p]);
  }

  // Partitions are neighbors when at least one mesh edge crosses them.
  std::set<std::pair<std::size_t, std::size_t>> neighbor_pairs;
  for (const Edge& e : mesh_graph.edges()) {
    std::size_t pa = lv.membership[e.i];
    std::size_t pb = lv.membership[e.j];
    if (pa == pb) continue;
    if (pa > pb) std::swap(pa, pb);
    neighbor_pairs.emplace(pa, pb);
  }

  std::vector<Edge> level_edges;
  double dist_sum = 0.0;
  std::optional<std::vector<double>> from_center;
  std::size_t from_partition = n_partitions;  // sentinel: nothing cached
  for (const auto& [pa, pb] : neighbor_pairs) {
    if (from_partition != pa) {
      from_center = shortest_distances(mesh_graph, lv.centers[pa]);
      from_partition = pa;
    }
    const double psi = (*from_center)[lv.centers[pb]];
    require_state(psi != kUnreachable, "make_level: centers in different mesh components");
    level_edges.push_back({pa, pb, gaussian_edge_weight(psi, sigma)});
    dist_sum += psi;
  }
  lv.graph = build_graph(n_partitions, level_edges);
  if (!neighbor_pairs.empty()) {
    lv.avg_neighbor_distance = dist_sum / static_cast<double>(neighbor_pairs.size());
  }
  return lv;
}

}  // namespace detail

/// Builds the partition tree by splitting every partition of the current
/// level at once. Construction stops at the first level whose average
/// neighbor center distance falls below stop_distance, or at max_levels.
inline MeshHierarchy build_hierarchy(const TriangleMesh& mesh, double sigma,
                                     double stop_distance, std::size_t max_levels) {
  detail::require_arg(sigma > 0.0, "build_hierarchy: sigma must be positive");
  detail::require_arg(stop_distance > 0.0, "build_hierarchy: stop_distance must be positive");
  detail::require_arg(mesh.n_vertices() >= 2, "build_hierarchy: mesh too small");
  const SparseGraph mesh_graph = edge_length_graph(mesh);
  detail::require_arg(mesh_graph.is_connected(), "build_hierarchy: mesh must be connected");

  MeshHierarchy h;
  h.sigma = sigma;
  h.stop_distance = stop_distance;
  h.n_mesh_vertices = mesh.n_vertices();

  std::vector<std::size_t> membership(mesh.n_vertices(), 0);
  h.levels.push_back(detail::make_level(mesh_graph, sigma, membership, 1));

  for (std::size_t level = 0; level < max_levels; ++level) {
    const HierarchyLevel& cur = h.levels.back();
    if (cur.avg_neighbor_distance && *cur.avg_neighbor_distance < stop_distance) break;

    const std::size_t n_parents = cur.centers.size();
    std::vector<std::size_t> next(mesh.n_vertices(), 0);
    for (std::size_t p = 0; p < n_parents; ++p) {
      const auto& members = cur.members[p];
      detail::require_state(members.size() >= 2,
                            "build_hierarchy: partition of size 1 at level " +
                                std::to_string(level) +
                                "; increase stop_distance or lower max_levels");
      const SparseGraph sub = induced_subgraph(mesh_graph, members);
      const Bipartition split = bipartition(sub);
      for (std::size_t local : split.part_a) next[members[local]] = 2 * p;
      for (std::size_t local : split.part_b) next[members[local]] = 2 * p + 1;
    }
    h.levels.push_back(detail::make_level(mesh_graph, sigma, next, 2 * n_parents));
  }
  return h;
}

inline nlohmann::ordered_json hierarchy_to_json(const MeshHierarchy& h) {
  nlohmann::ordered_json j;
  j["format"] = "mesh-hierarchy/1";
  j["sigma"] = h.sigma;
  j["stop_distance"] = h.stop_distance;
  j["n_mesh_vertices"] = h.n_mesh_vertices;
  j["levels"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const auto& lv = h.levels[l];
    nlohmann::ordered_json jl;
    jl["n_partitions"] = lv.centers.size();
    jl["centers"] = lv.centers;
    std::vector<std::size_t> parents;
    if (l > 0) {
      parents.resize(lv.centers.size());
      for (std::size_t p = 0; p < parents.size(); ++p) parents[p] = p / 2;
    }
    jl["parents"] = parents;
    jl["membership"] = lv.membership;
    if (lv.avg_neighbor_distance) {
      jl["avg_neighbor_distance"] = *lv.avg_neighbor_distance;
    } else {
      jl["avg_neighbor_distance"] = nullptr;
    }
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const Edge& e : lv.graph.edges()) {
      edges.push_back(nlohmann::ordered_json::array({e.i, e.j, e.w}));
    }
    jl["edges"] = edges;
    j["levels"].push_back(std::move(jl));
  }
  return j;
}

inline MeshHierarchy hierarchy_from_json(const nlohmann::json& j) {
  detail::require_state(j.value("format", "") == "mesh-hierarchy/1",
                        "hierarchy_from_json: unknown format");
  MeshHierarchy h;
  h.sigma = j.at("sigma").get<double>();
  h.stop_distance = j.at("stop_distance").get<double>();
  h.n_mesh_vertices = j.at("n_mesh_vertices").get<std::size_t>();
  for (const auto& jl : j.at("levels")) {
    HierarchyLevel lv;
    const auto n_partitions = jl.at("n_partitions").get<std::size_t>();
    lv.centers = jl.at("centers").get<std::vector<std::size_t>>();
    lv.membership = jl.at("membership").get<std::vector<std::size_t>>();
    detail::require_state(lv.centers.size() == n_partitions,
                          "hierarchy_from_json: centers length mismatch");
    lv.members.assign(n_partitions, {});
    for (std::size_t v = 0; v < lv.membership.size(); ++v) {
      detail::require_state(lv.membership[v] < n_partitions,
                            "hierarchy_from_json: membership out of range");
      lv.members[lv.membership[v]].push_back(v);
    }
    if (!jl.at("avg_neighbor_distance").is_null()) {
      lv.avg_neighbor_distance = jl.at("avg_neighbor_distance").get<double>();
    }
    std::vector<Edge> edges;
    for (const auto& je : jl.at("edges")) {
      edges.push_back({je.at(0).get<std::size_t>(), je.at(1).get<std::size_t>(),
                       je.at(2).get<double>()});
    }
    lv.graph = build_graph(n_partitions, edges);
    h.levels.push_back(std::move(lv));
  }
  detail::require_state(!h.levels.empty(), "hierarchy_from_json: no levels");
  return h;
}

inline void save_hierarchy(const MeshHierarchy& h, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "save_hierarchy: cannot open " + path);
  out << hierarchy_to_json(h).dump(2) << "\n";
  detail::require_state(out.good(), "save_hierarchy: write failed for " + path);
}

inline MeshHierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path);
  detail::require_state(in.good(), "load_hierarchy: cannot open " + path);
  nlohmann::json j;
  in >> j;
  detail::require_state(!in.fail(), "load_hierarchy: malformed JSON in " + path);
  return hierarchy_from_json(j);
}

}  // namespace meshgcn
