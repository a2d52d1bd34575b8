#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "meshgcn/core.hpp"

namespace meshgcn {

/// One undirected edge with a nonnegative weight. Vertex order within the
/// pair is not significant.
struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double w = 0.0;
};

/// Weighted undirected graph with dense vertex ids in [0, N). Canonical
/// storage keeps each edge once with i < j; an adjacency (CSR) view over
/// both directions is built at construction. Immutable after construction.
class SparseGraph {
 public:
  SparseGraph() = default;

  /// Validates and canonicalizes an edge list. Each undirected edge may be
  /// given once or twice; duplicates must agree within 1e-12 and are
  /// deduplicated. Rejects self-loops, out-of-range indices, and negative
  /// or non-finite weights.
  SparseGraph(std::size_t n_vertices, const std::vector<Edge>& edge_list)
      : n_(n_vertices) {
    std::map<std::pair<std::size_t, std::size_t>, double> canon;
    for (const Edge& e : edge_list) {
      detail::require_arg(e.i < n_ && e.j < n_,
                          "build_graph: edge (" + std::to_string(e.i) + "," +
                              std::to_string(e.j) + ") out of range for N=" +
                              std::to_string(n_));
      detail::require_arg(e.i != e.j,
                          "build_graph: self-loop at vertex " + std::to_string(e.i));
      detail::require_arg(std::isfinite(e.w) && e.w >= 0.0,
                          "build_graph: edge (" + std::to_string(e.i) + "," +
                              std::to_string(e.j) + ") has invalid weight");
      const auto key = std::minmax(e.i, e.j);
      auto [it, inserted] = canon.emplace(key, e.w);
      if (!inserted) {
        const double prev = it->second;
        const bool consistent =
            prev == e.w || std::abs(prev - e.w) <= 1e-12 * std::max(std::abs(prev), std::abs(e.w));
        detail::require_arg(consistent,
                            "build_graph: conflicting duplicate edge (" +
                                std::to_string(key.first) + "," + std::to_string(key.second) +
                                "): " + format_double(prev) + " vs " + format_double(e.w));
      }
    }
    edges_.reserve(canon.size());
    for (const auto& [key, w] : canon) edges_.push_back({key.first, key.second, w});
    build_adjacency();
  }

  std::size_t n_vertices() const { return n_; }
  std::size_t n_edges() const { return edges_.size(); }

  /// Canonical edge list, i < j, sorted lexicographically.
  const std::vector<Edge>& edges() const { return edges_; }

  /// Weighted degree D_ii = sum of incident edge weights.
  double degree(std::size_t v) const { return degrees_[v]; }
  const std::vector<double>& degrees() const { return degrees_; }

  /// Neighbor iteration: indices into col()/weight() for vertex v are
  /// [row_ptr()[v], row_ptr()[v+1]).
  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col() const { return col_; }
  const std::vector<double>& weight() const { return wval_; }

  /// Component id per vertex (0-based, by order of first discovery).
  /// Connectivity is structural: zero-weight edges still connect.
  std::vector<int> components() const {
    std::vector<int> comp(n_, -1);
    int next = 0;
    for (std::size_t s = 0; s < n_; ++s) {
      if (comp[s] >= 0) continue;
      comp[s] = next;
      std::queue<std::size_t> q;
      q.push(s);
      while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (std::size_t k = row_ptr_[u]; k < row_ptr_[u + 1]; ++k) {
          const std::size_t v = col_[k];
          if (comp[v] < 0) {
            comp[v] = next;
            q.push(v);
          }
        }
      }
      ++next;
    }
    return comp;
  }

  bool is_connected() const {
    if (n_ <= 1) return true;
    const auto comp = components();
    for (int c : comp) {
      if (c != 0) return false;
    }
    return true;
  }

 private:
  void build_adjacency() {
    degrees_.assign(n_, 0.0);
    std::vector<std::size_t> count(n_, 0);
    for (const Edge& e : edges_) {
      ++count[e.i];
      ++count[e.j];
      degrees_[e.i] += e.w;
      degrees_[e.j] += e.w;
    }
    row_ptr_.assign(n_ + 1, 0);
    for (std::size_t v = 0; v < n_; ++v) row_ptr_[v + 1] = row_ptr_[v] + count[v];
    col_.assign(row_ptr_[n_], 0);
    wval_.assign(row_ptr_[n_], 0.0);
    std::vector<std::size_t> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
    // edges_ is sorted, so per-row columns come out ascending.
    for (const Edge& e : edges_) {
      col_[cursor[e.i]] = e.j;
      wval_[cursor[e.i]++] = e.w;
    }
    for (const Edge& e : edges_) {
      col_[cursor[e.j]] = e.i;
      wval_[cursor[e.j]++] = e.w;
    }
    for (std::size_t v = 0; v < n_; ++v) {
      std::vector<std::pair<std::size_t, double>> row;
      row.reserve(row_ptr_[v + 1] - row_ptr_[v]);
      for (std::size_t k = row_ptr_[v]; k < row_ptr_[v + 1]; ++k) row.emplace_back(col_[k], wval_[k]);
      std::sort(row.begin(), row.end());
      for (std::size_t k = row_ptr_[v]; k < row_ptr_[v + 1]; ++k) {
        col_[k] = row[k - row_ptr_[v]].first;
        wval_[k] = row[k - row_ptr_[v]].second;
      }
    }
  }

  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> degrees_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_;
  std::vector<double> wval_;
};

inline SparseGraph build_graph(std::size_t n_vertices, const std::vector<Edge>& edge_list) {
  return SparseGraph(n_vertices, edge_list);
}

/// Result of composing several graphs into one multi-component graph.
struct BlockDiagonalGraph {
  SparseGraph graph;
  std::vector<std::size_t> component_of;  ///< input-graph index per vertex
  std::vector<std::size_t> offsets;       ///< vertex offset of each input graph
};

/// Stacks graphs along the diagonal in input order; no cross-component edges.
inline BlockDiagonalGraph block_diagonalize(const std::vector<SparseGraph>& graphs) {
  detail::require_arg(!graphs.empty(), "block_diagonalize: empty graph list");
  BlockDiagonalGraph out;
  std::size_t total = 0;
  for (const SparseGraph& g : graphs) {
    out.offsets.push_back(total);
    total += g.n_vertices();
  }
  std::vector<Edge> edges;
  out.component_of.assign(total, 0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const std::size_t off = out.offsets[gi];
    for (std::size_t v = 0; v < graphs[gi].n_vertices(); ++v) out.component_of[off + v] = gi;
    for (const Edge& e : graphs[gi].edges()) edges.push_back({e.i + off, e.j + off, e.w});
  }
  out.graph = SparseGraph(total, edges);
  return out;
}

/// Induced subgraph over `vertices` (local ids follow the given order).
/// Returns the subgraph; `vertices` itself is the local->global map.
inline SparseGraph induced_subgraph(const SparseGraph& g, const std::vector<std::size_t>& vertices) {
  std::vector<std::size_t> local(g.n_vertices(), std::size_t(-1));
  for (std::size_t k = 0; k < vertices.size(); ++k) {
    detail::require_arg(vertices[k] < g.n_vertices(), "induced_subgraph: vertex out of range");
    local[vertices[k]] = k;
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    if (local[e.i] != std::size_t(-1) && local[e.j] != std::size_t(-1)) {
      edges.push_back({local[e.i], local[e.j], e.w});
    }
  }
  return SparseGraph(vertices.size(), edges);
}

/// Plain-text edge-list format: header "N E", then E lines "i j w".
inline void save_edge_list(const SparseGraph& g, std::ostream& os) {
  os << g.n_vertices() << " " << g.n_edges() << "\n";
  for (const Edge& e : g.edges()) {
    os << e.i << " " << e.j << " " << format_double(e.w) << "\n";
  }
}

inline void save_edge_list(const SparseGraph& g, const std::string& path) {
  std::ofstream os(path);
  detail::require_state(bool(os), "cannot open for writing: " + path);
  save_edge_list(g, os);
}

inline SparseGraph load_edge_list(std::istream& is) {
  std::size_t n = 0, m = 0;
  is >> n >> m;
  detail::require_state(bool(is), "edge list: malformed header (expected 'N E')");
  std::vector<Edge> edges(m);
  for (std::size_t k = 0; k < m; ++k) {
    is >> edges[k].i >> edges[k].j >> edges[k].w;
    detail::require_state(bool(is), "edge list: malformed edge line " + std::to_string(k));
  }
  return SparseGraph(n, edges);
}

inline SparseGraph load_edge_list(const std::string& path) {
  std::ifstream is(path);
  detail::require_state(bool(is), "cannot open: " + path);
  return load_edge_list(is);
}

}  // namespace meshgcn
