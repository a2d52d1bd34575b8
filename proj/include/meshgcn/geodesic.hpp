#pragma once

#include <limits>
#include <queue>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/graph.hpp"

namespace meshgcn {

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Single-source shortest-path distances over a graph whose weights are edge
/// lengths (Dijkstra). Unreachable vertices get +infinity.
inline std::vector<double> shortest_distances(const SparseGraph& g, std::size_t source) {
  detail::require_arg(source < g.n_vertices(), "shortest_distances: source out of range");
  std::vector<double> dist(g.n_vertices(), kUnreachable);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (std::size_t k = g.row_ptr()[v]; k < g.row_ptr()[v + 1]; ++k) {
      const std::size_t u = g.col()[k];
      const double nd = d + g.weight()[k];
      if (nd < dist[u]) {
        dist[u] = nd;
        queue.emplace(nd, u);
      }
    }
  }
  return dist;
}

/// Shortest-path distance between two vertices; throws if no path exists.
inline double geodesic_distance(const SparseGraph& g, std::size_t a, std::size_t b) {
  detail::require_arg(a < g.n_vertices() && b < g.n_vertices(),
                      "geodesic_distance: vertex out of range");
  const auto dist = shortest_distances(g, a);
  detail::require_state(dist[b] != kUnreachable,
                        "geodesic_distance: vertices " + std::to_string(a) + " and " +
                            std::to_string(b) + " are not connected");
  return dist[b];
}

}  // namespace meshgcn
