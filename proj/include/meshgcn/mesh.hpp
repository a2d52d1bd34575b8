#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/graph.hpp"

namespace meshgcn {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }

  Vec3 normalized() const {
    const double n = norm();
    detail::require_state(n > 0.0, "Vec3::normalized: zero vector");
    return {x / n, y / n, z / n};
  }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Triangulated surface mesh. Faces are triples of vertex indices; edges are
/// derived, not stored.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;

  std::size_t n_vertices() const { return vertices.size(); }
  std::size_t n_faces() const { return faces.size(); }

  void validate() const {
    for (const auto& f : faces) {
      for (std::size_t v : f) {
        detail::require_arg(v < vertices.size(), "TriangleMesh: face index out of range");
      }
      detail::require_arg(f[0] != f[1] && f[1] != f[2] && f[0] != f[2],
                          "TriangleMesh: degenerate face (repeated vertex)");
    }
  }
};

/// Undirected edge set of the triangulation, each pair once with i < j.
inline std::vector<std::pair<std::size_t, std::size_t>> unique_edges(const TriangleMesh& mesh) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      std::size_t a = f[static_cast<std::size_t>(e)];
      std::size_t b = f[static_cast<std::size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      seen.emplace(a, b);
    }
  }
  return {seen.begin(), seen.end()};
}

/// Graph over mesh vertices with Euclidean edge lengths as weights. Used as
/// the substrate for geodesic distances along the surface.
inline SparseGraph edge_length_graph(const TriangleMesh& mesh) {
  std::vector<Edge> edges;
  for (const auto& [a, b] : unique_edges(mesh)) {
    const double len = distance(mesh.vertices[a], mesh.vertices[b]);
    detail::require_arg(len > 0.0, "edge_length_graph: zero-length edge between vertices " +
                                       std::to_string(a) + " and " + std::to_string(b));
    edges.push_back({a, b, len});
  }
  return build_graph(mesh.n_vertices(), edges);
}

/// Gaussian edge weight from a geodesic distance:
/// e = exp(-psi^2 / (2 sigma^2)) / (sigma sqrt(2 pi)).
inline double gaussian_edge_weight(double psi, double sigma) {
  detail::require_arg(sigma > 0.0, "gaussian_edge_weight: sigma must be positive");
  detail::require_arg(psi >= 0.0 && std::isfinite(psi),
                      "gaussian_edge_weight: distance must be finite and nonnegative");
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
  return (inv_sqrt_2pi / sigma) * std::exp(-(psi * psi) / (2.0 * sigma * sigma));
}

/// Mesh connectivity weighted by the Gaussian of edge length. For adjacent
/// vertices the geodesic distance is the edge length itself.
inline SparseGraph mesh_to_graph(const TriangleMesh& mesh, double sigma) {
  std::vector<Edge> edges;
  for (const auto& [a, b] : unique_edges(mesh)) {
    const double len = distance(mesh.vertices[a], mesh.vertices[b]);
    detail::require_arg(len > 0.0, "mesh_to_graph: zero-length edge between vertices " +
                                       std::to_string(a) + " and " + std::to_string(b));
    edges.push_back({a, b, gaussian_edge_weight(len, sigma)});
  }
  return build_graph(mesh.n_vertices(), edges);
}

/// Icosphere: regular icosahedron refined by edge-midpoint subdivision,
/// vertices projected to the given radius. Vertex count is
/// 10 * 4^subdivisions + 2.
inline TriangleMesh icosphere(int subdivisions, double radius = 1.0) {
  detail::require_arg(subdivisions >= 0 && subdivisions <= 7,
                      "icosphere: subdivisions must be in [0, 7]");
  detail::require_arg(radius > 0.0, "icosphere: radius must be positive");

  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
  };
  for (auto& v : mesh.vertices) v = v.normalized() * radius;
  mesh.faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
  };

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto mid = [&](std::size_t a, std::size_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 m = ((mesh.vertices[a] + mesh.vertices[b]) * 0.5).normalized() * radius;
      const std::size_t idx = mesh.vertices.size();
      mesh.vertices.push_back(m);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::size_t, 3>> next;
    next.reserve(mesh.faces.size() * 4);
    for (const auto& f : mesh.faces) {
      const std::size_t ab = mid(f[0], f[1]);
      const std::size_t bc = mid(f[1], f[2]);
      const std::size_t ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  return mesh;
}

inline void save_off(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "save_off: cannot open " + path);
  out << "OFF\n" << mesh.n_vertices() << " " << mesh.n_faces() << " 0\n";
  for (const auto& v : mesh.vertices) {
    out << format_double(v.x) << " " << format_double(v.y) << " " << format_double(v.z) << "\n";
  }
  for (const auto& f : mesh.faces) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  detail::require_state(out.good(), "save_off: write failed for " + path);
}

inline TriangleMesh load_off(const std::string& path) {
  std::ifstream in(path);
  detail::require_state(in.good(), "load_off: cannot open " + path);
  std::string token;
  in >> token;
  detail::require_state(token == "OFF", "load_off: missing OFF header in " + path);
  std::size_t nv = 0, nf = 0, ne = 0;
  in >> nv >> nf >> ne;
  detail::require_state(in.good(), "load_off: malformed counts in " + path);
  TriangleMesh mesh;
  mesh.vertices.resize(nv);
  for (auto& v : mesh.vertices) in >> v.x >> v.y >> v.z;
  mesh.faces.resize(nf);
  for (auto& f : mesh.faces) {
    std::size_t k = 0;
    in >> k;
    detail::require_state(k == 3, "load_off: non-triangular face in " + path);
    in >> f[0] >> f[1] >> f[2];
  }
  detail::require_state(!in.fail(), "load_off: truncated file " + path);
  mesh.validate();
  return mesh;
}

inline void save_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "save_obj: cannot open " + path);
  for (const auto& v : mesh.vertices) {
    out << "v " << format_double(v.x) << " " << format_double(v.y) << " " << format_double(v.z)
        << "\n";
  }
  for (const auto& f : mesh.faces) {
    out << "f " << (f[0] + 1) << " " << (f[1] + 1) << " " << (f[2] + 1) << "\n";
  }
  detail::require_state(out.good(), "save_obj: write failed for " + path);
}

inline TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  detail::require_state(in.good(), "load_obj: cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x >> v.y >> v.z;
      detail::require_state(!ls.fail(), "load_obj: malformed vertex line in " + path);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::size_t, 3> f{};
      std::size_t count = 0;
      std::string item;
      while (ls >> item) {
        detail::require_state(count < 3, "load_obj: non-triangular face in " + path);
        // Accept "v", "v/vt", "v//vn" face items; only the vertex id matters.
        f[count++] = static_cast<std::size_t>(std::stoull(item.substr(0, item.find('/')))) - 1;
      }
      detail::require_state(count == 3, "load_obj: non-triangular face in " + path);
      mesh.faces.push_back(f);
    }
  }
  mesh.validate();
  return mesh;
}

}  // namespace meshgcn
