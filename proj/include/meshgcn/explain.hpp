#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "meshgcn/core.hpp"
#include "meshgcn/hierarchy.hpp"
#include "meshgcn/mesh.hpp"
#include "meshgcn/network.hpp"
#include "meshgcn/train.hpp"

namespace meshgcn {

/// Importance of each feature map: global average of the class-score
/// gradient over vertices, one scalar per map.
inline std::vector<double> neuron_importance(const Mat<double>& grads) {
  detail::require_arg(grads.rows() >= 1 && grads.cols() >= 1,
                      "neuron_importance: empty gradient matrix");
  std::vector<double> alpha(grads.cols(), 0.0);
  for (std::size_t n = 0; n < grads.rows(); ++n) {
    for (std::size_t k = 0; k < grads.cols(); ++k) alpha[k] += grads(n, k);
  }
  const double inv_n = 1.0 / static_cast<double>(grads.rows());
  for (auto& a : alpha) a *= inv_n;
  return alpha;
}

struct ClassActivationMap {
  std::size_t level = 0;
  int class_id = 0;
  std::vector<double> values;                         // per vertex at `level`
  std::optional<std::vector<double>> finest_values;   // after tree upsampling
};

/// Per-vertex importance-weighted sum of the feature maps, negatives
/// clipped to zero.
inline ClassActivationMap class_activation_map(const std::vector<double>& alpha,
                                               const Mat<double>& maps, std::size_t level,
                                               int class_id) {
  detail::require_arg(alpha.size() == maps.cols(),
                      "class_activation_map: alpha length must match map count");
  ClassActivationMap cam;
  cam.level = level;
  cam.class_id = class_id;
  cam.values.assign(maps.rows(), 0.0);
  for (std::size_t n = 0; n < maps.rows(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < maps.cols(); ++k) acc += alpha[k] * maps(n, k);
    cam.values[n] = std::max(acc, 0.0);
  }
  return cam;
}

inline void upsample_cam(ClassActivationMap& cam, const MeshHierarchy& h) {
  cam.finest_values = upsample_to_finest(h, cam.values, cam.level);
}

/// CAM of a single sample: forward in inference mode, then Eq. 4/5 on the
/// post-ResBlock feature maps against the class logit.
template <typename T>
ClassActivationMap sample_cam(ResGcnModel<T>& model, const Mat<T>& x, int class_id,
                              std::size_t level) {
  std::vector<Mat<T>> batch{x};
  model.forward(batch, false);
  const Mat<double> maps = model.post_activation()[0].template cast<double>();
  const Mat<double> grads = model.post_activation_gradient(class_id).template cast<double>();
  return class_activation_map(neuron_importance(grads), maps, level, class_id);
}

/// Mean finest-level CAM over true positives of class c (samples whose
/// 0.5-threshold prediction and label both equal c). Per-sample CAMs are
/// averaged without normalization, in sample order.
template <typename T>
ClassActivationMap average_tp_cam(ResGcnModel<T>& model, const std::vector<Mat<T>>& xs,
                                  const std::vector<int>& labels, int class_id,
                                  const MeshHierarchy& h) {
  detail::require_arg(xs.size() == labels.size(), "average_tp_cam: size mismatch");
  detail::require_arg(class_id == 0 || class_id == 1, "average_tp_cam: class must be 0 or 1");
  const std::size_t level = h.finest() - model.config().n_blocks;
  const std::vector<double> probs = predict_probs(model, xs);

  ClassActivationMap avg;
  avg.class_id = class_id;
  std::vector<double> sum;
  std::size_t n_tp = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const int predicted = probs[s] >= 0.5 ? 1 : 0;
    if (predicted != class_id || labels[s] != class_id) continue;
    ClassActivationMap cam = sample_cam(model, xs[s], class_id, level);
    upsample_cam(cam, h);
    if (sum.empty()) sum.assign(cam.finest_values->size(), 0.0);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*cam.finest_values)[i];
    ++n_tp;
  }
  detail::require_state(n_tp > 0, "average_tp_cam: no true positives for class " +
                                      std::to_string(class_id));
  for (auto& v : sum) v /= static_cast<double>(n_tp);
  avg.level = h.finest();
  avg.values = sum;
  avg.finest_values = std::move(sum);
  return avg;
}

inline std::vector<double> normalized_for_export(std::vector<double> values) {
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax > 0.0) {
    for (auto& v : values) v /= vmax;
  }
  return values;
}

inline void export_cam_csv(const std::vector<double>& values, const std::string& path) {
  std::ofstream out(path);
  detail::require_state(out.good(), "export_cam_csv: cannot open " + path);
  out << "vertex_index,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << i << "," << format_double(values[i]) << "\n";
  }
  detail::require_state(out.good(), "export_cam_csv: write failed for " + path);
}

/// ASCII PLY with a per-vertex `quality` scalar, readable by common mesh
/// viewers.
inline void export_cam_ply(const TriangleMesh& mesh, const std::vector<double>& per_vertex,
                           const std::string& path) {
  detail::require_arg(per_vertex.size() == mesh.n_vertices(),
                      "export_cam_ply: value count must match mesh vertices");
  std::ofstream out(path);
  detail::require_state(out.good(), "export_cam_ply: cannot open " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.n_vertices() << "\n";
  out << "property float x\nproperty float y\nproperty float z\nproperty float quality\n";
  out << "element face " << mesh.n_faces() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
    const auto& p = mesh.vertices[v];
    out << format_double(p.x) << " " << format_double(p.y) << " " << format_double(p.z) << " "
        << format_double(per_vertex[v]) << "\n";
  }
  for (const auto& f : mesh.faces) {
    out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  }
  detail::require_state(out.good(), "export_cam_ply: write failed for " + path);
}

}  // namespace meshgcn
