#pragma once

// Delta-blendshape model: v = v0 + D w, with D stored shape-major (one
// column per shape). Coordinates are millimeters throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "facekit/error.hpp"

namespace facekit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexPair = std::pair<std::size_t, std::size_t>;

namespace detail {

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void require_strictly_increasing(const std::vector<std::size_t>& idx, const char* what) {
  for (std::size_t k = 1; k < idx.size(); ++k) {
    if (idx[k] <= idx[k - 1]) {
      throw invalid_error(std::string(what) + ": indices must be strictly increasing (position " +
                          std::to_string(k) + ")");
    }
  }
}

}  // namespace detail

class Mesh {
 public:
  Mesh() = default;

  explicit Mesh(Vector positions) : positions_(std::move(positions)) {
    if (positions_.size() == 0 || positions_.size() % 3 != 0) {
      throw shape_error("mesh: coordinate count " + std::to_string(positions_.size()) +
                        " is not a positive multiple of 3");
    }
    if (!positions_.allFinite()) throw invalid_error("mesh: non-finite coordinate");
  }

  std::size_t vertex_count() const { return static_cast<std::size_t>(positions_.size()) / 3; }
  const Vector& positions() const { return positions_; }

  Eigen::Vector3d vertex(std::size_t j) const {
    return positions_.segment<3>(static_cast<Eigen::Index>(3 * j));
  }

 private:
  Vector positions_;
};

/// Raw fields of a blendshape model, validated when wrapped in BlendshapeModel.
struct ModelData {
  Mesh neutral;
  Matrix deltas;  // 3V x N
  std::vector<std::string> shape_names;
  std::optional<std::vector<std::size_t>> active_set;  // nullopt: every shape
  std::vector<IndexPair> cancel_pairs;
  std::vector<IndexPair> symmetry_pairs;
  std::vector<std::size_t> jaw_shapes;
  std::size_t jaw_reference_vertex = 0;
};

class BlendshapeModel {
 public:
  BlendshapeModel() = default;

  explicit BlendshapeModel(ModelData data) : d_(std::move(data)) {
    const auto rows = static_cast<std::size_t>(d_.deltas.rows());
    const std::size_t n = shape_count();
    if (d_.neutral.vertex_count() == 0) throw shape_error("model: neutral mesh is empty");
    if (n > 0) expect_size(3 * vertex_count(), rows, "model: delta column length");
    if (!d_.deltas.allFinite()) throw invalid_error("model: non-finite delta");
    if (d_.shape_names.empty()) {
      for (std::size_t i = 0; i < n; ++i) d_.shape_names.push_back("shape" + std::to_string(i));
    }
    expect_size(n, d_.shape_names.size(), "model: shape name count");

    if (!d_.active_set) {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      d_.active_set = std::move(all);
    }
    auto& active = *d_.active_set;
    std::sort(active.begin(), active.end());
    detail::require_strictly_increasing(active, "model: active_set");
    for (auto i : active) check_shape(i, "active_set");

    check_pairs(d_.cancel_pairs, "cancel_pairs");
    check_pairs(d_.symmetry_pairs, "symmetry_pairs");
    for (auto i : d_.jaw_shapes) check_shape(i, "jaw_shapes");
    if (d_.jaw_reference_vertex >= vertex_count()) {
      throw shape_error("model: jaw_reference_vertex " + std::to_string(d_.jaw_reference_vertex) +
                        " out of range for " + std::to_string(vertex_count()) + " vertices");
    }
    active_mask_.assign(n, false);
    for (auto i : active) active_mask_[i] = true;
  }

  /// Builds D from full expression meshes, column i = expressions[i] - neutral.
  static BlendshapeModel from_expressions(const Mesh& neutral, const std::vector<Mesh>& expressions,
                                          std::vector<std::string> names = {}) {
    ModelData data;
    data.neutral = neutral;
    data.deltas.resize(neutral.positions().size(), static_cast<Eigen::Index>(expressions.size()));
    for (std::size_t i = 0; i < expressions.size(); ++i) {
      expect_size(neutral.vertex_count(), expressions[i].vertex_count(), "expression mesh vertex count");
      data.deltas.col(static_cast<Eigen::Index>(i)) = expressions[i].positions() - neutral.positions();
    }
    data.shape_names = std::move(names);
    return BlendshapeModel(std::move(data));
  }

  std::size_t vertex_count() const { return d_.neutral.vertex_count(); }
  std::size_t shape_count() const { return static_cast<std::size_t>(d_.deltas.cols()); }

  const Mesh& neutral() const { return d_.neutral; }
  const Matrix& deltas() const { return d_.deltas; }
  const std::vector<std::string>& shape_names() const { return d_.shape_names; }
  const std::vector<std::size_t>& active_set() const { return *d_.active_set; }
  bool is_active(std::size_t shape) const { return active_mask_.at(shape); }
  const std::vector<IndexPair>& cancel_pairs() const { return d_.cancel_pairs; }
  const std::vector<IndexPair>& symmetry_pairs() const { return d_.symmetry_pairs; }
  const std::vector<std::size_t>& jaw_shapes() const { return d_.jaw_shapes; }
  std::size_t jaw_reference_vertex() const { return d_.jaw_reference_vertex; }

  const ModelData& data() const { return d_; }

 private:
  void check_shape(std::size_t i, const char* what) const {
    if (i >= shape_count()) {
      throw shape_error(std::string("model: ") + what + " references shape " + std::to_string(i) +
                        " but the model has " + std::to_string(shape_count()) + " shapes");
    }
  }

  void check_pairs(const std::vector<IndexPair>& pairs, const char* what) const {
    for (const auto& [a, b] : pairs) {
      check_shape(a, what);
      check_shape(b, what);
      if (a == b) {
        throw invalid_error(std::string("model: ") + what + " pairs shape " + std::to_string(a) +
                            " with itself");
      }
    }
  }

  ModelData d_;
  std::vector<bool> active_mask_;
};

/// v0 + D w. No clamping of w.
inline Mesh reconstruct(const BlendshapeModel& model, const Eigen::Ref<const Vector>& w) {
  expect_size(model.shape_count(), static_cast<std::size_t>(w.size()),
              "reconstruct: weight dimension N");
  if (!w.allFinite()) throw invalid_error("reconstruct: non-finite weight");
  if (model.shape_count() == 0) return model.neutral();
  return Mesh(model.neutral().positions() + model.deltas() * w);
}

class VertexSelector {
 public:
  VertexSelector() = default;

  explicit VertexSelector(std::vector<std::size_t> indices,
                          std::optional<std::vector<double>> weights = std::nullopt)
      : indices_(std::move(indices)), weights_(std::move(weights)) {
    detail::require_strictly_increasing(indices_, "selector");
    if (weights_) {
      expect_size(indices_.size(), weights_->size(), "selector: weight count");
      for (std::size_t k = 0; k < weights_->size(); ++k) {
        const double wk = (*weights_)[k];
        if (!(wk > 0.0) || !std::isfinite(wk)) {
          throw invalid_error("selector: weight at position " + std::to_string(k) +
                              " must be finite and > 0");
        }
      }
    }
  }

  static VertexSelector all(std::size_t vertex_count) {
    std::vector<std::size_t> idx(vertex_count);
    for (std::size_t j = 0; j < vertex_count; ++j) idx[j] = j;
    return VertexSelector(std::move(idx));
  }

  const std::vector<std::size_t>& indices() const { return indices_; }
  const std::optional<std::vector<double>>& weights() const { return weights_; }
  std::size_t size() const { return indices_.size(); }

  /// Row scale applied to each coordinate of the k-th selected vertex.
  double row_scale(std::size_t k) const { return weights_ ? std::sqrt((*weights_)[k]) : 1.0; }

  void check_bounds(std::size_t vertex_count) const {
    for (auto j : indices_) {
      if (j >= vertex_count) {
        throw shape_error("selector: vertex index " + std::to_string(j) + " out of range for " +
                          std::to_string(vertex_count) + " vertices");
      }
    }
  }

 private:
  std::vector<std::size_t> indices_;
  std::optional<std::vector<double>> weights_;
};

/// Gathers the selected vertices' coordinates, scaled by sqrt(weight).
inline Vector apply_selector(const VertexSelector& selector, const Eigen::Ref<const Vector>& data) {
  if (data.size() % 3 != 0) throw shape_error("selector: data length is not a multiple of 3");
  selector.check_bounds(static_cast<std::size_t>(data.size()) / 3);
  Vector out(static_cast<Eigen::Index>(3 * selector.size()));
  for (std::size_t k = 0; k < selector.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(3 * selector.indices()[k]);
    out.segment<3>(static_cast<Eigen::Index>(3 * k)) = selector.row_scale(k) * data.segment<3>(src);
  }
  return out;
}

/// Row-wise selection of a 3V x N matrix; equivalent to M * D.
inline Matrix apply_selector_rows(const VertexSelector& selector, const Eigen::Ref<const Matrix>& data) {
  if (data.rows() % 3 != 0) throw shape_error("selector: row count is not a multiple of 3");
  selector.check_bounds(static_cast<std::size_t>(data.rows()) / 3);
  Matrix out(static_cast<Eigen::Index>(3 * selector.size()), data.cols());
  for (std::size_t k = 0; k < selector.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(3 * selector.indices()[k]);
    out.middleRows<3>(static_cast<Eigen::Index>(3 * k)) = selector.row_scale(k) * data.middleRows<3>(src);
  }
  return out;
}

class AnimationSequence {
 public:
  AnimationSequence() = default;

  AnimationSequence(double frame_rate, std::vector<Vector> frames, bool is_delta)
      : frame_rate_(frame_rate), frames_(std::move(frames)), is_delta_(is_delta) {
    if (!(frame_rate_ > 0.0) || !std::isfinite(frame_rate_)) {
      throw invalid_error("animation: frame_rate must be > 0");
    }
    for (std::size_t t = 0; t < frames_.size(); ++t) {
      if (frames_[t].size() % 3 != 0 || frames_[t].size() != frames_.front().size()) {
        throw shape_error("animation: frame " + std::to_string(t) + " has " +
                          std::to_string(frames_[t].size()) + " coordinates, expected " +
                          std::to_string(frames_.front().size()));
      }
      if (!frames_[t].allFinite()) {
        throw invalid_error("animation: frame " + std::to_string(t) + " has a non-finite coordinate");
      }
    }
  }

  double frame_rate() const { return frame_rate_; }
  bool is_delta() const { return is_delta_; }
  bool empty() const { return frames_.empty(); }
  std::size_t frame_count() const { return frames_.size(); }
  std::size_t vertex_count() const {
    return frames_.empty() ? 0 : static_cast<std::size_t>(frames_.front().size()) / 3;
  }
  const std::vector<Vector>& frames() const { return frames_; }
  const Vector& frame(std::size_t t) const { return frames_.at(t); }
  double duration() const { return static_cast<double>(frames_.size()) / frame_rate_; }

  /// Same animation expressed as displacements from `neutral`.
  AnimationSequence to_deltas(const Mesh& neutral) const {
    if (is_delta_) {
      check_vertices(neutral);
      return *this;
    }
    return offset(neutral, -1.0, true);
  }

  AnimationSequence to_positions(const Mesh& neutral) const {
    if (!is_delta_) {
      check_vertices(neutral);
      return *this;
    }
    return offset(neutral, 1.0, false);
  }

 private:
  void check_vertices(const Mesh& neutral) const {
    if (!frames_.empty()) expect_size(neutral.vertex_count(), vertex_count(), "animation vertex count");
  }

  AnimationSequence offset(const Mesh& neutral, double sign, bool as_delta) const {
    check_vertices(neutral);
    std::vector<Vector> out;
    out.reserve(frames_.size());
    for (const auto& f : frames_) out.push_back(f + sign * neutral.positions());
    return AnimationSequence(frame_rate_, std::move(out), as_delta);
  }

  double frame_rate_ = 30.0;
  std::vector<Vector> frames_;
  bool is_delta_ = true;
};

class WeightTrack {
 public:
  WeightTrack() = default;

  WeightTrack(double frame_rate, std::vector<Vector> weights)
      : frame_rate_(frame_rate), weights_(std::move(weights)) {
    if (!(frame_rate_ > 0.0)) throw invalid_error("weight track: frame_rate must be > 0");
    for (std::size_t t = 0; t < weights_.size(); ++t) {
      expect_size(static_cast<std::size_t>(weights_.front().size()),
                  static_cast<std::size_t>(weights_[t].size()),
                  "weight track: frame " + std::to_string(t) + " dimension");
      for (Eigen::Index i = 0; i < weights_[t].size(); ++i) {
        const double v = weights_[t][i];
        if (!(v >= 0.0 && v <= 1.0)) {
          throw invalid_error("weight track: frame " + std::to_string(t) + " shape " +
                              std::to_string(i) + " weight " + std::to_string(v) +
                              " outside [0, 1]");
        }
      }
    }
  }

  double frame_rate() const { return frame_rate_; }
  std::size_t frame_count() const { return weights_.size(); }
  std::size_t shape_count() const {
    return weights_.empty() ? 0 : static_cast<std::size_t>(weights_.front().size());
  }
  const std::vector<Vector>& weights() const { return weights_; }
  const Vector& frame(std::size_t t) const { return weights_.at(t); }

 private:
  double frame_rate_ = 30.0;
  std::vector<Vector> weights_;
};

}  // namespace facekit
