#pragma once

// Random problem generators shared by the unit and acceptance tests.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "facekit/fixtures.hpp"
#include "facekit/model.hpp"

namespace support {

using facekit::Matrix;
using facekit::Rng;
using facekit::Vector;

struct RandomModelSpec {
  std::size_t vertices = 20;
  std::size_t shapes = 5;
  bool random_active = false;   // drop a random subset of shapes from the active set
  std::size_t cancel_pairs = 0;
  std::size_t symmetry_pairs = 0;
  std::size_t jaw_shapes = 0;   // the first k shapes drive the jaw vertex
};

/// Distinct unordered shape pairs drawn without replacement.
inline std::vector<facekit::IndexPair> random_pairs(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<facekit::IndexPair> all;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(i, j);
  }
  std::vector<facekit::IndexPair> out;
  while (out.size() < count && !all.empty()) {
    const auto k = rng.index(all.size());
    out.push_back(all[k]);
    all.erase(all.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

inline facekit::BlendshapeModel random_model(const RandomModelSpec& spec, Rng& rng) {
  facekit::ModelData d;
  d.neutral = facekit::make_grid_mesh(spec.vertices, rng);
  d.deltas = Matrix(3 * spec.vertices, spec.shapes);
  for (Eigen::Index c = 0; c < d.deltas.cols(); ++c) {
    for (Eigen::Index r = 0; r < d.deltas.rows(); ++r) d.deltas(r, c) = rng.normal();
  }
  for (std::size_t i = 0; i < spec.shapes; ++i) d.shape_names.push_back("s" + std::to_string(i));
  if (spec.random_active) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < spec.shapes; ++i) {
      if (rng.uniform() < 0.8) active.push_back(i);
    }
    if (active.empty()) active.push_back(rng.index(spec.shapes));
    d.active_set = active;
  }
  d.cancel_pairs = random_pairs(spec.shapes, spec.cancel_pairs, rng);
  d.symmetry_pairs = random_pairs(spec.shapes, spec.symmetry_pairs, rng);
  for (std::size_t i = 0; i < std::min(spec.jaw_shapes, spec.shapes); ++i) d.jaw_shapes.push_back(i);
  d.jaw_reference_vertex = rng.index(spec.vertices);
  return facekit::BlendshapeModel(std::move(d));
}

/// D w for w uniform in [0, 1], plus Gaussian noise.
inline Vector random_target(const facekit::BlendshapeModel& m, double noise, Rng& rng) {
  Vector w(static_cast<Eigen::Index>(m.shape_count()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform();
  Vector t = m.deltas() * w;
  for (Eigen::Index r = 0; r < t.size(); ++r) t[r] += noise * rng.normal();
  return t;
}

}  // namespace support
