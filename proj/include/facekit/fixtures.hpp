#pragma once

// Deterministic synthetic data for tests, oracles and CLI demos.
//
// Random numbers come from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Doubles are formed from the top 53 bits of each draw and
// normals by the Box-Muller transform, so no implementation-defined
// distribution is involved.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "facekit/emotion.hpp"
#include "facekit/error.hpp"
#include "facekit/metrics.hpp"
#include "facekit/model.hpp"

namespace facekit {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct FixtureSpec {
  std::uint64_t seed = 1;
  std::size_t vertex_count = 50;
  std::size_t shape_count = 3;
  std::size_t frame_count = 30;
  double frame_rate = 30.0;
  double noise_sigma = 0.0;   // mm, per coordinate
  bool as_positions = false;  // emit absolute positions instead of deltas

  void validate() const {
    if (vertex_count == 0 || shape_count == 0 || frame_count == 0) {
      throw invalid_error("fixture: counts must be positive");
    }
    if (!(frame_rate > 0.0)) throw invalid_error("fixture: frame_rate must be > 0");
    if (!(noise_sigma >= 0.0)) throw invalid_error("fixture: noise_sigma must be >= 0");
  }
};

struct KnownBlendFixture {
  BlendshapeModel model;
  AnimationSequence animation;
  WeightTrack truth;
};

/// Regular grid roughly the size of a face (x in [-50, 50], y in [-60, 60] mm).
inline Mesh make_grid_mesh(std::size_t vertex_count, Rng& rng) {
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(vertex_count))));
  const std::size_t rows = (vertex_count + cols - 1) / cols;
  Vector p(static_cast<Eigen::Index>(3 * vertex_count));
  for (std::size_t j = 0; j < vertex_count; ++j) {
    const double u = cols > 1 ? static_cast<double>(j % cols) / static_cast<double>(cols - 1) : 0.5;
    const double v = rows > 1 ? static_cast<double>(j / cols) / static_cast<double>(rows - 1) : 0.5;
    p[static_cast<Eigen::Index>(3 * j)] = -50.0 + 100.0 * u;
    p[static_cast<Eigen::Index>(3 * j + 1)] = -60.0 + 120.0 * v;
    p[static_cast<Eigen::Index>(3 * j + 2)] = 20.0 * std::cos(3.0 * (u - 0.5)) + rng.uniform(-0.5, 0.5);
  }
  return Mesh(std::move(p));
}

inline double condition_number(const Matrix& m) {
  if (m.cols() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  return smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
}

/// Model with well-conditioned Gaussian deltas and an animation that is exactly
/// D w_gt (plus optional noise) for a smooth w_gt inside [0.05, 0.95].
inline KnownBlendFixture make_known_blend_fixture(const FixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Mesh neutral = make_grid_mesh(spec.vertex_count, rng);
  const auto rows = static_cast<Eigen::Index>(3 * spec.vertex_count);
  const auto n = static_cast<Eigen::Index>(spec.shape_count);

  Matrix deltas(rows, n);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) deltas(r, c) = rng.normal();
    }
    ok = condition_number(deltas) <= 1e6;
  }
  if (!ok) throw invalid_error("fixture: could not draw linearly independent deltas in 100 attempts");

  ModelData data;
  data.neutral = neutral;
  data.deltas = deltas;
  for (Eigen::Index i = 0; i < n; ++i) data.shape_names.push_back("shape" + std::to_string(i));
  BlendshapeModel model(std::move(data));

  std::vector<double> freq(spec.shape_count), phase(spec.shape_count);
  for (std::size_t i = 0; i < spec.shape_count; ++i) {
    freq[i] = rng.uniform(0.2, 2.0);
    phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  std::vector<Vector> truth, frames;
  for (std::size_t t = 0; t < spec.frame_count; ++t) {
    const double time = static_cast<double>(t) / spec.frame_rate;
    Vector w(n);
    for (std::size_t i = 0; i < spec.shape_count; ++i) {
      w[static_cast<Eigen::Index>(i)] = 0.5 + 0.45 * std::sin(2.0 * std::numbers::pi * freq[i] * time + phase[i]);
    }
    Vector f = model.deltas() * w;
    if (spec.noise_sigma > 0.0) {
      for (Eigen::Index r = 0; r < rows; ++r) f[r] += spec.noise_sigma * rng.normal();
    }
    if (spec.as_positions) f += neutral.positions();
    truth.push_back(std::move(w));
    frames.push_back(std::move(f));
  }
  return {std::move(model), AnimationSequence(spec.frame_rate, std::move(frames), !spec.as_positions),
          WeightTrack(spec.frame_rate, std::move(truth))};
}

struct ClosureEvent {
  std::string label;
  double start = 0.0;  // s
  double end = 0.0;    // s
  double min_gap = 0.0;  // mm
};

struct BilabialFixtureSpec {
  std::uint64_t seed = 7;
  double frame_rate = 30.0;
  double duration = 4.0;        // s
  double open_gap = 5.0;        // mm, lip gap between closures
  double closure_threshold = 1.0;  // mm
  std::vector<ClosureEvent> events = {
      {"B", 0.40, 0.60, 0.2},
      {"M", 1.20, 1.45, 0.1},
      {"P", 2.00, 2.20, 3.0},
      {"B", 2.90, 3.10, 0.3},
  };
};

struct BilabialFixture {
  BlendshapeModel model;
  LipVertexPairs lips;
  AnimationSequence animation;  // absolute positions
  std::vector<PhonemeInterval> alignment;
  std::vector<ExpressionFeature> features;
  std::vector<std::size_t> mouth_vertices;
};

/// Five coincident upper/lower lip vertex pairs (closed mouth at rest), plus a
/// jaw vertex and a few cheek/brow vertices. The lips open to `open_gap` and
/// dip to each event's `min_gap` at the frame containing the event midpoint.
inline BilabialFixture make_bilabial_fixture(const BilabialFixtureSpec& spec) {
  if (!(spec.frame_rate > 0.0 && spec.duration > 0.0)) throw invalid_error("bilabial fixture: bad timing");
  Rng rng(spec.seed);
  constexpr std::size_t kPairs = 5;
  // Vertices: 0-4 upper lip, 5-9 lower lip, 10 jaw, 11-14 cheeks/brows.
  constexpr std::size_t kVertices = 15;
  Vector neutral(3 * kVertices);
  for (std::size_t k = 0; k < kPairs; ++k) {
    const double x = -20.0 + 10.0 * static_cast<double>(k);
    const double z = 10.0 - 0.2 * x * x / 10.0;
    neutral.segment<3>(static_cast<Eigen::Index>(3 * k)) << x, 0.0, z;
    neutral.segment<3>(static_cast<Eigen::Index>(3 * (k + kPairs))) << x, 0.0, z;
  }
  neutral.segment<3>(30) << 0.0, -35.0, 5.0;
  neutral.segment<3>(33) << -35.0, 10.0, 0.0;
  neutral.segment<3>(36) << 35.0, 10.0, 0.0;
  neutral.segment<3>(39) << -25.0, 45.0, 5.0;
  neutral.segment<3>(42) << 25.0, 45.0, 5.0;
  for (Eigen::Index r = 0; r < neutral.size(); ++r) neutral[r] += rng.uniform(-0.01, 0.01);
  for (std::size_t k = 0; k < kPairs; ++k) {  // keep the pairs exactly coincident
    neutral.segment<3>(static_cast<Eigen::Index>(3 * (k + kPairs))) =
        neutral.segment<3>(static_cast<Eigen::Index>(3 * k));
  }

  // Shapes: jaw_open drops the lower lip and jaw by 10 mm, upper_lip_raise lifts the upper lip 4 mm.
  ModelData data;
  data.neutral = Mesh(neutral);
  data.deltas = Matrix::Zero(3 * kVertices, 2);
  for (std::size_t k = 0; k < kPairs; ++k) {
    data.deltas(static_cast<Eigen::Index>(3 * (k + kPairs) + 1), 0) = -10.0;
    data.deltas(static_cast<Eigen::Index>(3 * k + 1), 1) = 4.0;
  }
  data.deltas(31, 0) = -10.0;
  data.deltas(32, 0) = -1.0;
  data.shape_names = {"jawOpen", "upperLipRaise"};
  data.jaw_shapes = {0};
  data.jaw_reference_vertex = 10;

  BilabialFixture fx;
  fx.model = BlendshapeModel(std::move(data));
  for (std::size_t k = 0; k < kPairs; ++k) fx.lips.pairs.emplace_back(k, k + kPairs);
  fx.lips.central = kPairs / 2;
  fx.lips.closure_threshold = spec.closure_threshold;

  const auto frames = static_cast<std::size_t>(std::llround(spec.duration * spec.frame_rate));
  std::vector<double> gap(frames, spec.open_gap);
  for (const auto& ev : spec.events) {
    const double center = 0.5 * (ev.start + ev.end);
    const double half = 0.5 * (ev.end - ev.start);
    for (std::size_t t = 0; t < frames; ++t) {
      const double s = static_cast<double>(t) / spec.frame_rate;
      const double ramp = std::min(1.0, std::abs(s - center) / (2.0 * half));
      gap[t] = std::min(gap[t], ev.min_gap + (spec.open_gap - ev.min_gap) * ramp);
    }
    const auto mid = static_cast<std::size_t>(std::floor(center * spec.frame_rate));
    if (mid < frames) gap[mid] = std::min(gap[mid], ev.min_gap);
    fx.alignment.push_back({ev.label, ev.start, ev.end});
  }

  std::vector<Vector> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Vector f = fx.model.neutral().positions();
    for (std::size_t k = 0; k < kPairs; ++k) {
      f[static_cast<Eigen::Index>(3 * k + 1)] += 0.5 * gap[t];
      f[static_cast<Eigen::Index>(3 * (k + kPairs) + 1)] -= 0.5 * gap[t];
    }
    f[31] -= 0.5 * gap[t];
    out.push_back(std::move(f));
  }
  fx.animation = AnimationSequence(spec.frame_rate, std::move(out), false);

  fx.features = {
      {"mouth_opening", ExpressionFeature::Kind::distance, {2, 7}, 10.0},
      {"mouth_width", ExpressionFeature::Kind::distance, {0, 4}, 10.0},
      {"jaw_drop", ExpressionFeature::Kind::region, {10}, 10.0},
  };
  fx.mouth_vertices = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return fx;
}

/// Per-sub-window classifier output for a clip of `duration` seconds under
/// `config`: a slow drift from neutral towards joy with sub-window noise.
inline std::vector<EmotionRecord> make_emotion_records(std::uint64_t seed, double duration,
                                                       const WindowConfig& config) {
  Rng rng(seed);
  std::vector<EmotionRecord> out;
  const auto plan = plan_windows(duration, config);
  for (std::size_t w = 0; w < plan.size(); ++w) {
    for (std::size_t s = 0; s < plan[w].sub_windows.size(); ++s) {
      const double u = plan[w].sub_windows[s].center() / duration;
      EmotionProbs::Array p{};
      for (auto& v : p) v = 0.05 + 0.1 * rng.uniform();
      p[4] += 2.0 * (1.0 - u);  // neutral
      p[3] += 2.0 * u;          // joy
      out.push_back({w, s, EmotionProbs::normalized(p)});
    }
  }
  return out;
}

}  // namespace facekit
