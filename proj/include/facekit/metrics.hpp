#pragma once

// Animation quality metrics: spectral jitter, discrete Frechet distance,
// bilabial closure score and expressiveness, plus the lip-gap measurement
// shared with the jaw-constrained solve.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "facekit/error.hpp"
#include "facekit/model.hpp"

namespace facekit {

inline constexpr Eigen::Index kVerticalAxis = 1;

struct LipVertexPairs {
  std::vector<IndexPair> pairs;  // (upper lip vertex, lower lip vertex)
  std::size_t central = 0;       // index into `pairs` used for delta_lip
  double closure_threshold = 1.0;  // mm

  void validate(std::size_t vertex_count) const {
    if (pairs.empty()) throw invalid_error("lip pairs: at least one pair is required");
    if (central >= pairs.size()) throw shape_error("lip pairs: central pair index out of range");
    if (!(closure_threshold > 0.0)) throw invalid_error("lip pairs: closure_threshold must be > 0");
    for (const auto& [u, l] : pairs) {
      if (u >= vertex_count || l >= vertex_count) {
        throw shape_error("lip pairs: vertex index " + std::to_string(std::max(u, l)) + " out of range for " +
                          std::to_string(vertex_count) + " vertices");
      }
    }
  }
};

struct LipGaps {
  std::vector<double> per_pair;  // mm
  double central = 0.0;          // mm
};

/// Vertical opening max(y_upper - y_lower, 0) for each pair of a positions frame.
inline LipGaps lip_gap(const Eigen::Ref<const Vector>& positions, const LipVertexPairs& lips) {
  if (positions.size() % 3 != 0) throw shape_error("lip_gap: frame length is not a multiple of 3");
  lips.validate(static_cast<std::size_t>(positions.size()) / 3);
  LipGaps out;
  out.per_pair.reserve(lips.pairs.size());
  for (const auto& [u, l] : lips.pairs) {
    const double yu = positions[static_cast<Eigen::Index>(3 * u) + kVerticalAxis];
    const double yl = positions[static_cast<Eigen::Index>(3 * l) + kVerticalAxis];
    out.per_pair.push_back(std::max(yu - yl, 0.0));
  }
  out.central = out.per_pair[lips.central];
  return out;
}

inline LipGaps lip_gap(const Mesh& neutral, const Eigen::Ref<const Vector>& delta, const LipVertexPairs& lips) {
  expect_size(static_cast<std::size_t>(neutral.positions().size()), static_cast<std::size_t>(delta.size()),
              "lip_gap: delta length");
  return lip_gap(neutral.positions() + delta, lips);
}

/// Restricts every frame to the selected vertices (e.g. the mouth region).
inline std::vector<Vector> select_frames(const std::vector<Vector>& frames, const VertexSelector& region) {
  std::vector<Vector> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(apply_selector(region, f));
  return out;
}

/// Fraction of spectral energy above `cutoff_hz` in the RMS-normalized vertex
/// acceleration, averaged over coordinate channels. 0 for a still animation.
inline double fourier_jitter(const std::vector<Vector>& frames, double frame_rate, double cutoff_hz) {
  if (frames.size() < 8) {
    throw invalid_error("fourier_jitter: need at least 8 frames, got " + std::to_string(frames.size()));
  }
  if (!(frame_rate > 0.0)) throw invalid_error("fourier_jitter: frame_rate must be > 0");
  if (!(cutoff_hz >= 0.0 && cutoff_hz < 0.5 * frame_rate)) {
    throw invalid_error("fourier_jitter: cutoff_hz must lie in [0, frame_rate / 2)");
  }
  const Eigen::Index channels = frames.front().size();
  for (const auto& f : frames) expect_size(static_cast<std::size_t>(channels), static_cast<std::size_t>(f.size()), "fourier_jitter: frame length");

  const std::size_t len = frames.size() - 2;
  Eigen::FFT<double> fft;
  std::vector<double> acc(len);
  std::vector<std::complex<double>> spectrum;
  double ratio_sum = 0.0;
  std::size_t counted = 0;

  for (Eigen::Index c = 0; c < channels; ++c) {
    double peak = 0.0;
    for (const auto& f : frames) peak = std::max(peak, std::abs(f[c]));
    double sq = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      acc[t] = frames[t + 2][c] - 2.0 * frames[t + 1][c] + frames[t][c];
      sq += acc[t] * acc[t];
    }
    const double rms = std::sqrt(sq / static_cast<double>(len));
    // A still (or exactly linear) channel only carries rounding noise.
    if (rms == 0.0 || rms <= 1e-12 * peak) continue;
    for (auto& a : acc) a /= rms;

    fft.fwd(spectrum, acc);
    double total = 0.0;
    double high = 0.0;
    for (std::size_t k = 0; 2 * k <= len; ++k) {
      const double weight = (k == 0 || 2 * k == len) ? 1.0 : 2.0;
      const double e = weight * std::norm(spectrum[k]);
      total += e;
      if (static_cast<double>(k) * frame_rate / static_cast<double>(len) > cutoff_hz) high += e;
    }
    if (total > 0.0) {
      ratio_sum += high / total;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : ratio_sum / static_cast<double>(counted);
}

/// Discrete Frechet distance between two frame sequences, each frame a point
/// under the Euclidean norm.
inline double frechet_distance(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.empty() || b.empty()) throw invalid_error("frechet_distance: sequences must be non-empty");
  const Eigen::Index dim = a.front().size();
  for (const auto& f : a) expect_size(static_cast<std::size_t>(dim), static_cast<std::size_t>(f.size()), "frechet_distance: frame dimension");
  for (const auto& f : b) expect_size(static_cast<std::size_t>(dim), static_cast<std::size_t>(f.size()), "frechet_distance: frame dimension");

  const std::size_t m = b.size();
  std::vector<double> prev(m), cur(m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = (a[i] - b[j]).norm();
      double reach;
      if (i == 0 && j == 0) {
        reach = 0.0;
      } else if (i == 0) {
        reach = cur[j - 1];
      } else if (j == 0) {
        reach = prev[0];
      } else {
        reach = std::min({prev[j], prev[j - 1], cur[j - 1]});
      }
      cur[j] = std::max(d, reach);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

struct PhonemeInterval {
  std::string label;
  double start = 0.0;  // s
  double end = 0.0;    // s
};

inline bool is_bilabial(const std::string& label) {
  std::string up;
  for (char ch : label) {
    if (std::isalpha(static_cast<unsigned char>(ch))) up += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return up == "M" || up == "B" || up == "P";
}

struct BilabialInstance {
  PhonemeInterval interval;
  bool valid = false;
  double min_gap = 0.0;  // mm, central pair
  bool success = false;
};

struct BilabialResult {
  std::optional<double> score;  // absent when no valid instance exists
  std::size_t successes = 0;
  std::size_t instances = 0;
  std::vector<BilabialInstance> detail;
  std::vector<std::string> warnings;
};

/// Frame t spans [t / fps, (t + 1) / fps); an interval covers every frame
/// whose span it overlaps. An instance succeeds when the minimum central lip
/// gap over those frames is below the closure threshold.
inline BilabialResult bilabial_score(const AnimationSequence& positions, const LipVertexPairs& lips,
                                     const std::vector<PhonemeInterval>& intervals) {
  if (positions.is_delta()) throw invalid_error("bilabial_score: animation must hold absolute positions");
  lips.validate(positions.vertex_count());
  const double fps = positions.frame_rate();
  const double duration = positions.duration();
  constexpr double kTimeSlack = 1e-9;

  std::vector<double> gaps;
  gaps.reserve(positions.frame_count());
  for (const auto& f : positions.frames()) gaps.push_back(lip_gap(f, lips).central);

  BilabialResult out;
  for (const auto& iv : intervals) {
    if (!is_bilabial(iv.label)) continue;
    BilabialInstance inst{iv, false, 0.0, false};
    if (!(iv.start < iv.end) || iv.start < -kTimeSlack || iv.end > duration + kTimeSlack) {
      out.warnings.push_back("bilabial: interval '" + iv.label + "' [" + std::to_string(iv.start) + ", " +
                             std::to_string(iv.end) + "] lies outside the animation (" +
                             std::to_string(duration) + " s); excluded");
      out.detail.push_back(inst);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < gaps.size(); ++t) {
      const double t0 = static_cast<double>(t) / fps;
      const double t1 = static_cast<double>(t + 1) / fps;
      if (t0 < iv.end && t1 > iv.start) best = std::min(best, gaps[t]);
    }
    inst.valid = true;
    inst.min_gap = best;
    inst.success = best < lips.closure_threshold;
    ++out.instances;
    if (inst.success) ++out.successes;
    out.detail.push_back(inst);
  }
  if (out.instances > 0) {
    out.score = static_cast<double>(out.successes) / static_cast<double>(out.instances);
  }
  return out;
}

struct ExpressionFeature {
  enum class Kind { distance, region };
  std::string name;
  Kind kind = Kind::distance;
  std::vector<std::size_t> vertices;  // distance: exactly two; region: non-empty
  double range = 1.0;                 // mm

  void validate(std::size_t vertex_count) const {
    if (!(range > 0.0) || !std::isfinite(range)) {
      throw invalid_error("feature '" + name + "': normalization range must be > 0");
    }
    if (kind == Kind::distance && vertices.size() != 2) {
      throw invalid_error("feature '" + name + "': a distance feature needs exactly two vertices");
    }
    if (vertices.empty()) throw invalid_error("feature '" + name + "': no vertices");
    for (auto v : vertices) {
      if (v >= vertex_count) throw shape_error("feature '" + name + "': vertex " + std::to_string(v) + " out of range");
    }
  }
};

/// Raw feature value on a positions frame. Region features measure the mean
/// displacement magnitude of their vertices from the neutral pose.
inline double feature_value(const ExpressionFeature& f, const Eigen::Ref<const Vector>& positions,
                            const Mesh& neutral) {
  auto point = [](const Eigen::Ref<const Vector>& p, std::size_t v) {
    return Eigen::Vector3d(p.segment<3>(static_cast<Eigen::Index>(3 * v)));
  };
  if (f.kind == ExpressionFeature::Kind::distance) {
    return (point(positions, f.vertices[0]) - point(positions, f.vertices[1])).norm();
  }
  double sum = 0.0;
  for (auto v : f.vertices) sum += (point(positions, v) - neutral.vertex(v)).norm();
  return sum / static_cast<double>(f.vertices.size());
}

/// Mean over frames of the mean over features of |f(frame) - f(neutral)| / range.
inline double expressiveness(const AnimationSequence& positions, const Mesh& neutral,
                             const std::vector<ExpressionFeature>& features) {
  if (features.empty()) throw invalid_error("expressiveness: feature set is empty");
  if (positions.is_delta()) throw invalid_error("expressiveness: animation must hold absolute positions");
  if (positions.empty()) throw invalid_error("expressiveness: animation has no frames");
  expect_size(neutral.vertex_count(), positions.vertex_count(), "expressiveness: vertex count");
  for (const auto& f : features) f.validate(neutral.vertex_count());

  std::vector<double> rest;
  rest.reserve(features.size());
  for (const auto& f : features) rest.push_back(feature_value(f, neutral.positions(), neutral));

  double total = 0.0;
  for (const auto& frame : positions.frames()) {
    double per_frame = 0.0;
    for (std::size_t k = 0; k < features.size(); ++k) {
      per_frame += std::abs(feature_value(features[k], frame, neutral) - rest[k]) / features[k].range;
    }
    total += per_frame / static_cast<double>(features.size());
  }
  return total / static_cast<double>(positions.frame_count());
}

/// Pairwise comparison of two sequences' expressiveness (e.g. one emotion
/// against a reference emotion).
inline double relative_expressiveness(double score, double reference) { return score - reference; }

struct MetricReport {
  double fourier_jitter = 0.0;
  std::optional<double> frechet_distance;  // mm
  std::optional<double> bilabial_score;
  std::optional<double> expressiveness;
};

}  // namespace facekit
