#pragma once

// Artist-facing adjustments applied to inferred facial motion: region
// strengths, region temporal smoothing, and scale/offset controls for the
// jaw, tongue, eyelid and eye-rotation channels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "facekit/error.hpp"
#include "facekit/model.hpp"

namespace facekit {

/// Defaults are the neutral values: every operation is an identity at them.
struct PostProcessParams {
  double skin_strength = 1.0;
  double upper_face_strength = 1.0;
  double lower_face_strength = 1.0;
  double upper_face_smoothing = 0.0;
  double lower_face_smoothing = 0.0;
  double face_mask_level = 0.6;
  double face_mask_softness = 0.1;
  double lip_open_offset = 0.0;  // mm
  double jaw_strength = 1.0;
  double jaw_height = 0.0;  // mm
  double jaw_depth = 0.0;   // mm
  double tongue_strength = 1.0;
  double tongue_height = 0.0;  // mm
  double tongue_depth = 0.0;   // mm
  double eyelid_offset = 0.0;  // mm
  double blink_strength = 1.0;
  double eye_saccade_strength = 1.0;
  double eye_offset_strength = 1.0;
  std::array<double, 2> eye_rotation_offset_x{0.0, 0.0};  // degrees, {right, left}
  std::array<double, 2> eye_rotation_offset_y{0.0, 0.0};  // degrees, {right, left}

  void validate() const {
    const std::pair<const char*, double> strengths[] = {
        {"skin_strength", skin_strength},
        {"upper_face_strength", upper_face_strength},
        {"lower_face_strength", lower_face_strength},
        {"jaw_strength", jaw_strength},
        {"tongue_strength", tongue_strength},
        {"blink_strength", blink_strength},
        {"eye_saccade_strength", eye_saccade_strength},
        {"eye_offset_strength", eye_offset_strength},
    };
    for (const auto& [name, v] : strengths) {
      if (!std::isfinite(v) || v < 0.0) throw invalid_error(std::string("postprocess: ") + name + " must be >= 0");
    }
    for (double c : {upper_face_smoothing, lower_face_smoothing}) {
      if (!(c >= 0.0 && c < 1.0)) throw invalid_error("postprocess: smoothing coefficients must lie in [0, 1)");
    }
    if (!(face_mask_softness > 0.0)) throw invalid_error("postprocess: face_mask_softness must be > 0");
  }
};

/// Per-vertex upper/lower blend: 1 is fully upper face, 0 fully lower face.
class FaceMask {
 public:
  FaceMask() = default;

  explicit FaceMask(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t j = 0; j < values_.size(); ++j) {
      if (!(values_[j] >= 0.0 && values_[j] <= 1.0)) {
        throw invalid_error("face mask: value at vertex " + std::to_string(j) + " outside [0, 1]");
      }
    }
  }

  static FaceMask uniform(std::size_t vertex_count, double value) {
    return FaceMask(std::vector<double>(vertex_count, value));
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

inline double smoothstep(double t) {
  const double c = std::clamp(t, 0.0, 1.0);
  return c * c * (3.0 - 2.0 * c);
}

/// Mask from the neutral mesh's vertical (y) coordinate, normalized over its
/// bounding box, with a smoothstep transition of width `softness` centred at
/// `level`.
inline FaceMask build_face_mask(const Mesh& neutral, double level, double softness) {
  if (!(softness > 0.0)) throw invalid_error("face mask: softness must be > 0");
  const std::size_t v = neutral.vertex_count();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < v; ++j) {
    const double y = neutral.positions()[static_cast<Eigen::Index>(3 * j + 1)];
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  if (!(hi > lo)) throw invalid_error("face mask: neutral mesh has zero vertical extent");
  std::vector<double> m(v);
  for (std::size_t j = 0; j < v; ++j) {
    const double y = (neutral.positions()[static_cast<Eigen::Index>(3 * j + 1)] - lo) / (hi - lo);
    m[j] = smoothstep((y - level + 0.5 * softness) / softness);
  }
  return FaceMask(std::move(m));
}

inline Vector apply_strength(const Eigen::Ref<const Vector>& deltas, const FaceMask& mask,
                             const PostProcessParams& params) {
  expect_size(3 * mask.size(), static_cast<std::size_t>(deltas.size()), "postprocess: frame length vs mask");
  Vector out(deltas.size());
  for (std::size_t j = 0; j < mask.size(); ++j) {
    const double m = mask[j];
    const double scale =
        params.skin_strength * (m * params.upper_face_strength + (1.0 - m) * params.lower_face_strength);
    const auto k = static_cast<Eigen::Index>(3 * j);
    out.segment<3>(k) = scale * deltas.segment<3>(k);
  }
  return out;
}

/// s_t = (1 - c) x_t + c s_{t-1}, s_0 = x_0, with c blended per vertex by the mask.
inline std::vector<Vector> temporal_smooth(const std::vector<Vector>& track, const FaceMask& mask,
                                           double upper_coeff, double lower_coeff) {
  for (double c : {upper_coeff, lower_coeff}) {
    if (!(c >= 0.0 && c < 1.0)) throw invalid_error("temporal_smooth: coefficient outside [0, 1)");
  }
  std::vector<Vector> out;
  out.reserve(track.size());
  if (track.empty()) return out;

  Vector coeff(static_cast<Eigen::Index>(3 * mask.size()));
  for (std::size_t j = 0; j < mask.size(); ++j) {
    coeff.segment<3>(static_cast<Eigen::Index>(3 * j))
        .setConstant(mask[j] * upper_coeff + (1.0 - mask[j]) * lower_coeff);
  }
  for (std::size_t t = 0; t < track.size(); ++t) {
    expect_size(3 * mask.size(), static_cast<std::size_t>(track[t].size()),
                "temporal_smooth: frame " + std::to_string(t) + " length");
    if (t == 0) {
      out.push_back(track[0]);
    } else {
      out.push_back(((1.0 - coeff.array()) * track[t].array() + coeff.array() * out.back().array()).matrix());
    }
  }
  return out;
}

/// Strength then smoothing on a delta-space animation.
inline AnimationSequence postprocess_skin(const AnimationSequence& deltas, const FaceMask& mask,
                                          const PostProcessParams& params) {
  params.validate();
  if (!deltas.is_delta()) throw invalid_error("postprocess: skin animation must be in delta space");
  std::vector<Vector> scaled;
  scaled.reserve(deltas.frame_count());
  for (const auto& f : deltas.frames()) scaled.push_back(apply_strength(f, mask, params));
  return AnimationSequence(deltas.frame_rate(),
                           temporal_smooth(scaled, mask, params.upper_face_smoothing, params.lower_face_smoothing),
                           true);
}

/// Auxiliary (non-skin) motion channels. Any channel may be empty; non-empty
/// channels share one frame count.
struct FaceChannels {
  double frame_rate = 30.0;
  Vector jaw_neutral;                        // 5 points x 3, mm
  std::vector<Vector> jaw;                   // per frame, 5 points x 3, mm
  std::vector<Vector> tongue;                // per frame tongue vertex deltas, mm
  std::vector<Eigen::Vector4d> eye_rotation; // per frame {right x, right y, left x, left y}, degrees
  std::vector<double> eyelid;                // per frame vertical eyelid channel, mm
  std::vector<double> lip_open;              // per frame lip opening channel, mm

  std::size_t frame_count() const {
    return std::max({jaw.size(), tongue.size(), eye_rotation.size(), eyelid.size(), lip_open.size()});
  }

  void validate() const {
    if (!(frame_rate > 0.0)) throw invalid_error("channels: frame_rate must be > 0");
    const std::size_t n = frame_count();
    auto check = [n](std::size_t size, const char* name) {
      if (size != 0 && size != n) {
        throw shape_error(std::string("channels: ") + name + " has " + std::to_string(size) +
                          " frames, expected " + std::to_string(n));
      }
    };
    check(jaw.size(), "jaw");
    check(tongue.size(), "tongue");
    check(eye_rotation.size(), "eye_rotation");
    check(eyelid.size(), "eyelid");
    check(lip_open.size(), "lip_open");
    if (!jaw.empty()) {
      expect_size(15, static_cast<std::size_t>(jaw_neutral.size()), "channels: jaw_neutral length");
      for (const auto& f : jaw) expect_size(15, static_cast<std::size_t>(f.size()), "channels: jaw frame length");
    }
    for (const auto& f : tongue) {
      if (f.size() % 3 != 0 || f.size() != tongue.front().size()) {
        throw shape_error("channels: tongue frames must share a length that is a multiple of 3");
      }
    }
  }
};

namespace detail {

// Centred moving average, truncated at the clip ends.
inline std::vector<Eigen::Vector4d> moving_average(const std::vector<Eigen::Vector4d>& x, std::size_t half) {
  std::vector<Eigen::Vector4d> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t a = t >= half ? t - half : 0;
    const std::size_t b = std::min(x.size() - 1, t + half);
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (std::size_t k = a; k <= b; ++k) sum += x[k];
    out[t] = sum / static_cast<double>(b - a + 1);
  }
  return out;
}

}  // namespace detail

/// Eye rotation is split into an offset component (0.5 s moving average) and
/// a saccade component (the remainder); each is scaled by its strength before
/// the per-eye rotation offsets are added.
inline FaceChannels apply_channel_offsets(const FaceChannels& in, const PostProcessParams& params) {
  params.validate();
  in.validate();
  FaceChannels out = in;

  for (auto& frame : out.jaw) {
    frame = in.jaw_neutral + params.jaw_strength * (frame - in.jaw_neutral);
    for (Eigen::Index p = 0; p < 5; ++p) {
      frame[3 * p + 1] += params.jaw_height;
      frame[3 * p + 2] += params.jaw_depth;
    }
  }

  for (auto& frame : out.tongue) {
    frame *= params.tongue_strength;
    for (Eigen::Index p = 0; p < frame.size() / 3; ++p) {
      frame[3 * p + 1] += params.tongue_height;
      frame[3 * p + 2] += params.tongue_depth;
    }
  }

  for (auto& e : out.eyelid) e = params.blink_strength * e + params.eyelid_offset;
  for (auto& l : out.lip_open) l += params.lip_open_offset;

  if (!in.eye_rotation.empty()) {
    const auto half = static_cast<std::size_t>(std::lround(0.25 * in.frame_rate));
    const auto baseline = detail::moving_average(in.eye_rotation, half);
    const Eigen::Vector4d offset(params.eye_rotation_offset_x[0], params.eye_rotation_offset_y[0],
                                 params.eye_rotation_offset_x[1], params.eye_rotation_offset_y[1]);
    for (std::size_t t = 0; t < in.eye_rotation.size(); ++t) {
      out.eye_rotation[t] = params.eye_offset_strength * baseline[t] +
                            params.eye_saccade_strength * (in.eye_rotation[t] - baseline[t]) + offset;
    }
  }
  return out;
}

}  // namespace facekit
