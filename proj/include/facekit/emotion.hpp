#pragma once

// Emotion timelines from windowed six-class classifier output: window
// planning for the double sliding window, sub-window aggregation, offline
// keyframe interpolation, online exponential smoothing and emotion-vector
// transitions.

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "facekit/error.hpp"

namespace facekit {

inline constexpr std::size_t kEmotionCount = 6;
inline constexpr std::array<std::string_view, kEmotionCount> kEmotionNames = {
    "anger", "disgust", "fear", "joy", "neutral", "sadness"};

class EmotionProbs {
 public:
  using Array = std::array<double, kEmotionCount>;

  EmotionProbs() : p_{0.0, 0.0, 0.0, 0.0, 1.0, 0.0} {}

  explicit EmotionProbs(const Array& p) : p_(p) {
    double sum = 0.0;
    for (std::size_t k = 0; k < kEmotionCount; ++k) {
      if (!std::isfinite(p_[k]) || p_[k] < 0.0) {
        throw invalid_error("emotion: probability for '" + std::string(kEmotionNames[k]) + "' must be >= 0");
      }
      sum += p_[k];
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw invalid_error("emotion: probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
  }

  /// Scales a non-negative vector onto the simplex.
  static EmotionProbs normalized(Array p) {
    double sum = 0.0;
    for (double v : p) {
      if (!std::isfinite(v) || v < 0.0) throw invalid_error("emotion: negative or non-finite weight");
      sum += v;
    }
    if (!(sum > 0.0)) throw invalid_error("emotion: cannot normalize an all-zero vector");
    for (double& v : p) v /= sum;
    return EmotionProbs(p);
  }

  static EmotionProbs one_hot(std::size_t k) {
    Array p{};
    p.at(k) = 1.0;
    return EmotionProbs(p);
  }

  double operator[](std::size_t k) const { return p_[k]; }
  const Array& values() const { return p_; }

  friend bool operator==(const EmotionProbs& a, const EmotionProbs& b) { return a.p_ == b.p_; }

 private:
  Array p_;
};

struct WindowConfig {
  double window_size = 1.9;  // s
  double stride = 0.5;       // s
  double sub_window = 0.625; // s
  double sub_stride = 0.31;  // s

  void validate() const {
    if (!(window_size > 0.0 && stride > 0.0 && sub_window > 0.0 && sub_stride > 0.0)) {
      throw invalid_error("window config: all sizes and strides must be > 0");
    }
    if (sub_window > window_size) throw invalid_error("window config: sub_window exceeds window_size");
  }
};

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double center() const { return 0.5 * (start + end); }
};

struct WindowPlan {
  Interval window;
  std::vector<Interval> sub_windows;
};

namespace detail {

inline constexpr double kTimeEps = 1e-9;

// Intervals of `size` stepping by `stride` from `start`, the last one clamped
// to end at `end`.
inline std::vector<Interval> tile(double start, double end, double size, double stride) {
  std::vector<Interval> out;
  for (std::size_t k = 0;; ++k) {
    const double s = start + static_cast<double>(k) * stride;
    const double e = s + size;
    out.push_back({s, std::min(e, end)});
    if (e >= end - kTimeEps) break;
  }
  return out;
}

}  // namespace detail

/// Windows start at 0 and step by the stride; the final window is shortened
/// to end at `duration`. Each window is tiled by sub-windows the same way.
inline std::vector<WindowPlan> plan_windows(double duration, const WindowConfig& config) {
  config.validate();
  if (!(duration > 0.0)) throw invalid_error("plan_windows: duration must be > 0");
  std::vector<WindowPlan> plan;
  for (const auto& w : detail::tile(0.0, duration, config.window_size, config.stride)) {
    plan.push_back({w, detail::tile(w.start, w.end, config.sub_window, config.sub_stride)});
  }
  return plan;
}

/// Mean of the sub-window probabilities, renormalized.
inline EmotionProbs aggregate_window(const std::vector<EmotionProbs>& sub_probs) {
  if (sub_probs.empty()) throw invalid_error("aggregate_window: no sub-window probabilities");
  EmotionProbs::Array sum{};
  for (const auto& p : sub_probs) {
    for (std::size_t k = 0; k < kEmotionCount; ++k) sum[k] += p[k];
  }
  for (double& v : sum) v /= static_cast<double>(sub_probs.size());
  return EmotionProbs::normalized(sum);
}

/// Classifier output for one sub-window of one planned window.
struct EmotionRecord {
  std::size_t window = 0;
  std::size_t sub_window = 0;
  EmotionProbs probs;
};

struct EmotionKeyframe {
  double time = 0.0;  // s
  EmotionProbs probs;
};

class EmotionTrack {
 public:
  EmotionTrack() = default;

  explicit EmotionTrack(std::vector<EmotionKeyframe> keyframes) : keys_(std::move(keyframes)) {
    for (std::size_t k = 1; k < keys_.size(); ++k) {
      if (!(keys_[k].time > keys_[k - 1].time)) {
        throw invalid_error("emotion track: keyframe times must be strictly increasing (index " +
                            std::to_string(k) + ")");
      }
    }
  }

  const std::vector<EmotionKeyframe>& keyframes() const { return keys_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  /// Piecewise-linear per class, constant outside the keyframe range.
  EmotionProbs sample(double t) const {
    if (keys_.empty()) throw invalid_error("emotion track: no keyframes");
    if (t <= keys_.front().time) return keys_.front().probs;
    if (t >= keys_.back().time) return keys_.back().probs;
    std::size_t hi = 1;
    while (keys_[hi].time < t) ++hi;
    const auto& a = keys_[hi - 1];
    const auto& b = keys_[hi];
    if (t == b.time) return b.probs;
    const double u = (t - a.time) / (b.time - a.time);
    EmotionProbs::Array p{};
    for (std::size_t k = 0; k < kEmotionCount; ++k) p[k] = (1.0 - u) * a.probs[k] + u * b.probs[k];
    return EmotionProbs::normalized(p);
  }

 private:
  std::vector<EmotionKeyframe> keys_;
};

/// One aggregated keyframe per planned window, anchored at the window midpoint.
inline EmotionTrack window_keyframes(const std::vector<WindowPlan>& plan,
                                     const std::vector<std::vector<EmotionProbs>>& sub_probs) {
  expect_size(plan.size(), sub_probs.size(), "emotion: window count");
  std::vector<EmotionKeyframe> keys;
  keys.reserve(plan.size());
  for (std::size_t w = 0; w < plan.size(); ++w) {
    keys.push_back({plan[w].window.center(), aggregate_window(sub_probs[w])});
  }
  return EmotionTrack(std::move(keys));
}

/// Dense samples of the interpolated keyframes at t = k / sample_rate for
/// every k with t <= duration.
inline EmotionTrack offline_timeline(const EmotionTrack& keyframes, double sample_rate, double duration) {
  if (keyframes.empty()) throw invalid_error("offline_timeline: at least one keyframe is required");
  if (!(sample_rate > 0.0)) throw invalid_error("offline_timeline: sample_rate must be > 0");
  if (!(duration >= 0.0)) throw invalid_error("offline_timeline: duration must be >= 0");
  std::vector<EmotionKeyframe> out;
  const auto count = static_cast<std::size_t>(std::floor(duration * sample_rate + detail::kTimeEps)) + 1;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / sample_rate;
    out.push_back({t, keyframes.sample(t)});
  }
  return EmotionTrack(std::move(out));
}

/// s_t = (1 - a) x_t + a s_{t-1}, s_0 = x_0. One vector of state per stream.
class OnlineSmoother {
 public:
  explicit OnlineSmoother(double alpha = 0.6) : alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw invalid_error("online_smooth: coefficient must lie in [0, 1)");
  }

  EmotionProbs push(double time, const EmotionProbs& x) {
    if (started_ && !(time > last_time_)) {
      throw invalid_error("online_smooth: record times must be increasing");
    }
    if (!started_) {
      state_ = x;
      started_ = true;
    } else {
      EmotionProbs::Array s{};
      for (std::size_t k = 0; k < kEmotionCount; ++k) s[k] = (1.0 - alpha_) * x[k] + alpha_ * state_[k];
      state_ = EmotionProbs::normalized(s);
    }
    last_time_ = time;
    return state_;
  }

  double alpha() const { return alpha_; }

 private:
  double alpha_;
  bool started_ = false;
  double last_time_ = 0.0;
  EmotionProbs state_;
};

inline std::vector<EmotionProbs> online_smooth(const std::vector<EmotionKeyframe>& stream, double alpha) {
  OnlineSmoother smoother(alpha);
  std::vector<EmotionProbs> out;
  out.reserve(stream.size());
  for (const auto& rec : stream) out.push_back(smoother.push(rec.time, rec.probs));
  return out;
}

/// c = alpha e1 + (1 - alpha) e2. Works on probability vectors and on
/// arbitrary embeddings alike; no renormalization.
inline Eigen::VectorXd transition_blend(const Eigen::Ref<const Eigen::VectorXd>& e1,
                                        const Eigen::Ref<const Eigen::VectorXd>& e2, double alpha) {
  expect_size(static_cast<std::size_t>(e1.size()), static_cast<std::size_t>(e2.size()), "transition_blend: dimension");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw invalid_error("transition_blend: alpha must lie in [0, 1]");
  if (alpha == 1.0) return e1;
  if (alpha == 0.0) return e2;
  return alpha * e1 + (1.0 - alpha) * e2;
}

}  // namespace facekit
