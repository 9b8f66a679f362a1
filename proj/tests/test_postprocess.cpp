#include <gtest/gtest.h>

#include "facekit/fixtures.hpp"
#include "facekit/postprocess.hpp"

using namespace facekit;

namespace {

// Vertices at heights 0, y, 1 (after bounding-box normalization the middle
// vertex sits at y).
Mesh three_heights(double y) {
  Vector p(9);
  p << 0, 0, 0, 0, y, 0, 0, 1, 0;
  return Mesh(p);
}

std::vector<Vector> scalar_track(const std::vector<double>& x) {
  std::vector<Vector> out;
  for (double v : x) out.push_back(Vector::Constant(3, v));
  return out;
}

}  // namespace

TEST(FaceMask, MidpointIsHalf) {
  const auto m = build_face_mask(three_heights(0.5), 0.5, 0.2);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
  EXPECT_EQ(m[0], 0.0);
  EXPECT_EQ(m[2], 1.0);
}

TEST(FaceMask, HandEvaluatedSmoothstep) {
  const auto m = build_face_mask(three_heights(0.55), 0.5, 0.2);
  EXPECT_NEAR(m[1], 0.84375, 1e-12);
}

TEST(FaceMask, TinySoftnessIsHardStep) {
  const auto lo = build_face_mask(three_heights(0.49), 0.5, 1e-9);
  const auto hi = build_face_mask(three_heights(0.51), 0.5, 1e-9);
  EXPECT_EQ(lo[1], 0.0);
  EXPECT_EQ(hi[1], 1.0);
}

TEST(FaceMask, RejectsFlatMeshAndBadSoftness) {
  EXPECT_THROW(build_face_mask(Mesh(Vector::Zero(6)), 0.5, 0.1), Error);
  EXPECT_THROW(build_face_mask(three_heights(0.5), 0.5, 0.0), Error);
}

TEST(ApplyStrength, NeutralIsIdentity) {
  Rng rng(1);
  Vector d(9);
  for (Eigen::Index i = 0; i < 9; ++i) d[i] = rng.normal();
  const auto mask = build_face_mask(three_heights(0.37), 0.6, 0.5);
  EXPECT_LE((apply_strength(d, mask, PostProcessParams{}) - d).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplyStrength, ZeroSkinStrengthZeroes) {
  PostProcessParams p;
  p.skin_strength = 0.0;
  EXPECT_EQ(apply_strength(Vector::Ones(6), FaceMask::uniform(2, 0.3), p), Vector::Zero(6));
}

TEST(ApplyStrength, HandEvaluatedBlend) {
  PostProcessParams p;
  p.upper_face_strength = 2.0;
  p.lower_face_strength = 0.0;
  const Vector d = (Vector(3) << 1.0, -2.0, 3.0).finished();
  EXPECT_EQ(apply_strength(d, FaceMask::uniform(1, 0.5), p), d);
}

TEST(TemporalSmooth, ZeroCoefficientIsIdentity) {
  const auto x = scalar_track({0.0, 3.0, -1.0, 2.0});
  const auto s = temporal_smooth(x, FaceMask::uniform(1, 0.5), 0.0, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) EXPECT_EQ(s[t], x[t]);
}

TEST(TemporalSmooth, ConstantIsFixedPoint) {
  const auto x = scalar_track({1.25, 1.25, 1.25, 1.25});
  const auto s = temporal_smooth(x, FaceMask::uniform(1, 0.5), 0.7, 0.3);
  for (std::size_t t = 0; t < x.size(); ++t) EXPECT_EQ(s[t], x[t]);
}

TEST(TemporalSmooth, HandUnrolledRecursion) {
  const auto s = temporal_smooth(scalar_track({0.0, 1.0, 1.0}), FaceMask::uniform(1, 1.0), 0.5, 0.9);
  EXPECT_EQ(s[0][0], 0.0);
  EXPECT_EQ(s[1][0], 0.5);
  EXPECT_EQ(s[2][0], 0.75);
}

TEST(TemporalSmooth, MaskBlendsCoefficients) {
  // Mask 0.25: c = 0.25 * 0.8 + 0.75 * 0.0 = 0.2.
  const auto s = temporal_smooth(scalar_track({0.0, 1.0}), FaceMask::uniform(1, 0.25), 0.8, 0.0);
  EXPECT_NEAR(s[1][0], 0.8, 1e-15);
}

TEST(PostprocessSkin, RequiresDeltaInput) {
  const AnimationSequence pos(30.0, {Vector::Zero(3)}, false);
  EXPECT_THROW(postprocess_skin(pos, FaceMask::uniform(1, 1.0), PostProcessParams{}), Error);
}

TEST(PostprocessParams, Validation) {
  PostProcessParams p;
  p.upper_face_smoothing = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.jaw_strength = -0.1;
  EXPECT_THROW(p.validate(), Error);
}

namespace {

FaceChannels sample_channels() {
  FaceChannels c;
  c.frame_rate = 30.0;
  c.jaw_neutral = Vector::LinSpaced(15, 0.0, 14.0);
  for (int t = 0; t < 20; ++t) {
    c.jaw.push_back(c.jaw_neutral + Vector::Constant(15, 0.1 * t));
    c.tongue.push_back(Vector::Constant(6, 0.05 * t));
    c.eye_rotation.emplace_back(std::sin(0.3 * t), std::cos(0.2 * t), 0.1 * t, -0.05 * t);
    c.eyelid.push_back(0.2 * t);
    c.lip_open.push_back(1.0 - 0.03 * t);
  }
  return c;
}

}  // namespace

TEST(ChannelOffsets, NeutralIsIdentity) {
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, PostProcessParams{});
  for (std::size_t t = 0; t < in.jaw.size(); ++t) {
    EXPECT_LE((out.jaw[t] - in.jaw[t]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((out.tongue[t] - in.tongue[t]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((out.eye_rotation[t] - in.eye_rotation[t]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(out.eyelid[t], in.eyelid[t]);
    EXPECT_EQ(out.lip_open[t], in.lip_open[t]);
  }
}

TEST(ChannelOffsets, ZeroJawStrengthFreezesAtNeutral) {
  PostProcessParams p;
  p.jaw_strength = 0.0;
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, p);
  for (const auto& f : out.jaw) EXPECT_EQ(f, in.jaw_neutral);
}

TEST(ChannelOffsets, EyelidOffsetAddsExactly) {
  PostProcessParams p;
  p.eyelid_offset = 1.0;
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, p);
  for (std::size_t t = 0; t < in.eyelid.size(); ++t) EXPECT_EQ(out.eyelid[t], in.eyelid[t] + 1.0);
}

TEST(ChannelOffsets, JawHeightAndDepthShiftEveryPoint) {
  PostProcessParams p;
  p.jaw_height = 2.0;
  p.jaw_depth = -1.0;
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, p);
  for (std::size_t t = 0; t < in.jaw.size(); ++t) {
    for (Eigen::Index k = 0; k < 5; ++k) {
      EXPECT_NEAR(out.jaw[t][3 * k], in.jaw[t][3 * k], 1e-12);
      EXPECT_NEAR(out.jaw[t][3 * k + 1], in.jaw[t][3 * k + 1] + 2.0, 1e-12);
      EXPECT_NEAR(out.jaw[t][3 * k + 2], in.jaw[t][3 * k + 2] - 1.0, 1e-12);
    }
  }
}

TEST(ChannelOffsets, EyeRotationOffsetsPerEye) {
  PostProcessParams p;
  p.eye_rotation_offset_x = {1.0, -2.0};
  p.eye_rotation_offset_y = {0.5, 0.25};
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, p);
  const Eigen::Vector4d shift(1.0, 0.5, -2.0, 0.25);
  for (std::size_t t = 0; t < in.eye_rotation.size(); ++t) {
    EXPECT_LE((out.eye_rotation[t] - in.eye_rotation[t] - shift).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ChannelOffsets, ZeroSaccadeLeavesMovingAverage) {
  PostProcessParams p;
  p.eye_saccade_strength = 0.0;
  const auto in = sample_channels();
  const auto out = apply_channel_offsets(in, p);
  // Half-width round(0.25 * 30) = 8 frames, truncated at the ends.
  for (std::size_t t = 0; t < in.eye_rotation.size(); ++t) {
    const std::size_t a = t >= 8 ? t - 8 : 0;
    const std::size_t b = std::min<std::size_t>(in.eye_rotation.size() - 1, t + 8);
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (std::size_t k = a; k <= b; ++k) mean += in.eye_rotation[k];
    mean /= static_cast<double>(b - a + 1);
    EXPECT_LE((out.eye_rotation[t] - mean).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FaceChannels, MismatchedFrameCountsAreShapeErrors) {
  auto c = sample_channels();
  c.eyelid.pop_back();
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}
