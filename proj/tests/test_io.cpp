#include <gtest/gtest.h>

#include <functional>

#include "facekit/fixtures.hpp"
#include "facekit/io.hpp"

using namespace facekit;
using io::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::invalid;
}

}  // namespace

TEST(Io, FormatNumberRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) {
    EXPECT_EQ(std::stod(io::format_number(v)), v);
  }
  EXPECT_EQ(io::format_number(0.5), "0.5");
}

TEST(Io, ModelRoundTripIsBitExact) {
  const auto fx = make_bilabial_fixture({});
  io::ModelFile file{fx.model, VertexSelector({0, 2}, std::vector<double>{1.0, 2.5}), fx.lips,
                     VertexSelector(fx.mouth_vertices), fx.features};
  const auto text = io::dump(io::model_to_json(file));
  const auto back = io::model_from_json(io::parse_json(text, "m"));
  EXPECT_EQ(back.model.deltas(), fx.model.deltas());
  EXPECT_EQ(back.model.neutral().positions(), fx.model.neutral().positions());
  EXPECT_EQ(back.model.jaw_shapes(), fx.model.jaw_shapes());
  EXPECT_EQ(back.lips->pairs, fx.lips.pairs);
  EXPECT_EQ(*back.selector->weights(), (std::vector<double>{1.0, 2.5}));
  EXPECT_EQ(back.features.size(), 3u);
  EXPECT_EQ(io::dump(io::model_to_json(back)), text);
}

TEST(Io, ModelErrorsAreClassified) {
  json j = {{"vertex_count", 2}, {"neutral", {0, 0, 0, 1, 1, 1}}, {"shapes", json::array()}};
  EXPECT_NO_THROW(io::model_from_json(j));
  j["neutral"] = {0, 0, 0};
  EXPECT_EQ(kind_of([&] { io::model_from_json(j); }), ErrorKind::shape);
  j.erase("neutral");
  EXPECT_EQ(kind_of([&] { io::model_from_json(j); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { io::parse_json("{not json", "x"); }), ErrorKind::parse);
}

TEST(Io, AnimationRoundTripWithChannels) {
  FaceChannels c;
  c.eyelid = {0.1, 0.2};
  c.lip_open = {1.0, 2.0};
  const AnimationSequence a(24.0, {Vector::Constant(3, 0.1), Vector::Constant(3, 0.2)}, true);
  const auto back = io::animation_from_json(io::parse_json(io::dump(io::animation_to_json(a, c)), "a"));
  EXPECT_EQ(back.animation.frame_rate(), 24.0);
  EXPECT_EQ(back.animation.frame(1), a.frame(1));
  ASSERT_TRUE(back.channels);
  EXPECT_EQ(back.channels->eyelid, c.eyelid);
}

TEST(Io, ConfigRejectsUnknownKeys) {
  EXPECT_EQ(kind_of([] { io::solve_config_from_json({{"lambda_l3", 1.0}}); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { io::params_from_json({{"skin", 1.0}}); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { io::solve_config_from_json({{"lambda_l2", -1.0}}); }), ErrorKind::invalid);
  const auto c = io::solve_config_from_json({{"lambda_l2", 0.5}, {"max_iterations", 7}});
  EXPECT_EQ(c.solver.lambda_l2, 0.5);
  EXPECT_EQ(*c.solver.max_iterations, 7u);
}

TEST(Io, ParamsRoundTrip) {
  PostProcessParams p;
  p.lower_face_smoothing = 0.3;
  p.eye_rotation_offset_x = {1.0, -1.0};
  const auto back = io::params_from_json(io::params_to_json(p));
  EXPECT_EQ(back.lower_face_smoothing, 0.3);
  EXPECT_EQ(back.eye_rotation_offset_x, p.eye_rotation_offset_x);
}

TEST(Io, AlignmentFormsAndErrors) {
  const json bare = json::array({{{"label", "B"}, {"start", 0.1}, {"end", 0.2}}});
  EXPECT_EQ(io::alignment_from_json(bare).size(), 1u);
  EXPECT_EQ(io::alignment_from_json({{"intervals", bare}}).size(), 1u);
  const json bad = json::array({{{"label", "B"}, {"start", 0.3}, {"end", 0.2}}});
  EXPECT_EQ(kind_of([&] { io::alignment_from_json(bad); }), ErrorKind::parse);
}

TEST(Io, EmotionInputForms) {
  const json timed = json::array({{{"time", 0.0}, {"probs", {0, 0, 0, 0, 1, 0}}}});
  EXPECT_EQ(io::emotion_input_from_json(timed).timed.size(), 1u);
  const json windowed = {{"duration", 3.0},
                         {"records", json::array({{{"window", 0}, {"sub_window", 1}, {"probs", {0, 0, 0, 1, 0, 0}}}})}};
  const auto in = io::emotion_input_from_json(windowed);
  EXPECT_EQ(*in.duration, 3.0);
  EXPECT_EQ(in.windowed.at(0).sub_window, 1u);
  EXPECT_EQ(kind_of([] { io::emotion_input_from_json(json::array()); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { io::emotion_input_from_json(json::array({{{"time", 0.0}, {"probs", {1, 0}}}})); }),
            ErrorKind::shape);
}

TEST(Io, LipGapCsvFormat) {
  const std::vector<LipGaps> gaps{{{0.5, 1.0}, 1.0}, {{0.25, 2.0}, 2.0}};
  EXPECT_EQ(io::lip_gap_csv(gaps, 10.0), "frame,time,central_gap,gap_0,gap_1\n0,0,1,0.5,1\n1,0.1,2,0.25,2\n");
}

TEST(Io, MetricReportUsesNullForAbsent) {
  MetricReport r;
  r.fourier_jitter = 0.25;
  const auto j = io::metric_report_to_json(r);
  EXPECT_TRUE(j.at("frechet_distance").is_null());
  EXPECT_TRUE(j.at("bilabial_score").is_null());
  EXPECT_EQ(j.at("fourier_jitter").get<double>(), 0.25);
}
