#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "facekit/cli.hpp"

using namespace facekit;
namespace fs = std::filesystem;
using io::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("facekit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const json& j) const {
    io::write_text_file(path(name), io::dump(j));
    return path(name);
  }

  // Two orthogonal-ish shapes on four vertices; frames are exact blends.
  void write_two_shape_case(const std::vector<Vector>& weights) {
    Rng rng(2);
    ModelData d;
    d.neutral = make_grid_mesh(4, rng);
    d.deltas = Matrix(12, 2);
    for (Eigen::Index r = 0; r < 12; ++r) {
      d.deltas(r, 0) = rng.normal();
      d.deltas(r, 1) = rng.normal();
    }
    d.shape_names = {"left", "right"};
    model_ = BlendshapeModel(std::move(d));
    write("model.json", io::model_to_json({model_, {}, {}, {}, {}}));
    std::vector<Vector> frames;
    for (const auto& w : weights) frames.push_back(model_.deltas() * w);
    write("anim.json", io::animation_to_json(AnimationSequence(30.0, frames, true)));
  }

  fs::path dir_;
  BlendshapeModel model_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, SolveRecoversExactBlend) {
  write_two_shape_case({(Vector(2) << 0.3, 0.7).finished()});
  write("cfg.json", {{"lambda_l2", 1e-6}, {"lambda_l1", 1e-6}, {"lambda_temporal", 1e-6}});
  const int rc = cli::cmd_solve({path("model.json"), path("anim.json"), path("cfg.json"), path("w.json"), {}}, out_, err_);
  ASSERT_EQ(rc, 0) << err_.str();
  const auto track = io::weight_track_from_json(io::read_json_file(path("w.json")));
  EXPECT_NEAR(track.frame(0)[0], 0.3, 0.01);
  EXPECT_NEAR(track.frame(0)[1], 0.7, 0.01);
  EXPECT_NE(out_.str().find("frame 0 iterations"), std::string::npos);
  EXPECT_NE(out_.str().find("max kkt"), std::string::npos);
}

TEST_F(CliTest, EmptyAnimationIsParseErrorNamingFile) {
  write_two_shape_case({Vector::Zero(2)});
  write("empty.json", {{"frame_rate", 30}, {"is_delta", true}, {"frames", json::array()}});
  const int rc = cli::cmd_solve({path("model.json"), path("empty.json"), {}, path("w.json"), {}}, out_, err_);
  EXPECT_EQ(rc, 2);
  EXPECT_EQ(err_.str().rfind("error[parse]: ", 0), 0u);
  EXPECT_NE(err_.str().find(path("empty.json")), std::string::npos);
  const auto msg = err_.str();
  EXPECT_EQ(std::count(msg.begin(), msg.end(), '\n'), 1);
}

TEST_F(CliTest, WarmStartDimensionMismatchIsShapeError) {
  write_two_shape_case({Vector::Zero(2)});
  write("warm.json", io::weight_track_to_json(WeightTrack(30.0, {Vector::Zero(3)}), {"a", "b", "c"}));
  const int rc =
      cli::cmd_solve({path("model.json"), path("anim.json"), {}, path("w.json"), path("warm.json")}, out_, err_);
  EXPECT_EQ(rc, 3);
  EXPECT_EQ(err_.str().rfind("error[shape]: ", 0), 0u);
}

TEST_F(CliTest, VertexMismatchIsShapeError) {
  write_two_shape_case({Vector::Zero(2)});
  write("anim.json", io::animation_to_json(AnimationSequence(30.0, {Vector::Zero(6)}, true)));
  EXPECT_EQ(cli::cmd_solve({path("model.json"), path("anim.json"), {}, path("w.json"), {}}, out_, err_), 3);
}

TEST_F(CliTest, NonConvergenceExitsFourWithFrame) {
  write_two_shape_case({(Vector(2) << 0.3, 0.7).finished(), (Vector(2) << 0.6, 0.1).finished()});
  write("cfg.json", {{"max_iterations", 1}, {"kkt_tolerance", 1e-300}});
  const int rc = cli::cmd_solve({path("model.json"), path("anim.json"), path("cfg.json"), path("w.json"), {}}, out_, err_);
  EXPECT_EQ(rc, 4);
  EXPECT_EQ(err_.str().rfind("error[convergence]: solve: frame 0", 0), 0u) << err_.str();
}

TEST_F(CliTest, MalformedConfigIsParseError) {
  write_two_shape_case({Vector::Zero(2)});
  io::write_text_file(path("cfg.json"), "{\"lambda_l2\": ");
  EXPECT_EQ(cli::cmd_solve({path("model.json"), path("anim.json"), path("cfg.json"), path("w.json"), {}}, out_, err_), 2);
  EXPECT_EQ(cli::cmd_solve({path("model.json"), path("missing.json"), {}, path("w.json"), {}}, out_, err_), 2);
}

TEST_F(CliTest, PostprocessNeutralReproducesInput) {
  Rng rng(5);
  std::vector<Vector> frames;
  for (int t = 0; t < 10; ++t) {
    Vector f(12);
    for (Eigen::Index i = 0; i < 12; ++i) f[i] = rng.normal();
    frames.push_back(f);
  }
  write("anim.json", io::animation_to_json(AnimationSequence(30.0, frames, true)));
  ASSERT_EQ(cli::cmd_postprocess({path("anim.json"), {}, {}, path("out.json")}, err_), 0) << err_.str();
  const auto out = io::animation_from_json(io::read_json_file(path("out.json"))).animation;
  for (std::size_t t = 0; t < frames.size(); ++t) EXPECT_LE((out.frame(t) - frames[t]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(CliTest, PostprocessZeroSkinStrength) {
  write("anim.json", io::animation_to_json(AnimationSequence(30.0, {Vector::Ones(6), Vector::Ones(6)}, true)));
  write("p.json", {{"skin_strength", 0.0}});
  ASSERT_EQ(cli::cmd_postprocess({path("anim.json"), path("p.json"), {}, path("out.json")}, err_), 0);
  const auto out = io::animation_from_json(io::read_json_file(path("out.json"))).animation;
  for (const auto& f : out.frames()) EXPECT_EQ(f, Vector::Zero(6));
}

TEST_F(CliTest, PostprocessSmoothingMatchesRecursionOnStep) {
  std::vector<Vector> frames;
  for (int t = 0; t < 8; ++t) frames.push_back(Vector::Constant(3, t >= 3 ? 1.0 : 0.0));
  write("anim.json", io::animation_to_json(AnimationSequence(30.0, frames, true)));
  write("p.json", {{"upper_face_smoothing", 0.5}, {"lower_face_smoothing", 0.5}});
  ASSERT_EQ(cli::cmd_postprocess({path("anim.json"), path("p.json"), {}, path("out.json")}, err_), 0) << err_.str();
  const auto out = io::animation_from_json(io::read_json_file(path("out.json"))).animation;
  double s = 0.0;
  for (int t = 0; t < 8; ++t) {
    s = t == 0 ? frames[0][0] : 0.5 * frames[static_cast<std::size_t>(t)][0] + 0.5 * s;
    EXPECT_NEAR(out.frame(static_cast<std::size_t>(t))[0], s, 1e-12);
  }
}

TEST_F(CliTest, PostprocessSplitFaceNeedsModel) {
  write("anim.json", io::animation_to_json(AnimationSequence(30.0, {Vector::Ones(6)}, true)));
  write("p.json", {{"upper_face_strength", 0.5}});
  EXPECT_EQ(cli::cmd_postprocess({path("anim.json"), path("p.json"), {}, path("out.json")}, err_), 2);
}

TEST_F(CliTest, MetricsOnBilabialFixture) {
  const auto names = cli::write_fixture_suite(dir_.string(), 3);
  cli::MetricsOptions opt;
  opt.model = path(names.lips_model);
  opt.prediction = path(names.lips_animation);
  opt.ground_truth = path(names.lips_animation);
  opt.alignment = path(names.alignment);
  opt.out = path("report.json");
  ASSERT_EQ(cli::cmd_metrics(opt, err_), 0) << err_.str();
  const auto r = io::read_json_file(opt.out);
  EXPECT_EQ(r.at("frechet_distance").get<double>(), 0.0);
  EXPECT_EQ(r.at("bilabial_score").get<double>(), 0.75);
  EXPECT_TRUE(fs::exists(path("report_lipgap.csv")));
  const auto csv = io::read_text_file(path("report_lipgap.csv"));
  EXPECT_EQ(csv.rfind("frame,time,central_gap,gap_0", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 121);
}

TEST_F(CliTest, MetricsConstantPredictionHasZeroJitterAndNoOptionalFields) {
  const auto names = cli::write_fixture_suite(dir_.string(), 3);
  const auto model = io::model_from_json(io::read_json_file(path(names.lips_model)));
  write("still.json", io::animation_to_json(
                          AnimationSequence(30.0, std::vector<Vector>(20, model.model.neutral().positions()), false)));
  cli::MetricsOptions opt;
  opt.model = path(names.lips_model);
  opt.prediction = path("still.json");
  opt.out = path("report.json");
  ASSERT_EQ(cli::cmd_metrics(opt, err_), 0) << err_.str();
  const auto r = io::read_json_file(opt.out);
  EXPECT_EQ(r.at("fourier_jitter").get<double>(), 0.0);
  EXPECT_TRUE(r.at("frechet_distance").is_null());
  EXPECT_TRUE(r.at("bilabial_score").is_null());
  EXPECT_EQ(r.at("expressiveness").get<double>(), 0.0);
}

TEST_F(CliTest, EmotionOfflineDefaultsGiveEighteenKeyframes) {
  const auto names = cli::write_fixture_suite(dir_.string(), 3);
  cli::EmotionOptions opt;
  opt.input = path(names.emotion);
  opt.out = path("timeline.json");
  std::istringstream in;
  ASSERT_EQ(cli::cmd_emotion(opt, in, out_, err_), 0) << err_.str();
  const auto j = io::read_json_file(path("timeline.json"));
  EXPECT_EQ(j.at("keyframes").size(), 18u);
  EXPECT_EQ(j.at("samples").size(), 301u);
}

TEST_F(CliTest, EmotionSingleKeyframeOfflineIsConstant) {
  std::istringstream in(R"([{"time": 0.5, "probs": [0.1, 0.1, 0.1, 0.5, 0.1, 0.1]}])");
  cli::EmotionOptions opt;
  write("cfg.json", {{"duration", 2.0}});
  opt.config = path("cfg.json");
  ASSERT_EQ(cli::cmd_emotion(opt, in, out_, err_), 0) << err_.str();
  const auto j = json::parse(out_.str());
  EXPECT_EQ(j.at("samples").size(), 61u);
  for (const auto& s : j.at("samples")) EXPECT_EQ(s.at("probs"), json({0.1, 0.1, 0.1, 0.5, 0.1, 0.1}));
}

TEST_F(CliTest, EmotionOnlinePassthroughStreamsEachRecord) {
  write("cfg.json", {{"online_smoothing", 0.0}});
  std::istringstream in(
      "{\"time\": 0.0, \"probs\": [0, 0, 0, 1, 0, 0]}\n"
      "\n"
      "{\"time\": 0.5, \"probs\": [0.5, 0, 0, 0.5, 0, 0]}\n");
  cli::EmotionOptions opt;
  opt.mode = cli::EmotionMode::online;
  opt.config = path("cfg.json");
  ASSERT_EQ(cli::cmd_emotion(opt, in, out_, err_), 0) << err_.str();
  std::istringstream lines(out_.str());
  std::string line;
  std::vector<json> got;
  while (std::getline(lines, line)) got.push_back(json::parse(line));
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[1].at("probs"), json({0.5, 0, 0, 0.5, 0, 0}));
}

TEST_F(CliTest, EmotionOnlineBadLineReportsLineNumber) {
  std::istringstream in("{\"time\": 0.0, \"probs\": [0, 0, 0, 1, 0, 0]}\nnot json\n");
  cli::EmotionOptions opt;
  opt.mode = cli::EmotionMode::online;
  EXPECT_EQ(cli::cmd_emotion(opt, in, out_, err_), 2);
  EXPECT_NE(err_.str().find("<stdin>:2"), std::string::npos);
}

TEST_F(CliTest, EmotionMissingWindowIsShapeError) {
  std::istringstream in(R"({"duration": 3.0, "records": [{"window": 0, "probs": [0, 0, 0, 1, 0, 0]}]})");
  cli::EmotionOptions opt;
  EXPECT_EQ(cli::cmd_emotion(opt, in, out_, err_), 3);
}

TEST_F(CliTest, FixtureSuiteIsDeterministic) {
  const auto a = dir_ / "a";
  const auto b = dir_ / "b";
  cli::write_fixture_suite(a.string(), 9);
  cli::write_fixture_suite(b.string(), 9);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(io::read_text_file(e.path().string()), io::read_text_file((b / e.path().filename()).string()));
  }
  EXPECT_EQ(files, 9u);
}
