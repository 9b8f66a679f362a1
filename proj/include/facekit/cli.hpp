#pragma once

// Subcommand implementations behind the facekit executable. Each command
// reads its inputs from files, writes its outputs to files (or streams) and
// returns a process exit code. Errors are reported as a single line on the
// error stream, prefixed "error[<kind>]: ".

#include <filesystem>
#include <iostream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "facekit/emotion.hpp"
#include "facekit/error.hpp"
#include "facekit/fixtures.hpp"
#include "facekit/io.hpp"
#include "facekit/metrics.hpp"
#include "facekit/model.hpp"
#include "facekit/postprocess.hpp"
#include "facekit/solver.hpp"

namespace facekit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitShape = 3;
inline constexpr int kExitConvergence = 4;

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape:
      return kExitShape;
    case ErrorKind::convergence:
      return kExitConvergence;
    case ErrorKind::parse:
    case ErrorKind::invalid:
      return kExitParse;
  }
  return kExitParse;
}

namespace detail {

inline std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

inline void report(std::ostream& err, std::string_view kind, std::string_view command, const std::string& message) {
  err << "error[" << kind << "]: " << command << ": " << one_line(message) << "\n";
}

}  // namespace detail

/// Runs `body`, mapping library errors to exit codes.
template <class F>
int run_command(std::string_view command, std::ostream& err, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const Error& e) {
    detail::report(err, to_string(e.kind()), command, e.what());
    return exit_code(e.kind());
  } catch (const io::json::exception& e) {
    detail::report(err, "parse", command, e.what());
    return kExitParse;
  } catch (const std::exception& e) {
    detail::report(err, "invalid", command, e.what());
    return kExitParse;
  }
}

namespace detail {

inline io::AnimationFile load_animation(const std::string& path) {
  auto file = io::animation_from_json(io::read_json_file(path), path);
  if (file.animation.frame_count() == 0) throw parse_error("animation file '" + path + "' has no frames");
  return file;
}

inline io::ModelFile load_model(const std::string& path) { return io::model_from_json(io::read_json_file(path), path); }

inline void check_vertex_count(const BlendshapeModel& model, const AnimationSequence& anim, const std::string& path) {
  expect_size(3 * model.vertex_count(), static_cast<std::size_t>(anim.frames().front().size()),
              path + ": coordinates per frame vs model");
}

inline AnimationSequence with_frame_rate(const AnimationSequence& a, std::optional<double> rate) {
  if (!rate) return a;
  return AnimationSequence(*rate, a.frames(), a.is_delta());
}

}  // namespace detail

struct SolveOptions {
  std::string model;
  std::string animation;
  std::optional<std::string> config;
  std::string out;
  std::optional<std::string> warm_start;  // overrides the config file's warm_start
};

/// Jaw targets per frame: the delta at the jaw reference vertex and the
/// central lip gap. Needs lip pairs in the model file.
inline std::vector<JawTarget> jaw_targets(const io::ModelFile& file, const AnimationSequence& deltas) {
  if (!file.lips) throw invalid_error("use_jaw_constraint needs lip_pairs in the model file");
  const auto& model = file.model;
  const auto ref = static_cast<Eigen::Index>(3 * model.jaw_reference_vertex());
  std::vector<JawTarget> out;
  out.reserve(deltas.frame_count());
  for (const auto& f : deltas.frames()) {
    out.push_back({f.segment<3>(ref), lip_gap(model.neutral(), f, *file.lips).central});
  }
  return out;
}

inline int cmd_solve(const SolveOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_command("solve", err, [&] {
    const auto file = detail::load_model(opt.model);
    const auto anim = detail::load_animation(opt.animation);
    const auto& model = file.model;
    detail::check_vertex_count(model, anim.animation, opt.animation);

    io::SolveFileConfig cfg;
    if (opt.config) cfg = io::solve_config_from_json(io::read_json_file(*opt.config), *opt.config);
    if (opt.warm_start) cfg.warm_start = opt.warm_start;

    std::optional<Vector> warm;
    if (cfg.warm_start) {
      const auto track = io::weight_track_from_json(io::read_json_file(*cfg.warm_start), *cfg.warm_start);
      if (track.frame_count() == 0) throw parse_error("warm-start file '" + *cfg.warm_start + "' has no frames");
      warm = track.weights().back();
      expect_size(model.shape_count(), static_cast<std::size_t>(warm->size()),
                  *cfg.warm_start + ": warm-start weight count vs model shapes");
    }

    const auto deltas = anim.animation.to_deltas(model.neutral());
    std::optional<std::vector<JawTarget>> targets;
    if (cfg.use_jaw_constraint) targets = jaw_targets(file, deltas);
    const VertexSelector selector = file.selector ? *file.selector : VertexSelector::all(model.vertex_count());

    const auto result = solve_sequence(model, selector, deltas, targets, cfg.solver, warm);
    io::write_text_file(opt.out, io::dump(io::weight_track_to_json(result.track, model.shape_names(), result.reports)));

    double worst = 0.0;
    std::size_t worst_frame = 0;
    for (std::size_t t = 0; t < result.reports.size(); ++t) {
      const auto& r = result.reports[t];
      out << "frame " << t << " iterations " << r.iterations << " kkt " << io::format_number(r.kkt_residual) << "\n";
      if (r.kkt_residual >= worst) {
        worst = r.kkt_residual;
        worst_frame = t;
      }
    }
    out << "solved " << result.reports.size() << " frames, max kkt " << io::format_number(worst) << " at frame "
        << worst_frame << "\n";
  });
}

struct PostprocessOptions {
  std::string animation;
  std::optional<std::string> params;
  std::optional<std::string> model;  // neutral mesh for the face mask and for absolute-position input
  std::string out;
};

inline int cmd_postprocess(const PostprocessOptions& opt, std::ostream& err = std::cerr) {
  return run_command("postprocess", err, [&] {
    const auto anim = detail::load_animation(opt.animation);
    PostProcessParams params;
    if (opt.params) params = io::params_from_json(io::read_json_file(*opt.params), *opt.params);
    params.validate();

    std::optional<io::ModelFile> file;
    if (opt.model) {
      file = detail::load_model(*opt.model);
      detail::check_vertex_count(file->model, anim.animation, opt.animation);
    }
    const std::size_t v = static_cast<std::size_t>(anim.animation.frames().front().size()) / 3;

    FaceMask mask;
    if (file) {
      mask = build_face_mask(file->model.neutral(), params.face_mask_level, params.face_mask_softness);
    } else if (params.upper_face_strength == params.lower_face_strength &&
               params.upper_face_smoothing == params.lower_face_smoothing) {
      mask = FaceMask::uniform(v, 1.0);
    } else {
      throw invalid_error("separate upper/lower face settings need --model for the face mask");
    }

    AnimationSequence result;
    if (anim.animation.is_delta()) {
      result = postprocess_skin(anim.animation, mask, params);
    } else {
      if (!file) throw invalid_error("absolute-position animation needs --model for the neutral mesh");
      const auto& neutral = file->model.neutral();
      result = postprocess_skin(anim.animation.to_deltas(neutral), mask, params).to_positions(neutral);
    }
    std::optional<FaceChannels> channels;
    if (anim.channels) channels = apply_channel_offsets(*anim.channels, params);
    io::write_text_file(opt.out, io::dump(io::animation_to_json(result, channels)));
  });
}

struct MetricsOptions {
  std::string model;
  std::string prediction;
  std::optional<std::string> ground_truth;
  std::optional<std::string> alignment;
  std::string out;
  double cutoff_hz = 8.0;
  std::optional<double> frame_rate;     // overrides the animation files' rate
  std::optional<std::string> lip_csv;   // defaults to <out stem>_lipgap.csv next to out
};

inline std::string default_lip_csv_path(const std::string& out) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + "_lipgap.csv")).string();
}

inline int cmd_metrics(const MetricsOptions& opt, std::ostream& err = std::cerr) {
  return run_command("metrics", err, [&] {
    const auto file = detail::load_model(opt.model);
    const auto& model = file.model;
    const auto pred_file = detail::load_animation(opt.prediction);
    detail::check_vertex_count(model, pred_file.animation, opt.prediction);
    const auto pred = detail::with_frame_rate(pred_file.animation.to_positions(model.neutral()), opt.frame_rate);
    const VertexSelector mouth = file.mouth_region ? *file.mouth_region : VertexSelector::all(model.vertex_count());

    MetricReport report;
    const auto pred_deltas = pred.to_deltas(model.neutral());
    report.fourier_jitter = fourier_jitter(select_frames(pred_deltas.frames(), mouth), pred.frame_rate(), opt.cutoff_hz);

    if (opt.ground_truth) {
      const auto gt_file = detail::load_animation(*opt.ground_truth);
      detail::check_vertex_count(model, gt_file.animation, *opt.ground_truth);
      const auto gt = gt_file.animation.to_positions(model.neutral());
      report.frechet_distance =
          frechet_distance(select_frames(gt.frames(), mouth), select_frames(pred.frames(), mouth));
    }

    std::optional<BilabialResult> bilabial;
    if (opt.alignment) {
      if (!file.lips) throw invalid_error("bilabial score needs lip_pairs in the model file");
      const auto intervals = io::alignment_from_json(io::read_json_file(*opt.alignment), *opt.alignment);
      bilabial = bilabial_score(pred, *file.lips, intervals);
      report.bilabial_score = bilabial->score;
      for (const auto& w : bilabial->warnings) err << "warning: " << w << "\n";
    }

    if (!file.features.empty()) report.expressiveness = expressiveness(pred, model.neutral(), file.features);

    io::write_text_file(opt.out, io::dump(io::metric_report_to_json(report, bilabial)));

    if (file.lips) {
      std::vector<LipGaps> gaps;
      gaps.reserve(pred.frame_count());
      for (const auto& f : pred.frames()) gaps.push_back(lip_gap(f, *file.lips));
      io::write_text_file(opt.lip_csv.value_or(default_lip_csv_path(opt.out)), io::lip_gap_csv(gaps, pred.frame_rate()));
    }
  });
}

enum class EmotionMode { offline, online };

struct EmotionOptions {
  std::optional<std::string> input;  // absent or "-" reads the input stream
  EmotionMode mode = EmotionMode::offline;
  std::optional<std::string> config;
  std::optional<std::string> out;    // absent or "-" writes the output stream
  double sample_rate = 30.0;         // dense offline output rate, Hz
};

namespace detail {

// Keyframes from windowed classifier records: every planned window needs at
// least one sub-window record, and no record may address a window past the plan.
inline EmotionTrack keyframes_from_windows(const std::vector<EmotionRecord>& records, double duration,
                                           const WindowConfig& windows) {
  const auto plan = plan_windows(duration, windows);
  std::vector<std::map<std::size_t, EmotionProbs>> by_window(plan.size());
  for (const auto& r : records) {
    if (r.window >= plan.size()) {
      throw shape_error("emotion record addresses window " + std::to_string(r.window) + " but the plan has " +
                        std::to_string(plan.size()) + " windows");
    }
    if (r.sub_window >= plan[r.window].sub_windows.size()) {
      throw shape_error("emotion record addresses sub-window " + std::to_string(r.sub_window) + " of window " +
                        std::to_string(r.window) + ", which has " +
                        std::to_string(plan[r.window].sub_windows.size()));
    }
    if (!by_window[r.window].emplace(r.sub_window, r.probs).second) {
      throw parse_error("duplicate emotion record for window " + std::to_string(r.window) + " sub-window " +
                        std::to_string(r.sub_window));
    }
  }
  std::vector<std::vector<EmotionProbs>> sub(plan.size());
  for (std::size_t w = 0; w < plan.size(); ++w) {
    if (by_window[w].empty()) throw shape_error("no emotion records for window " + std::to_string(w));
    for (const auto& [k, p] : by_window[w]) sub[w].push_back(p);
  }
  return window_keyframes(plan, sub);
}

}  // namespace detail

inline int cmd_emotion(const EmotionOptions& opt, std::istream& in = std::cin, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  return run_command("emotion", err, [&] {
    io::EmotionFileConfig cfg;
    if (opt.config) cfg = io::emotion_config_from_json(io::read_json_file(*opt.config), *opt.config);
    const bool from_stream = !opt.input || *opt.input == "-";
    const bool to_stream = !opt.out || *opt.out == "-";
    const std::string origin = from_stream ? "<stdin>" : *opt.input;

    if (opt.mode == EmotionMode::online) {
      std::optional<std::ofstream> file_out;
      if (!to_stream) {
        file_out.emplace(*opt.out, std::ios::binary | std::ios::trunc);
        if (!*file_out) throw parse_error("cannot write '" + *opt.out + "'");
      }
      std::ostream& sink = to_stream ? out : *file_out;
      std::optional<std::ifstream> file_in;
      if (!from_stream) {
        file_in.emplace(*opt.input, std::ios::binary);
        if (!*file_in) throw parse_error("cannot open '" + *opt.input + "'");
      }
      std::istream& source = from_stream ? in : *file_in;

      OnlineSmoother smoother(cfg.online_smoothing);
      std::string line;
      for (std::size_t n = 1; std::getline(source, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(n);
        const auto rec = io::detail::guarded(where, [&] { return io::timed_record_from_json(io::parse_json(line, where)); });
        const auto s = smoother.push(rec.time, rec.probs);
        sink << io::timed_record_to_json(rec.time, s).dump() << "\n";
        sink.flush();
      }
      return;
    }

    std::string text;
    if (from_stream) {
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    } else {
      text = io::read_text_file(*opt.input);
    }
    const auto input = io::emotion_input_from_json(io::parse_json(text, origin), origin);

    EmotionTrack keys;
    double duration = 0.0;
    if (!input.windowed.empty()) {
      const auto d = cfg.duration ? cfg.duration : input.duration;
      if (!d) throw parse_error(origin + ": window-addressed records need a duration");
      duration = *d;
      keys = detail::keyframes_from_windows(input.windowed, duration, cfg.windows);
    } else {
      keys = EmotionTrack(input.timed);
      duration = cfg.duration ? *cfg.duration : input.duration.value_or(keys.keyframes().back().time);
    }
    const auto dense = offline_timeline(keys, opt.sample_rate, duration);
    const io::json doc = {{"sample_rate", opt.sample_rate},
                          {"duration", duration},
                          {"keyframes", io::emotion_track_to_json(keys)},
                          {"samples", io::emotion_track_to_json(dense)}};
    if (to_stream) {
      out << io::dump(doc);
    } else {
      io::write_text_file(*opt.out, io::dump(doc));
    }
  });
}

/// File names of the demo suite written by write_fixture_suite.
struct FixtureSuite {
  std::string known_model = "known_model.json";
  std::string known_animation = "known_animation.json";
  std::string known_truth = "known_truth.json";
  std::string solve_config = "solve_config.json";
  std::string lips_model = "lips_model.json";
  std::string lips_animation = "lips_animation.json";
  std::string alignment = "alignment.json";
  std::string params = "params.json";
  std::string emotion = "emotion_records.json";
};

/// Writes a deterministic set of inputs covering every subcommand into `dir`.
inline FixtureSuite write_fixture_suite(const std::string& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
  FixtureSuite names;

  FixtureSpec spec;
  spec.seed = seed;
  spec.vertex_count = 40;
  spec.shape_count = 4;
  spec.frame_count = 60;
  spec.noise_sigma = 0.01;
  spec.as_positions = true;
  const auto known = make_known_blend_fixture(spec);
  io::write_text_file(path(names.known_model), io::dump(io::model_to_json({known.model, {}, {}, {}, {}})));
  io::write_text_file(path(names.known_animation), io::dump(io::animation_to_json(known.animation)));
  io::write_text_file(path(names.known_truth),
                      io::dump(io::weight_track_to_json(known.truth, known.model.shape_names())));

  io::SolveFileConfig solve;
  solve.solver.lambda_l2 = 1e-4;
  solve.solver.lambda_l1 = 1e-4;
  solve.solver.lambda_temporal = 1e-2;
  io::write_text_file(path(names.solve_config), io::dump(io::solve_config_to_json(solve)));

  BilabialFixtureSpec lips_spec;
  lips_spec.seed = seed + 1;
  const auto lips = make_bilabial_fixture(lips_spec);
  io::ModelFile lips_file{lips.model, {}, lips.lips, VertexSelector(lips.mouth_vertices), lips.features};
  io::write_text_file(path(names.lips_model), io::dump(io::model_to_json(lips_file)));
  io::write_text_file(path(names.lips_animation), io::dump(io::animation_to_json(lips.animation)));
  io::write_text_file(path(names.alignment), io::dump(io::alignment_to_json(lips.alignment)));

  PostProcessParams params;
  params.upper_face_strength = 0.8;
  params.lower_face_strength = 1.2;
  params.lower_face_smoothing = 0.3;
  io::write_text_file(path(names.params), io::dump(io::params_to_json(params)));

  const double duration = 10.0;
  io::write_text_file(path(names.emotion),
                      io::dump(io::emotion_records_to_json(duration, make_emotion_records(seed + 2, duration, {}))));
  return names;
}

}  // namespace facekit::cli
