// facekit: blendshape solve, post-processing, quality metrics and emotion
// timelines from the command line.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "facekit/cli.hpp"

namespace {

template <class T>
std::optional<T> opt_if(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facekit: blendshape solve, post-processing, metrics and emotion timelines"};
  app.require_subcommand(1);

  facekit::cli::SolveOptions solve;
  std::string solve_config, solve_warm;
  auto* s = app.add_subcommand("solve", "Fit blendshape weights to a vertex animation");
  s->add_option("--model", solve.model, "Model JSON")->required();
  s->add_option("--animation", solve.animation, "Animation JSON")->required();
  auto* s_cfg = s->add_option("--config", solve_config, "Solve configuration JSON");
  auto* s_warm = s->add_option("--warm-start", solve_warm, "Weight track whose last frame seeds frame 0");
  s->add_option("--out", solve.out, "Output weight track JSON")->required();

  facekit::cli::PostprocessOptions post;
  std::string post_params, post_model;
  auto* p = app.add_subcommand("postprocess", "Apply strength, smoothing and channel offsets");
  p->add_option("--animation", post.animation, "Animation JSON")->required();
  auto* p_params = p->add_option("--params", post_params, "Post-processing parameters JSON");
  auto* p_model = p->add_option("--model", post_model, "Model JSON providing the neutral mesh");
  p->add_option("--out", post.out, "Output animation JSON")->required();

  facekit::cli::MetricsOptions met;
  std::string met_gt, met_align, met_csv;
  double met_rate = 0.0;
  auto* m = app.add_subcommand("metrics", "Compute quality metrics for a predicted animation");
  m->add_option("--model", met.model, "Model JSON")->required();
  m->add_option("--animation", met.prediction, "Predicted animation JSON")->required();
  auto* m_gt = m->add_option("--gt", met_gt, "Ground-truth animation JSON");
  auto* m_align = m->add_option("--alignment", met_align, "Phoneme alignment JSON");
  m->add_option("--cutoff-hz", met.cutoff_hz, "Jitter cutoff frequency")->capture_default_str();
  auto* m_rate = m->add_option("--frame-rate", met_rate, "Override the animation frame rate")->check(CLI::PositiveNumber);
  auto* m_csv = m->add_option("--lip-csv", met_csv, "Lip-gap CSV path");
  m->add_option("--out", met.out, "Output report JSON")->required();

  facekit::cli::EmotionOptions emo;
  std::string emo_in, emo_cfg, emo_out, emo_mode = "offline";
  auto* e = app.add_subcommand("emotion", "Build an emotion timeline from classifier output");
  auto* e_in = e->add_option("--probs", emo_in, "Probability records JSON, '-' for stdin");
  e->add_option("--mode", emo_mode, "offline or online")->check(CLI::IsMember({"offline", "online"}));
  auto* e_cfg = e->add_option("--config", emo_cfg, "Window and smoothing configuration JSON");
  auto* e_out = e->add_option("--out", emo_out, "Output path, '-' for stdout");
  e->add_option("--frame-rate", emo.sample_rate, "Dense offline sample rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string fixture_dir;
  std::uint64_t fixture_seed = 1;
  auto* f = app.add_subcommand("fixture", "Write a synthetic input suite");
  f->add_option("--out", fixture_dir, "Output directory")->required();
  f->add_option("--seed", fixture_seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << "error[parse]: arguments: " << err.what() << "\n";
    return facekit::cli::kExitParse;
  }

  if (*s) {
    solve.config = opt_if(s_cfg, solve_config);
    solve.warm_start = opt_if(s_warm, solve_warm);
    return facekit::cli::cmd_solve(solve);
  }
  if (*p) {
    post.params = opt_if(p_params, post_params);
    post.model = opt_if(p_model, post_model);
    return facekit::cli::cmd_postprocess(post);
  }
  if (*m) {
    met.ground_truth = opt_if(m_gt, met_gt);
    met.alignment = opt_if(m_align, met_align);
    met.frame_rate = opt_if(m_rate, met_rate);
    met.lip_csv = opt_if(m_csv, met_csv);
    return facekit::cli::cmd_metrics(met);
  }
  if (*e) {
    emo.input = opt_if(e_in, emo_in);
    emo.config = opt_if(e_cfg, emo_cfg);
    emo.out = opt_if(e_out, emo_out);
    emo.mode = emo_mode == "online" ? facekit::cli::EmotionMode::online : facekit::cli::EmotionMode::offline;
    return facekit::cli::cmd_emotion(emo);
  }
  return facekit::cli::run_command("fixture", std::cerr,
                                   [&] { facekit::cli::write_fixture_suite(fixture_dir, fixture_seed); });
}
