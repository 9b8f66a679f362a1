#pragma once

// Per-frame blendshape weight solve.
//
// Each frame minimizes
//
//   |dv_s - D_s w|^2 + l2 |w|^2 + l1 (1'w)^2 + lt |w - w_prev|^2
//     + lsym |S w|^2 + ljaw |C w - d_jaw|^2        subject to lo <= w <= hi
//
// over the active shapes. The problem is carried in the canonical form
// 1/2 w'Qw - b'w, which is half the objective above up to a constant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "facekit/error.hpp"
#include "facekit/model.hpp"

namespace facekit {

struct SolveConfig {
  double lambda_l2 = 0.0;
  double lambda_l1 = 0.0;
  double lambda_temporal = 0.0;
  double lambda_sym = 0.0;
  double lambda_jaw_base = 0.0;
  double jaw_sigma = 1.0;  // mm
  double kkt_tolerance = 1e-8;
  std::optional<std::size_t> max_iterations;  // defaults to 10 N + 200
  // Whether the temporal term also applies on the first cancel-pair pass.
  bool temporal_in_first_pass = true;

  std::size_t iteration_limit(std::size_t n) const {
    return max_iterations.value_or(10 * n + 200);
  }

  void validate() const {
    const std::pair<const char*, double> weights[] = {
        {"lambda_l2", lambda_l2},       {"lambda_l1", lambda_l1},
        {"lambda_temporal", lambda_temporal}, {"lambda_sym", lambda_sym},
        {"lambda_jaw_base", lambda_jaw_base},
    };
    for (const auto& [name, value] : weights) {
      if (!std::isfinite(value) || value < 0.0) {
        throw invalid_error(std::string("solve config: ") + name + " must be finite and >= 0");
      }
    }
    if (!(jaw_sigma > 0.0) || !std::isfinite(jaw_sigma)) {
      throw invalid_error("solve config: jaw_sigma must be > 0");
    }
    if (!(kkt_tolerance > 0.0)) throw invalid_error("solve config: kkt_tolerance must be > 0");
    if (max_iterations && *max_iterations == 0) {
      throw invalid_error("solve config: max_iterations must be positive");
    }
  }
};

struct QuadraticProblem {
  Matrix Q;
  Vector b;
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return b.size(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(b.size());
    expect_size(n, static_cast<std::size_t>(Q.rows()), "qp: Q rows");
    expect_size(n, static_cast<std::size_t>(Q.cols()), "qp: Q cols");
    expect_size(n, static_cast<std::size_t>(lower.size()), "qp: lower bound length");
    expect_size(n, static_cast<std::size_t>(upper.size()), "qp: upper bound length");
    if (!Q.allFinite() || !b.allFinite() || !lower.allFinite() || !upper.allFinite()) {
      throw invalid_error("qp: non-finite entry");
    }
    const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw invalid_error("qp: Q is not symmetric");
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (lower[i] > upper[i]) {
        throw invalid_error("qp: lower bound exceeds upper bound at " + std::to_string(i));
      }
    }
  }
};

struct JawTarget {
  Eigen::Vector3d d_jaw = Eigen::Vector3d::Zero();  // mm
  double lip_gap = 0.0;                             // mm

  void validate() const {
    if (!d_jaw.allFinite() || !std::isfinite(lip_gap)) throw invalid_error("jaw target: non-finite value");
    if (lip_gap < 0.0) throw invalid_error("jaw target: lip_gap must be >= 0");
  }
};

struct SolveReport {
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
  double energy = 0.0;  // 1/2 w'Qw - b'w at the returned point
  bool converged = false;
};

struct QpSolution {
  Vector w;
  SolveReport report;
};

/// Thrown when the KKT residual is still above tolerance at the iteration
/// limit. Carries the best iterate so callers can decide to accept it.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Vector best, SolveReport report,
                   std::optional<std::size_t> frame = std::nullopt)
      : Error(ErrorKind::convergence, what),
        best_(std::move(best)),
        report_(report),
        frame_(frame) {}

  const Vector& best_iterate() const { return best_; }
  const SolveReport& report() const { return report_; }
  std::optional<std::size_t> frame() const { return frame_; }

 private:
  Vector best_;
  SolveReport report_;
  std::optional<std::size_t> frame_;
};

/// Dynamic jaw-constraint weight: large when the jaw is static and the lips
/// are apart, vanishing when the lips are closed.
inline double jaw_weight(const JawTarget& jaw, const SolveConfig& config) {
  const double two_sigma_sq = 2.0 * config.jaw_sigma * config.jaw_sigma;
  const double stillness = std::exp(-jaw.d_jaw.squaredNorm() / two_sigma_sq);
  const double exposure = 1.0 - std::exp(-(jaw.lip_gap * jaw.lip_gap) / two_sigma_sq);
  return config.lambda_jaw_base * stillness * exposure;
}

inline double quadratic_energy(const QuadraticProblem& p, const Eigen::Ref<const Vector>& w) {
  return 0.5 * w.dot(p.Q * w) - p.b.dot(w);
}

/// Largest violation of the box-constrained KKT conditions at w, given the
/// gradient g = Qw - b. Free coordinates are measured relative to 1 + |b_i|.
inline double kkt_residual(const QuadraticProblem& p, const Eigen::Ref<const Vector>& w,
                           const Eigen::Ref<const Vector>& g) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double lo = p.lower[i];
    const double hi = p.upper[i];
    if (lo == hi) continue;
    if (w[i] <= lo) {
      r = std::max(r, -g[i]);
    } else if (w[i] >= hi) {
      r = std::max(r, g[i]);
    } else {
      r = std::max(r, std::abs(g[i]) / (1.0 + std::abs(p.b[i])));
    }
  }
  return r;
}

inline double kkt_residual(const QuadraticProblem& p, const Eigen::Ref<const Vector>& w) {
  const Vector g = p.Q * w - p.b;
  return kkt_residual(p, w, g);
}

namespace detail {

inline constexpr double kDiagonalJitter = 1e-12;

// One cyclic Gauss-Seidel pass: exact minimization along each coordinate,
// clamped to the box. Keeps g = Qw - b current.
inline void coordinate_sweep(const QuadraticProblem& p, const Vector& diag, Vector& w, Vector& g) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double lo = p.lower[i];
    const double hi = p.upper[i];
    const double next = std::clamp(w[i] - g[i] / diag[i], lo, hi);
    const double step = next - w[i];
    if (step != 0.0) {
      w[i] = next;
      g.noalias() += step * p.Q.col(i);
    }
  }
}

// Newton step restricted to the coordinates strictly inside their bounds,
// truncated at the first bound it meets. Accepted only if the energy does
// not increase.
inline void free_subspace_step(const QuadraticProblem& p, Vector& w, const Vector& g) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > p.lower[i] && w[i] < p.upper[i]) free.push_back(i);
  }
  if (free.empty()) return;

  const auto m = static_cast<Eigen::Index>(free.size());
  Matrix h(m, m);
  Vector rhs(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    rhs[r] = -g[free[r]];
    for (Eigen::Index c = 0; c < m; ++c) h(r, c) = p.Q(free[r], free[c]);
    h(r, r) += kDiagonalJitter;
  }
  const Vector dir = h.ldlt().solve(rhs);
  if (!dir.allFinite()) return;

  double t = 1.0;
  Eigen::Index blocking = -1;
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = free[r];
    double limit = std::numeric_limits<double>::infinity();
    if (dir[r] > 0.0) limit = (p.upper[i] - w[i]) / dir[r];
    if (dir[r] < 0.0) limit = (p.lower[i] - w[i]) / dir[r];
    if (limit < t) {
      t = limit;
      blocking = r;
    }
  }
  if (!(t > 0.0)) return;

  Vector trial = w;
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = free[r];
    trial[i] = std::clamp(w[i] + t * dir[r], p.lower[i], p.upper[i]);
  }
  if (blocking >= 0) {
    const auto i = free[blocking];
    trial[i] = dir[blocking] > 0.0 ? p.upper[i] : p.lower[i];
  }
  if (quadratic_energy(p, trial) <= quadratic_energy(p, w)) w = std::move(trial);
}

}  // namespace detail

/// Box-constrained convex QP by projected coordinate descent, with a Newton
/// step on the free coordinates after each sweep. Terminates on the KKT
/// residual, never on iterate movement.
inline QpSolution solve_qp(const QuadraticProblem& p, const SolveConfig& config) {
  config.validate();
  p.validate();
  const Eigen::Index n = p.size();
  const double tol = config.kkt_tolerance;

  Vector w = Vector::Zero(n).cwiseMax(p.lower).cwiseMin(p.upper);
  Vector g = p.Q * w - p.b;
  const Vector diag = p.Q.diagonal().array() + detail::kDiagonalJitter;

  SolveReport report;
  report.kkt_residual = kkt_residual(p, w, g);
  const std::size_t limit = config.iteration_limit(static_cast<std::size_t>(n));
  while (report.kkt_residual > tol && report.iterations < limit) {
    ++report.iterations;
    detail::coordinate_sweep(p, diag, w, g);
    detail::free_subspace_step(p, w, g);
    g.noalias() = p.Q * w - p.b;
    report.kkt_residual = kkt_residual(p, w, g);
  }
  report.energy = quadratic_energy(p, w);
  report.converged = report.kkt_residual <= tol;
  if (!report.converged) {
    throw ConvergenceError("qp: KKT residual " + std::to_string(report.kkt_residual) +
                               " above tolerance after " + std::to_string(report.iterations) +
                               " iterations",
                           w, report);
  }
  return {std::move(w), report};
}

/// Frame-independent pieces of the per-frame problem: the selector-restricted
/// active delta columns, their Gram matrix, the symmetry rows and the jaw
/// rows. Build once per sequence.
class SolverContext {
 public:
  SolverContext(const BlendshapeModel& model, VertexSelector selector)
      : selector_(std::move(selector)),
        active_(model.active_set()),
        shape_count_(model.shape_count()),
        vertex_count_(model.vertex_count()) {
    selector_.check_bounds(vertex_count_);
    const auto na = static_cast<Eigen::Index>(active_.size());
    std::vector<Eigen::Index> pos(shape_count_, -1);
    for (Eigen::Index a = 0; a < na; ++a) pos[active_[static_cast<std::size_t>(a)]] = a;

    Matrix active_deltas(model.deltas().rows(), na);
    for (Eigen::Index a = 0; a < na; ++a) {
      active_deltas.col(a) = model.deltas().col(static_cast<Eigen::Index>(active_[static_cast<std::size_t>(a)]));
    }
    sampled_ = apply_selector_rows(selector_, active_deltas);
    gram_ = sampled_.transpose() * sampled_;

    std::vector<std::pair<Eigen::Index, Eigen::Index>> sym;
    for (const auto& [i, j] : model.symmetry_pairs()) {
      if (pos[i] >= 0 && pos[j] >= 0) sym.emplace_back(pos[i], pos[j]);
    }
    symmetry_ = Matrix::Zero(static_cast<Eigen::Index>(sym.size()), na);
    for (std::size_t k = 0; k < sym.size(); ++k) {
      symmetry_(static_cast<Eigen::Index>(k), sym[k].first) = 1.0;
      symmetry_(static_cast<Eigen::Index>(k), sym[k].second) = -1.0;
    }

    jaw_ = Matrix::Zero(3, na);
    const auto ref = static_cast<Eigen::Index>(3 * model.jaw_reference_vertex());
    for (auto s : model.jaw_shapes()) {
      if (pos[s] >= 0) jaw_.col(pos[s]) = model.deltas().col(static_cast<Eigen::Index>(s)).segment<3>(ref);
    }

    for (const auto& [i, j] : model.cancel_pairs()) {
      if (pos[i] >= 0 && pos[j] >= 0) cancel_.emplace_back(pos[i], pos[j]);
    }
  }

  const VertexSelector& selector() const { return selector_; }
  const std::vector<std::size_t>& active() const { return active_; }
  std::size_t shape_count() const { return shape_count_; }
  std::size_t vertex_count() const { return vertex_count_; }
  Eigen::Index active_count() const { return static_cast<Eigen::Index>(active_.size()); }

  const Matrix& sampled_deltas() const { return sampled_; }  // D_s, 3V_s x N_a
  const Matrix& gram() const { return gram_; }                // D_s' D_s
  const Matrix& symmetry_rows() const { return symmetry_; }   // S, K x N_a
  const Matrix& jaw_rows() const { return jaw_; }             // C, 3 x N_a
  /// Cancel pairs with both shapes active, as positions in the active set.
  const std::vector<std::pair<Eigen::Index, Eigen::Index>>& active_cancel_pairs() const { return cancel_; }

  Vector restrict(const Eigen::Ref<const Vector>& full) const {
    Vector out(active_count());
    for (Eigen::Index a = 0; a < active_count(); ++a) out[a] = full[static_cast<Eigen::Index>(active_[static_cast<std::size_t>(a)])];
    return out;
  }

  Vector expand(const Eigen::Ref<const Vector>& active_values) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(shape_count_));
    for (Eigen::Index a = 0; a < active_count(); ++a) out[static_cast<Eigen::Index>(active_[static_cast<std::size_t>(a)])] = active_values[a];
    return out;
  }

 private:
  VertexSelector selector_;
  std::vector<std::size_t> active_;
  std::size_t shape_count_ = 0;
  std::size_t vertex_count_ = 0;
  Matrix sampled_;
  Matrix gram_;
  Matrix symmetry_;
  Matrix jaw_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cancel_;
};

/// w_prev is a full-length (N) weight vector; it enables the temporal term.
inline QuadraticProblem assemble_problem(const SolverContext& ctx, const Eigen::Ref<const Vector>& frame_delta,
                                         const std::optional<Vector>& w_prev,
                                         const std::optional<JawTarget>& jaw, const SolveConfig& config) {
  config.validate();
  expect_size(3 * ctx.vertex_count(), static_cast<std::size_t>(frame_delta.size()),
              "assemble: frame delta length");
  if (!frame_delta.allFinite()) throw invalid_error("assemble: non-finite frame delta");
  if (w_prev) {
    expect_size(ctx.shape_count(), static_cast<std::size_t>(w_prev->size()), "assemble: w_prev dimension N");
    if (!w_prev->allFinite()) throw invalid_error("assemble: non-finite w_prev");
  }
  if (jaw) jaw->validate();

  const Eigen::Index na = ctx.active_count();
  QuadraticProblem p;
  p.Q = ctx.gram();
  p.b = ctx.sampled_deltas().transpose() * apply_selector(ctx.selector(), frame_delta);
  p.Q.diagonal().array() += config.lambda_l2;
  p.Q.array() += config.lambda_l1;
  if (w_prev) {
    p.Q.diagonal().array() += config.lambda_temporal;
    p.b += config.lambda_temporal * ctx.restrict(*w_prev);
  }
  if (ctx.symmetry_rows().rows() > 0 && config.lambda_sym > 0.0) {
    p.Q += config.lambda_sym * ctx.symmetry_rows().transpose() * ctx.symmetry_rows();
  }
  if (jaw) {
    const double lambda_jaw = jaw_weight(*jaw, config);
    if (lambda_jaw > 0.0) {
      p.Q += lambda_jaw * ctx.jaw_rows().transpose() * ctx.jaw_rows();
      p.b += lambda_jaw * ctx.jaw_rows().transpose() * jaw->d_jaw;
    }
  }
  p.lower = Vector::Zero(na);
  p.upper = Vector::Ones(na);
  return p;
}

inline QuadraticProblem assemble_problem(const BlendshapeModel& model, const VertexSelector& selector,
                                         const Eigen::Ref<const Vector>& frame_delta,
                                         const std::optional<Vector>& w_prev,
                                         const std::optional<JawTarget>& jaw, const SolveConfig& config) {
  return assemble_problem(SolverContext(model, selector), frame_delta, w_prev, jaw, config);
}

struct FrameSolution {
  Vector weights;     // full length N, zero outside the active set
  Vector first_pass;  // full length N, before cancel-pair bounds
  SolveReport report;
  SolveReport first_pass_report;
  std::vector<std::size_t> cancelled;  // shapes forced to zero on the second pass
};

/// Two-pass solve: once under [0, 1], then again with the weaker shape of
/// every active cancel pair bounded above by 0. Ties cancel the pair's second
/// shape.
inline FrameSolution solve_frame(const SolverContext& ctx, const Eigen::Ref<const Vector>& frame_delta,
                                 const std::optional<Vector>& w_prev, const std::optional<JawTarget>& jaw,
                                 const SolveConfig& config) {
  QuadraticProblem problem = assemble_problem(ctx, frame_delta, w_prev, jaw, config);
  const bool split_first = w_prev && !config.temporal_in_first_pass && config.lambda_temporal > 0.0;
  const QpSolution first =
      split_first ? solve_qp(assemble_problem(ctx, frame_delta, std::nullopt, jaw, config), config)
                  : solve_qp(problem, config);

  FrameSolution out;
  out.first_pass = ctx.expand(first.w);
  out.first_pass_report = first.report;

  const auto& pairs = ctx.active_cancel_pairs();
  if (pairs.empty()) {
    if (split_first) {
      const QpSolution second = solve_qp(problem, config);
      out.weights = ctx.expand(second.w);
      out.report = second.report;
    } else {
      out.weights = out.first_pass;
      out.report = first.report;
    }
    return out;
  }

  for (const auto& [a, b] : pairs) {
    const Eigen::Index loser = first.w[a] < first.w[b] ? a : b;
    problem.upper[loser] = 0.0;
    out.cancelled.push_back(ctx.active()[static_cast<std::size_t>(loser)]);
  }
  const QpSolution second = solve_qp(problem, config);
  out.weights = ctx.expand(second.w);
  out.report = second.report;
  return out;
}

inline FrameSolution solve_frame(const BlendshapeModel& model, const VertexSelector& selector,
                                 const Eigen::Ref<const Vector>& frame_delta,
                                 const std::optional<Vector>& w_prev, const std::optional<JawTarget>& jaw,
                                 const SolveConfig& config) {
  return solve_frame(SolverContext(model, selector), frame_delta, w_prev, jaw, config);
}

struct SequenceSolution {
  WeightTrack track;
  std::vector<SolveReport> reports;
};

/// Solves frames in order, each using the previous frame's final weights as
/// its temporal prior. Frame 0 has no prior unless `warm_start` is given.
inline SequenceSolution solve_sequence(const BlendshapeModel& model, const VertexSelector& selector,
                                       const AnimationSequence& animation,
                                       const std::optional<std::vector<JawTarget>>& jaw_targets,
                                       const SolveConfig& config,
                                       const std::optional<Vector>& warm_start = std::nullopt) {
  if (animation.empty()) throw invalid_error("solve: animation has no frames");
  const AnimationSequence deltas = animation.to_deltas(model.neutral());
  if (jaw_targets) expect_size(deltas.frame_count(), jaw_targets->size(), "solve: jaw target count");
  if (warm_start) expect_size(model.shape_count(), static_cast<std::size_t>(warm_start->size()), "solve: warm start dimension N");

  const SolverContext ctx(model, selector);
  std::vector<Vector> weights;
  std::vector<SolveReport> reports;
  weights.reserve(deltas.frame_count());
  reports.reserve(deltas.frame_count());
  std::optional<Vector> prev = warm_start;
  for (std::size_t t = 0; t < deltas.frame_count(); ++t) {
    std::optional<JawTarget> jaw;
    if (jaw_targets) jaw = (*jaw_targets)[t];
    try {
      FrameSolution frame = solve_frame(ctx, deltas.frame(t), prev, jaw, config);
      prev = frame.weights;
      weights.push_back(std::move(frame.weights));
      reports.push_back(frame.report);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("frame " + std::to_string(t) + ": " + e.what(), ctx.expand(e.best_iterate()),
                             e.report(), t);
    }
  }
  return {WeightTrack(animation.frame_rate(), std::move(weights)), std::move(reports)};
}

}  // namespace facekit
