#include "stereocenter/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "stereocenter/error.hpp"
#include "stereocenter/log.hpp"

namespace sc {

namespace {

// Reciprocal condition estimate below which the normal equations count as
// singular.
constexpr double kMinReciprocalCondition = 1e-12;
constexpr double kDampingGrowth = 10000.0;
constexpr int kMaxDampedFailures = 3;
constexpr int kMinRows = 4;

double masked_norm(const ResidualVector& r, const RowMask& mask) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kObservationRows; ++i) {
    if (mask[i]) sum += r[static_cast<Eigen::Index>(i)] * r[static_cast<Eigen::Index>(i)];
  }
  return std::sqrt(sum);
}

struct StepResult {
  bool ok = false;
  Eigen::Vector4d delta = Eigen::Vector4d::Zero();
};

StepResult damped_step(const Eigen::Matrix4d& normal, const Eigen::Vector4d& gradient,
                       double lambda) {
  Eigen::Matrix4d system = normal;
  for (int i = 0; i < 4; ++i) {
    const double d = normal(i, i);
    system(i, i) += lambda * (d > 0.0 ? d : 1.0);
  }
  Eigen::LDLT<Eigen::Matrix4d> ldlt(system);
  StepResult result;
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.rcond() < kMinReciprocalCondition) {
    return result;
  }
  result.delta = ldlt.solve(gradient);
  result.ok = result.delta.allFinite();
  return result;
}

PoseEstimate apply(const PoseEstimate& pose, const Eigen::Vector4d& delta) {
  PoseEstimate next = pose;
  next.x += delta[0];
  next.y += delta[1];
  next.z += delta[2];
  next.theta = normalize_angle(next.theta + delta[3]);
  return next;
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iterations < 1 || !(step_tolerance > 0.0) || !(residual_tolerance > 0.0) ||
      !(damping_lambda >= 0.0) || !(fallback_damping > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid solver configuration");
  }
}

RowMask rows_inside_image(const ObservationVector& obs, const StereoCalibration& calib) {
  const double width = calib.image_width;
  const double height = calib.image_height;
  auto inside_u = [&](double u) {
    const double px = calib.to_pixel_u(u);
    return px >= 0.0 && px <= width;
  };
  auto inside_v = [&](double v) {
    const double py = calib.to_pixel_v(v);
    return py >= 0.0 && py <= height;
  };
  return {inside_u(obs[kLeftUMin]),  inside_v(obs[kLeftVMin]),  inside_u(obs[kLeftUMax]),
          inside_v(obs[kLeftVMax]),  inside_u(obs[kRightUMin]), inside_u(obs[kRightUMax]),
          inside_u(obs[kKeypointU])};
}

PoseEstimate initial_guess(const ObservationVector& obs, const Dimensions& dims, double alpha,
                           const StereoCalibration& calib) {
  (void)dims;
  auto mean_of = [](double a, double b) {
    if (std::isnan(a)) return b;
    if (std::isnan(b)) return a;
    return 0.5 * (a + b);
  };
  // Prefer box centers; with a dropped edge fall back to a matching edge pair.
  double left_u = 0.5 * (obs[kLeftUMin] + obs[kLeftUMax]);
  double right_u = 0.5 * (obs[kRightUMin] + obs[kRightUMax]);
  if (std::isnan(left_u) || std::isnan(right_u)) {
    const bool min_pair = !std::isnan(obs[kLeftUMin]) && !std::isnan(obs[kRightUMin]);
    left_u = min_pair ? obs[kLeftUMin] : obs[kLeftUMax];
    right_u = min_pair ? obs[kRightUMin] : obs[kRightUMax];
  }
  double left_v = mean_of(obs[kLeftVMin], obs[kLeftVMax]);
  if (std::isnan(left_v)) left_v = 0.0;
  const double disparity = left_u - right_u;
  if (!(disparity > 0.0) || !(calib.baseline > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDisparity,
                "box-center disparity " + std::to_string(disparity) + " is not positive");
  }
  PoseEstimate guess;
  guess.z = calib.baseline / disparity;
  guess.x = left_u * guess.z;
  guess.y = left_v * guess.z;
  guess.theta = alpha_to_theta(alpha, guess.x, guess.z);
  return guess;
}

namespace {

using Support = std::array<int, kObservationRows>;

// Alternative corner assignments are tried for rows whose extreme is within
// this fraction of the box extent of the winning corner.
constexpr double kTieFraction = 0.05;
constexpr std::size_t kMaxTieOptions = 3;
constexpr std::size_t kMaxTieCombinations = 32;
constexpr int kMaxTieRounds = 2;

// With `forced`, each row is the projection of the given corner instead of the
// one that realises the extreme at `pose`.
ResidualJacobian linearize(const PoseEstimate& pose, const ObservationVector& obs,
                           const Dimensions& dims, const StereoCalibration& calib,
                           double min_depth, const Support* forced) {
  const Box3D box = pose.box(dims);
  ResidualJacobian out;
  out.detail = project_detail(box, calib, min_depth);
  if (forced != nullptr) out.detail.support = *forced;

  const double theta = normalize_angle(pose.theta);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t row = 0; row < kObservationRows; ++row) {
    const int k = out.detail.support[row];
    const CornerSigns sign = corner_signs(k);
    const double dx = sign.lateral * dims.width / 2.0;
    const double dz = sign.longitudinal * dims.length / 2.0;
    const double dy = k < 4 ? dims.height / 2.0 : -dims.height / 2.0;

    const double depth = pose.z - dx * s + dz * c;
    const double depth_dtheta = -dx * c - dz * s;
    const auto r = static_cast<Eigen::Index>(row);
    double num = 0.0;
    if (row == kLeftVMin || row == kLeftVMax) {
      num = pose.y + dy;
      out.jacobian(r, 0) = 0.0;
      out.jacobian(r, 1) = 1.0 / depth;
      out.jacobian(r, 2) = -num / (depth * depth);
      out.jacobian(r, 3) = -num * depth_dtheta / (depth * depth);
    } else {
      const double shift = (row == kRightUMin || row == kRightUMax) ? calib.baseline : 0.0;
      num = pose.x - shift + dx * c + dz * s;
      const double num_dtheta = -dx * s + dz * c;
      out.jacobian(r, 0) = 1.0 / depth;
      out.jacobian(r, 1) = 0.0;
      out.jacobian(r, 2) = -num / (depth * depth);
      out.jacobian(r, 3) = (num_dtheta * depth - num * depth_dtheta) / (depth * depth);
    }
    if (forced != nullptr) {
      if (!(depth > min_depth)) {
        throw Error(ErrorCode::kBehindCamera, "forced corner is behind the camera");
      }
      out.detail.observation[row] = num / depth;
    }
    out.residual[r] = obs[row] - out.detail.observation[row];
  }
  return out;
}

struct Normal {
  Eigen::Matrix4d matrix;
  Eigen::Vector4d gradient;
};

Normal normal_equations(const ResidualJacobian& lin, const RowMask& mask) {
  Eigen::Matrix<double, 7, 4> jacobian = lin.jacobian;
  ResidualVector residual = lin.residual;
  for (std::size_t i = 0; i < kObservationRows; ++i) {
    if (!mask[i]) {
      jacobian.row(static_cast<Eigen::Index>(i)).setZero();
      residual[static_cast<Eigen::Index>(i)] = 0.0;
    }
  }
  return {jacobian.transpose() * jacobian, jacobian.transpose() * residual};
}

struct Problem {
  const ObservationVector& obs;
  const Dimensions& dims;
  const StereoCalibration& calib;
  const SolverConfig& config;
  const RowMask& mask;
};

struct Trial {
  bool ok = false;
  double norm = 0.0;
  ResidualJacobian lin;
};

// True (extreme-selecting) residual at `pose`; not ok when a corner falls
// behind the camera.
Trial evaluate(const PoseEstimate& pose, const Problem& p) {
  Trial t;
  try {
    t.lin = linearize(pose, p.obs, p.dims, p.calib, p.config.min_depth, nullptr);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kBehindCamera) throw;
    return t;
  }
  t.ok = true;
  t.norm = masked_norm(t.lin.residual, p.mask);
  return t;
}

struct Iterate {
  PoseEstimate pose;
  ResidualJacobian current;
  double norm = 0.0;
};

// Plain Gauss-Newton on the smooth model with a fixed corner assignment.
bool fit_fixed_support(PoseEstimate& pose, const Support& support, const Problem& p) {
  for (int i = 0; i < p.config.max_iterations; ++i) {
    ResidualJacobian lin;
    try {
      lin = linearize(pose, p.obs, p.dims, p.calib, p.config.min_depth, &support);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBehindCamera) throw;
      return false;
    }
    const Normal n = normal_equations(lin, p.mask);
    const StepResult step = damped_step(n.matrix, n.gradient, 0.0);
    if (!step.ok) return false;
    pose = apply(pose, step.delta);
    if (step.delta.norm() < p.config.step_tolerance) break;
  }
  return true;
}

// Gauss-Newton with the Levenberg fallback. Returns an empty string on a
// regular stop, otherwise why the damped fallback gave up.
std::string gauss_newton(Iterate& it, const Problem& p) {
  const SolverConfig& config = p.config;
  PoseEstimate& pose = it.pose;
  // Below the residual tolerance one more full step is nearly free and pins
  // down poorly observed yaw; it is kept only if the residual does not grow.
  auto finish = [&]() {
    pose.converged = true;
    const Normal n = normal_equations(it.current, p.mask);
    const StepResult step = damped_step(n.matrix, n.gradient, 0.0);
    if (!step.ok) return;
    const PoseEstimate candidate = apply(pose, step.delta);
    Trial next = evaluate(candidate, p);
    if (next.ok && next.norm <= it.norm) {
      pose.x = candidate.x;
      pose.y = candidate.y;
      pose.z = candidate.z;
      pose.theta = candidate.theta;
      it.current = std::move(next.lin);
      it.norm = next.norm;
    }
  };
  while (true) {
    if (it.norm <= config.residual_tolerance) {
      finish();
      return {};
    }
    if (pose.iterations >= config.max_iterations) return {};
    const Normal normal = normal_equations(it.current, p.mask);

    double lambda = config.damping_lambda;
    int damped_failures = 0;
    bool accepted = false;
    bool stalled = false;
    bool switched = false;
    Eigen::Vector4d delta = Eigen::Vector4d::Zero();
    while (!accepted) {
      StepResult step = damped_step(normal.matrix, normal.gradient, lambda);
      if (!step.ok) {
        // Singular normal equations: fall back to Levenberg damping.
        if (lambda > 0.0 && ++damped_failures >= kMaxDampedFailures) {
          return "normal equations stay singular";
        }
        lambda = lambda > 0.0 ? lambda * kDampingGrowth : config.fallback_damping;
        continue;
      }
      delta = step.delta;
      if (delta.norm() < config.step_tolerance) {
        stalled = true;
        break;
      }
      const PoseEstimate candidate = apply(pose, delta);
      Trial next = evaluate(candidate, p);
      if (next.ok && next.norm <= it.norm) {
        pose.x = candidate.x;
        pose.y = candidate.y;
        pose.z = candidate.z;
        pose.theta = candidate.theta;
        it.current = std::move(next.lin);
        it.norm = next.norm;
        accepted = true;
        break;
      }
      // The step crossed into a region where other corners realise the box
      // edges: relinearise here with those corners before damping.
      if (lambda == 0.0 && !switched && next.ok &&
          next.lin.detail.support != it.current.detail.support) {
        switched = true;
        PoseEstimate alt = pose;
        if (fit_fixed_support(alt, next.lin.detail.support, p)) {
          Trial alt_next = evaluate(alt, p);
          if (alt_next.ok && alt_next.norm <= it.norm) {
            delta = Eigen::Vector4d(alt.x - pose.x, alt.y - pose.y, alt.z - pose.z,
                                    normalize_angle(alt.theta - pose.theta));
            pose.x = alt.x;
            pose.y = alt.y;
            pose.z = alt.z;
            pose.theta = alt.theta;
            it.current = std::move(alt_next.lin);
            it.norm = alt_next.norm;
            accepted = true;
            break;
          }
        }
      }
      if (lambda > 0.0 && ++damped_failures >= kMaxDampedFailures) {
        return "residual increased on " + std::to_string(kMaxDampedFailures) +
               " consecutive damped steps";
      }
      lambda = lambda > 0.0 ? lambda * kDampingGrowth : config.fallback_damping;
    }
    if (stalled) {
      pose.converged = true;
      return {};
    }
    ++pose.iterations;
    if (it.norm <= config.residual_tolerance) {
      finish();
      return {};
    }
    if (delta.norm() < config.step_tolerance) {
      pose.converged = true;
      return {};
    }
  }
}

// Corner assignments that differ from the current one only in rows whose
// extreme is nearly tied with another corner.
std::vector<Support> tied_supports(const PoseEstimate& pose, const Support& current,
                                   const Problem& p) {
  const CornerSet corners = corners_of(pose.box(p.dims));
  std::array<double, 8> u{}, v{}, u_right{}, range{};
  for (std::size_t k = 0; k < 8; ++k) {
    u[k] = corners[k].x() / corners[k].z();
    v[k] = corners[k].y() / corners[k].z();
    u_right[k] = (corners[k].x() - p.calib.baseline) / corners[k].z();
    range[k] = std::hypot(corners[k].x(), corners[k].z());
  }
  std::array<std::vector<int>, kObservationRows> options;
  for (std::size_t row = 0; row < kObservationRows; ++row) {
    const std::array<double, 8>* values = &u;
    if (row == kLeftVMin || row == kLeftVMax) values = &v;
    if (row == kRightUMin || row == kRightUMax) values = &u_right;
    if (row == kKeypointU) values = &range;
    const int first = row == kLeftVMin ? 4 : 0;
    double lo = (*values)[static_cast<std::size_t>(first)];
    double hi = lo;
    for (int k = first; k < first + 4; ++k) {
      lo = std::min(lo, (*values)[static_cast<std::size_t>(k)]);
      hi = std::max(hi, (*values)[static_cast<std::size_t>(k)]);
    }
    const int chosen = current[row];
    const double extreme = (*values)[static_cast<std::size_t>(chosen)];
    std::vector<std::pair<double, int>> near;
    for (int k = first; k < first + 4; ++k) {
      const double gap = std::abs((*values)[static_cast<std::size_t>(k)] - extreme);
      if (k != chosen && gap <= kTieFraction * (hi - lo)) near.emplace_back(gap, k);
    }
    std::sort(near.begin(), near.end());
    options[row].push_back(chosen);
    for (const auto& [gap, k] : near) {
      if (options[row].size() >= kMaxTieOptions) break;
      options[row].push_back(k);
    }
  }
  std::vector<Support> out;
  Support pick = current;
  // Odometer over the per-row options; the all-current pick is skipped.
  std::array<std::size_t, kObservationRows> digit{};
  while (out.size() < kMaxTieCombinations) {
    std::size_t row = 0;
    while (row < kObservationRows && ++digit[row] == options[row].size()) {
      digit[row] = 0;
      ++row;
    }
    if (row == kObservationRows) break;
    for (std::size_t r = 0; r < kObservationRows; ++r) pick[r] = options[r][digit[r]];
    out.push_back(pick);
  }
  return out;
}

// The residual is only piecewise smooth: where two corners nearly tie for a
// box edge, a local minimum of one piece can sit next to the true solution.
// Returns true when some tied assignment leads to a lower residual.
bool escape_tie(Iterate& it, const Problem& p) {
  const std::vector<Support> supports = tied_supports(it.pose, it.current.detail.support, p);
  bool improved = false;
  for (const Support& support : supports) {
    PoseEstimate trial = it.pose;
    if (!fit_fixed_support(trial, support, p)) continue;
    Trial t = evaluate(trial, p);
    if (t.ok && t.norm < it.norm) {
      it.pose.x = trial.x;
      it.pose.y = trial.y;
      it.pose.z = trial.z;
      it.pose.theta = trial.theta;
      it.current = std::move(t.lin);
      it.norm = t.norm;
      improved = true;
    }
  }
  return improved;
}

// Rows entering the fit: measured (not NaN) and, if configured, inside the image.
RowMask active_rows(const ObservationVector& obs, const StereoCalibration& calib,
                    const SolverConfig& config) {
  RowMask mask;
  mask.fill(true);
  if (config.drop_out_of_image_rows) mask = rows_inside_image(obs, calib);
  int rows_used = 0;
  for (std::size_t i = 0; i < kObservationRows; ++i) {
    if (std::isnan(obs[i])) mask[i] = false;
    rows_used += mask[i] ? 1 : 0;
  }
  if (rows_used < kMinRows) {
    throw Error(ErrorCode::kUnderconstrainedSystem,
                "only " + std::to_string(rows_used) + " usable observation rows");
  }
  return mask;
}

// Samples along the left box-center ray used to seed the iteration. The
// center disparity measures the visible face, so the object center can lie up
// to half a box diagonal beyond the disparity depth.
constexpr int kDepthScanSamples = 33;
constexpr double kDepthScanMargin = 0.5;

PoseEstimate scan_start(const PoseEstimate& guess, double alpha, const Problem& p) {
  const double ray_x = guess.x / guess.z;
  const double ray_y = guess.y / guess.z;
  const double reach = 0.5 * std::hypot(p.dims.length, p.dims.width) + kDepthScanMargin;
  const double lo = std::max(guess.z - kDepthScanMargin, 0.5 * guess.z);
  const double hi = guess.z + reach;
  PoseEstimate best = guess;
  Trial first = evaluate(guess, p);
  double best_norm = first.ok ? first.norm : std::numeric_limits<double>::infinity();
  for (int i = 0; i < kDepthScanSamples; ++i) {
    PoseEstimate c = guess;
    c.z = lo + (hi - lo) * i / (kDepthScanSamples - 1);
    c.x = ray_x * c.z;
    c.y = ray_y * c.z;
    c.theta = alpha_to_theta(alpha, c.x, c.z);
    const Trial t = evaluate(c, p);
    if (t.ok && t.norm < best_norm) {
      best_norm = t.norm;
      best = c;
    }
  }
  return best;
}

}  // namespace

ResidualJacobian residuals_and_jacobian(const PoseEstimate& pose, const ObservationVector& obs,
                                        const Dimensions& dims, const StereoCalibration& calib,
                                        double min_depth) {
  return linearize(pose, obs, dims, calib, min_depth, nullptr);
}

PoseEstimate solve_pose(const ObservationVector& obs, const Dimensions& dims, double alpha,
                        const StereoCalibration& calib, const SolverConfig& config) {
  config.validate();
  const RowMask mask = active_rows(obs, calib, config);
  PoseEstimate initial;
  try {
    initial = initial_guess(obs, dims, alpha, calib);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonPositiveDisparity) throw;
    log::debug("solve_pose: {}", e.what());
    PoseEstimate failed;
    failed.status = SolveStatus::kNoDisparity;
    return failed;
  }
  const Problem problem{obs, dims, calib, config, mask};
  return solve_pose_from(scan_start(initial, alpha, problem), obs, dims, calib, config);
}

PoseEstimate solve_pose_from(const PoseEstimate& initial, const ObservationVector& obs,
                             const Dimensions& dims, const StereoCalibration& calib,
                             const SolverConfig& config) {
  config.validate();
  const RowMask mask = active_rows(obs, calib, config);
  int rows_used = 0;
  for (bool used : mask) rows_used += used ? 1 : 0;
  const Problem problem{obs, dims, calib, config, mask};

  Iterate it;
  it.pose = initial;
  it.pose.theta = normalize_angle(it.pose.theta);
  it.pose.rows_used = rows_used;
  it.pose.iterations = 0;
  it.pose.converged = false;
  it.pose.status = SolveStatus::kMaxIterations;
  it.current = linearize(it.pose, obs, dims, calib, config.min_depth, nullptr);
  it.norm = masked_norm(it.current.residual, mask);

  std::string failure = gauss_newton(it, problem);
  // Ties are only revisited while iteration budget remains, so capping
  // max_iterations always yields a prefix of the longer run.
  for (int round = 0; round < kMaxTieRounds && it.norm > config.residual_tolerance &&
                      it.pose.iterations < config.max_iterations;
       ++round) {
    if (!escape_tie(it, problem)) break;
    ++it.pose.iterations;
    it.pose.converged = false;
    failure = gauss_newton(it, problem);
  }
  if (!failure.empty()) throw Error(ErrorCode::kDivergedSolution, failure);

  PoseEstimate pose = it.pose;
  pose.residual_norm = it.norm;
  pose.status = pose.converged ? SolveStatus::kConverged : SolveStatus::kMaxIterations;
  if (!(pose.z > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth,
                "solution depth " + std::to_string(pose.z) + " m is not positive");
  }
  return pose;
}

}  // namespace sc
