#pragma once

#include <array>

#include <Eigen/Core>

#include "stereocenter/geometry.hpp"

namespace sc {

struct Dimensions {
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
};

/// Gauss-Newton settings. `damping_lambda` = 0 runs the plain Gauss-Newton
/// step; Levenberg damping starting at `fallback_damping` kicks in on singular
/// normal equations or when a step would increase the residual.
struct SolverConfig {
  int max_iterations = 20;
  double step_tolerance = 1e-8;
  double residual_tolerance = 1e-10;
  double damping_lambda = 0.0;
  double fallback_damping = 1e-3;
  double min_depth = kDefaultMinDepth;
  /// Drop rows whose measurement falls outside the image (truncated objects).
  bool drop_out_of_image_rows = true;

  void validate() const;
};

enum class SolveStatus {
  kConverged,
  kMaxIterations,
  kNoDisparity,  // could not initialise: left/right boxes show no positive disparity
};

/// Recovered position and yaw of one object.
struct PoseEstimate {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::kMaxIterations;
  int rows_used = 0;

  /// A pose the solver produced, converged or stopped by the iteration cap.
  bool usable() const { return rows_used > 0 && z > 0.0 && status != SolveStatus::kNoDisparity; }

  Box3D box(const Dimensions& dims) const {
    return Box3D{x, y, z, theta, dims.length, dims.width, dims.height};
  }
};

using RowMask = std::array<bool, kObservationRows>;

/// Rows whose pixel-space measurement lies inside the image.
RowMask rows_inside_image(const ObservationVector& obs, const StereoCalibration& calib);

/// Depth from the disparity of the 2D box centers, then x, y by back-projecting
/// the left box center and yaw from the local angle. Throws
/// Error(kNonPositiveDisparity) when the right center is not left of the left
/// center.
PoseEstimate initial_guess(const ObservationVector& obs, const Dimensions& dims, double alpha,
                           const StereoCalibration& calib);

using ResidualVector = Eigen::Matrix<double, 7, 1>;
using PoseJacobian = Eigen::Matrix<double, 7, 4>;

struct ResidualJacobian {
  ResidualVector residual;  // observed - predicted
  PoseJacobian jacobian;    // d(predicted) / d(x, y, z, theta)
  ProjectionDetail detail;
};

/// Residuals and analytic Jacobian of the seven stereo constraints. Each row
/// is the projection of the corner that currently realises it, so the sign
/// pattern follows the viewing quadrant.
ResidualJacobian residuals_and_jacobian(const PoseEstimate& pose, const ObservationVector& obs,
                                        const Dimensions& dims, const StereoCalibration& calib,
                                        double min_depth = kDefaultMinDepth);

PoseEstimate solve_pose(const ObservationVector& obs, const Dimensions& dims, double alpha,
                        const StereoCalibration& calib, const SolverConfig& config = {});

/// Same iteration as solve_pose, starting from `initial` instead of the
/// disparity-based guess.
PoseEstimate solve_pose_from(const PoseEstimate& initial, const ObservationVector& obs,
                             const Dimensions& dims, const StereoCalibration& calib,
                             const SolverConfig& config = {});

}  // namespace sc
