#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace sc {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

/// Rectified pinhole stereo rig. The left camera defines the reference frame
/// (x right, y down, z forward); the right camera sits at x = +baseline.
struct StereoCalibration {
  double fx = 721.5377;
  double fy = 721.5377;
  double cx = 609.5593;
  double cy = 172.854;
  double baseline = 0.54;
  int image_width = 1280;
  int image_height = 384;

  /// Throws Error(kInvalidArgument) on non-positive focal lengths or image
  /// size, or a negative baseline. A zero baseline is accepted so degenerate
  /// rigs can be modelled.
  void validate() const;

  double to_normalized_u(double pixel_u) const { return (pixel_u - cx) / fx; }
  double to_normalized_v(double pixel_v) const { return (pixel_v - cy) / fy; }
  double to_pixel_u(double normalized_u) const { return normalized_u * fx + cx; }
  double to_pixel_v(double normalized_v) const { return normalized_v * fy + cy; }

  Eigen::Vector2d pixel_to_normalized(const Eigen::Vector2d& pixel) const {
    return {to_normalized_u(pixel.x()), to_normalized_v(pixel.y())};
  }
  Eigen::Vector2d normalized_to_pixel(const Eigen::Vector2d& normalized) const {
    return {to_pixel_u(normalized.x()), to_pixel_v(normalized.y())};
  }
};

/// Oriented 3D box. (x, y, z) is the geometric center in the left camera
/// frame; theta rotates about the vertical axis. At theta = 0 the width runs
/// along x and the length along z.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
};

/// Axis-aligned image box in pixels.
struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
};

/// Corners 0-3 form the bottom face (y = box.y + H/2) in cyclic order, 4-7 the
/// top face with the same footprint order. Bottom vertex k sits at the local
/// offset (s_lat * W/2, H/2, s_lon * L/2) with
///   k:      0   1   2   3
///   s_lat:  +   -   -   +
///   s_lon:  +   +   -   -
/// before rotation by theta and translation to the center.
using CornerSet = std::array<Eigen::Vector3d, 8>;

struct CornerSigns {
  double lateral;
  double longitudinal;
};

/// Footprint sign pair of corner `k` (0..7).
CornerSigns corner_signs(int k);

CornerSet corners_of(const Box3D& box);

/// Rows of the seven-value stereo observation. All values are in normalized
/// camera coordinates.
enum ObservationRow : int {
  kLeftUMin = 0,   // left box, left edge
  kLeftVMin = 1,   // left box, top edge
  kLeftUMax = 2,   // left box, right edge
  kLeftVMax = 3,   // left box, bottom edge
  kRightUMin = 4,  // right box, left edge
  kRightUMax = 5,  // right box, right edge
  kKeypointU = 6,  // perspective keypoint abscissa
};

inline constexpr std::size_t kObservationRows = 7;

struct ObservationVector {
  std::array<double, kObservationRows> values{};

  double& operator[](std::size_t row) { return values[row]; }
  double operator[](std::size_t row) const { return values[row]; }

  /// u_min < u_max on both images and v_min < v_max.
  bool well_ordered() const;
};

/// The bottom vertex nearest to the camera and the two vertices adjacent to
/// it on the bottom face.
struct PerspectiveVertex {
  int index = 0;
  std::array<int, 2> boundary{3, 1};
  bool ambiguous = false;  // a second vertex tied within 1e-9 m
};

PerspectiveVertex perspective_vertex(double theta, double center_x, double center_z,
                                     double length, double width);

/// Which corner realises each observation row, plus the projected values.
struct ProjectionDetail {
  ObservationVector observation;
  std::array<int, kObservationRows> support{};
  PerspectiveVertex keypoint;
};

inline constexpr double kDefaultMinDepth = 1e-3;

/// Forward stereo model: left 2D box as the tight bound of the eight projected
/// corners, right-box abscissas from the camera shifted by the baseline, and
/// the perspective keypoint abscissa. Throws Error(kBehindCamera) when any
/// corner depth is at or below `min_depth`.
ProjectionDetail project_detail(const Box3D& box, const StereoCalibration& calib,
                                double min_depth = kDefaultMinDepth);

ObservationVector project_observations(const Box3D& box, const StereoCalibration& calib,
                                       double min_depth = kDefaultMinDepth);

/// Yaw from local viewing angle: theta = alpha + atan(x / z).
double alpha_to_theta(double alpha, double x, double z);
double theta_to_alpha(double theta, double x, double z);

/// Two overlapping angular bins centered at 0 and pi, each spanning 7pi/6.
/// Per bin: (out-of-bin score, in-bin score, sin residual, cos residual).
struct OrientationEncoding {
  std::array<double, 8> values{};
};

inline constexpr std::array<double, 2> kOrientationBinCenters{0.0, kPi};
inline constexpr double kOrientationBinHalfWidth = 7.0 * kPi / 12.0;

OrientationEncoding encode_orientation(double alpha);
double decode_orientation(const OrientationEncoding& encoding);

}  // namespace sc
