#include "stereocenter/geometry.hpp"

#include <cmath>
#include <string>

#include "stereocenter/error.hpp"

namespace sc {

namespace {

constexpr std::array<CornerSigns, 4> kFootprintSigns{{
    {+1.0, +1.0},
    {-1.0, +1.0},
    {-1.0, -1.0},
    {+1.0, -1.0},
}};

constexpr double kVertexTieTolerance = 1e-9;

}  // namespace

double normalize_angle(double radians) {
  double wrapped = std::remainder(radians, 2.0 * kPi);
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

void StereoCalibration::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (!(baseline >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "baseline must be non-negative");
  }
  if (image_width <= 0 || image_height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
}

CornerSigns corner_signs(int k) { return kFootprintSigns[static_cast<std::size_t>(k % 4)]; }

CornerSet corners_of(const Box3D& box) {
  const double theta = normalize_angle(box.theta);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  CornerSet corners;
  for (int k = 0; k < 8; ++k) {
    const CornerSigns sign = corner_signs(k);
    const double dx = sign.lateral * box.width / 2.0;
    const double dz = sign.longitudinal * box.length / 2.0;
    const double dy = k < 4 ? box.height / 2.0 : -box.height / 2.0;
    corners[static_cast<std::size_t>(k)] =
        Eigen::Vector3d(box.x + dx * c + dz * s, box.y + dy, box.z - dx * s + dz * c);
  }
  return corners;
}

bool ObservationVector::well_ordered() const {
  return values[kLeftUMin] < values[kLeftUMax] && values[kLeftVMin] < values[kLeftVMax] &&
         values[kRightUMin] < values[kRightUMax];
}

PerspectiveVertex perspective_vertex(double theta, double center_x, double center_z,
                                     double length, double width) {
  const double t = normalize_angle(theta);
  const double c = std::cos(t);
  const double s = std::sin(t);
  std::array<double, 4> range{};
  for (int k = 0; k < 4; ++k) {
    const CornerSigns sign = kFootprintSigns[static_cast<std::size_t>(k)];
    const double dx = sign.lateral * width / 2.0;
    const double dz = sign.longitudinal * length / 2.0;
    range[static_cast<std::size_t>(k)] =
        std::hypot(center_x + dx * c + dz * s, center_z - dx * s + dz * c);
  }
  PerspectiveVertex result;
  for (int k = 1; k < 4; ++k) {
    if (range[static_cast<std::size_t>(k)] < range[static_cast<std::size_t>(result.index)]) {
      result.index = k;
    }
  }
  for (int k = 0; k < 4; ++k) {
    if (k != result.index &&
        std::abs(range[static_cast<std::size_t>(k)] -
                 range[static_cast<std::size_t>(result.index)]) <= kVertexTieTolerance) {
      result.ambiguous = true;
    }
  }
  result.boundary = {(result.index + 3) % 4, (result.index + 1) % 4};
  return result;
}

ProjectionDetail project_detail(const Box3D& box, const StereoCalibration& calib,
                                double min_depth) {
  const CornerSet corners = corners_of(box);
  std::array<double, 8> u{};
  std::array<double, 8> v{};
  std::array<double, 8> u_right{};
  for (std::size_t k = 0; k < 8; ++k) {
    const Eigen::Vector3d& p = corners[k];
    if (!(p.z() > min_depth)) {
      throw Error(ErrorCode::kBehindCamera,
                  "corner " + std::to_string(k) + " at depth " + std::to_string(p.z()) +
                      " m is behind the camera");
    }
    u[k] = p.x() / p.z();
    v[k] = p.y() / p.z();
    u_right[k] = (p.x() - calib.baseline) / p.z();
  }

  // Lowest index wins ties so the support is deterministic.
  auto arg_extreme = [](const std::array<double, 8>& values, int first, bool maximum) {
    int best = first;
    for (int k = first + 1; k < first + 4; ++k) {
      const double candidate = values[static_cast<std::size_t>(k)];
      const double current = values[static_cast<std::size_t>(best)];
      if (maximum ? candidate > current : candidate < current) best = k;
    }
    return best;
  };

  ProjectionDetail detail;
  detail.keypoint = perspective_vertex(box.theta, box.x, box.z, box.length, box.width);
  detail.support[kLeftUMin] = arg_extreme(u, 0, false);
  detail.support[kLeftVMin] = arg_extreme(v, 4, false);
  detail.support[kLeftUMax] = arg_extreme(u, 0, true);
  detail.support[kLeftVMax] = arg_extreme(v, 0, true);
  detail.support[kRightUMin] = arg_extreme(u_right, 0, false);
  detail.support[kRightUMax] = arg_extreme(u_right, 0, true);
  detail.support[kKeypointU] = detail.keypoint.index;

  auto& obs = detail.observation;
  obs[kLeftUMin] = u[static_cast<std::size_t>(detail.support[kLeftUMin])];
  obs[kLeftVMin] = v[static_cast<std::size_t>(detail.support[kLeftVMin])];
  obs[kLeftUMax] = u[static_cast<std::size_t>(detail.support[kLeftUMax])];
  obs[kLeftVMax] = v[static_cast<std::size_t>(detail.support[kLeftVMax])];
  obs[kRightUMin] = u_right[static_cast<std::size_t>(detail.support[kRightUMin])];
  obs[kRightUMax] = u_right[static_cast<std::size_t>(detail.support[kRightUMax])];
  obs[kKeypointU] = u[static_cast<std::size_t>(detail.support[kKeypointU])];
  return detail;
}

ObservationVector project_observations(const Box3D& box, const StereoCalibration& calib,
                                       double min_depth) {
  return project_detail(box, calib, min_depth).observation;
}

double alpha_to_theta(double alpha, double x, double z) {
  return normalize_angle(alpha + std::atan2(x, z));
}

double theta_to_alpha(double theta, double x, double z) {
  return normalize_angle(theta - std::atan2(x, z));
}

OrientationEncoding encode_orientation(double alpha) {
  const double a = normalize_angle(alpha);
  OrientationEncoding encoding;
  for (std::size_t bin = 0; bin < 2; ++bin) {
    const double residual = normalize_angle(a - kOrientationBinCenters[bin]);
    const bool inside = std::abs(residual) <= kOrientationBinHalfWidth;
    double* slot = &encoding.values[bin * 4];
    slot[0] = inside ? 0.0 : 1.0;
    slot[1] = inside ? 1.0 : 0.0;
    slot[2] = std::sin(residual);
    slot[3] = std::cos(residual);
  }
  return encoding;
}

double decode_orientation(const OrientationEncoding& encoding) {
  const auto& e = encoding.values;
  const double score0 = e[1] - e[0];
  const double score1 = e[5] - e[4];
  const std::size_t bin = score1 > score0 ? 1 : 0;
  const double residual = std::atan2(e[bin * 4 + 2], e[bin * 4 + 3]);
  return normalize_angle(kOrientationBinCenters[bin] + residual);
}

}  // namespace sc
