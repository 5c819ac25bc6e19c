#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "stereocenter/geometry.hpp"

namespace sc {

/// One line of a KITTI object label or result file. Dimensions are stored in
/// KITTI order (height, width, length); the location is the bottom-face center
/// in the rectified reference camera.
struct KittiLabel {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  Box2D bbox;
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool dont_care() const { return type == "DontCare"; }
};

/// Throws Error(kMalformedLine) when the field count is not 15 or 16 (the
/// message carries the count) or a field is not a number (the message carries
/// the 1-based field index).
KittiLabel parse_label_line(std::string_view line);

/// Canonical text form: floats at %.2f, score at %.4f, no trailing newline.
std::string format_label_line(const KittiLabel& label);

/// Blank lines are skipped. Errors name the file and line number.
std::vector<KittiLabel> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const std::vector<KittiLabel>& labels);

using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

/// Calibration file contents. Every "key: values" entry is kept in file order
/// so writing reproduces the input; P2 and P3 are also decoded.
struct KittiCalib {
  std::vector<std::pair<std::string, std::vector<double>>> entries;
  ProjectionMatrix P2 = ProjectionMatrix::Zero();
  ProjectionMatrix P3 = ProjectionMatrix::Zero();

  /// Baseline from the two projections, -(P3[0,3] - P2[0,3]) / P2[0,0].
  double baseline() const;
};

/// Throws Error(kMalformedLine) on unparsable entries or missing P2/P3.
KittiCalib parse_calib(std::string_view text);
KittiCalib read_calib_file(const std::filesystem::path& path);
std::string format_calib(const KittiCalib& calib);
void write_calib_file(const std::filesystem::path& path, const KittiCalib& calib);

/// Rectified rig seen from the left color camera. Throws
/// Error(kDegenerateCalibration) on a non-positive focal length or baseline.
StereoCalibration calib_to_rig(const KittiCalib& calib, int image_width = 1280,
                               int image_height = 384);

/// Calibration file for a rig whose left camera coincides with the reference
/// camera. P0/P1 copy P2 and the remaining matrices are identities.
KittiCalib rig_to_calib(const StereoCalibration& rig);

/// Position of the left color camera's optical center in the reference
/// camera frame is -offset; adding the offset moves a reference-frame point
/// into the left-camera frame.
Eigen::Vector3d left_camera_offset(const KittiCalib& calib);

/// Label to internal box: dimensions reordered, location lifted from the
/// bottom face to the geometric center (y - H/2), shifted into the left-camera
/// frame, and yaw rotated by a quarter turn because KITTI measures yaw from
/// the length axis pointing along +x.
Box3D label_to_box(const KittiLabel& label, const Eigen::Vector3d& offset = Eigen::Vector3d::Zero());

/// Local angle in the internal convention for a label.
double label_alpha(const KittiLabel& label);

/// Internal box to label. Truncation and occlusion are left at 0.
KittiLabel box_to_label(const Box3D& box, const std::string& type, const Box2D& bbox,
                        std::optional<double> score = std::nullopt,
                        const Eigen::Vector3d& offset = Eigen::Vector3d::Zero());

/// Logs a warning when the label's alpha disagrees with its yaw and bearing
/// by more than `tolerance` radians. Returns true when consistent.
bool check_alpha_consistency(const KittiLabel& label, double tolerance = 0.02);

}  // namespace sc
