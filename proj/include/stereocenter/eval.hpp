#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stereocenter/geometry.hpp"
#include "stereocenter/kitti_io.hpp"

namespace sc {

double iou_2d(const Box2D& a, const Box2D& b);

/// Rotated footprint overlap on the ground plane.
double iou_bev(const Box3D& a, const Box3D& b);

/// BEV intersection times vertical overlap, over the union volume.
double iou_3d(const Box3D& a, const Box3D& b);

/// Area of the intersection of two convex polygons given as (x, z) vertices.
/// Results below 1e-12 m^2 are reported as 0.
double convex_intersection_area(const std::vector<Eigen::Vector2d>& a,
                                const std::vector<Eigen::Vector2d>& b);

enum class Difficulty : int { kEasy = 0, kModerate = 1, kHard = 2 };
inline constexpr std::array<Difficulty, 3> kDifficulties{Difficulty::kEasy, Difficulty::kModerate,
                                                          Difficulty::kHard};
const char* to_string(Difficulty difficulty);

struct DifficultyFilter {
  double min_height = 0.0;  // pixels
  int max_occlusion = 0;
  double max_truncation = 0.0;
};

/// KITTI filters: Easy 40 px / fully visible / 15%, Moderate 25 px / partly
/// occluded / 30%, Hard 25 px / largely occluded / 50%.
DifficultyFilter difficulty_filter(Difficulty difficulty);

enum class Metric : int { kLeft2D = 0, kStereo2D = 1, kBev = 2, k3D = 3 };
inline constexpr std::array<Metric, 4> kMetrics{Metric::kLeft2D, Metric::kStereo2D, Metric::kBev,
                                                Metric::k3D};
const char* to_string(Metric metric);

struct EvalConfig {
  std::map<std::string, double> iou_threshold{{"Car", 0.7}, {"Pedestrian", 0.5}, {"Cyclist", 0.5}};
  std::vector<std::string> classes{"Car"};
  int ap_points = 11;  // 11 (recall 0, 0.1, ..., 1) or 40 (recall 1/40, ..., 1)
  int workers = 1;

  /// Throws Error(kInvalidArgument) on thresholds outside (0, 1] or an
  /// unsupported interpolation mode.
  void validate() const;
  double threshold(const std::string& cls) const;
};

/// Ground-truth object. The right box is the projection into the right view.
struct EvalObject {
  std::string type;
  Box2D left;
  std::optional<Box2D> right;
  Box3D box;
  double truncated = 0.0;
  int occluded = 0;
};

struct EvalDetection {
  std::string type;
  double score = 0.0;
  Box2D left;
  std::optional<Box2D> right;
  Box3D box;
};

struct EvalFrame {
  std::vector<EvalObject> ground_truth;
  std::vector<EvalDetection> detections;
};

/// One point of the precision/recall curve, taken after every detection whose
/// score is at least `score`.
struct PrPoint {
  double score = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  int true_positives = 0;
  int false_positives = 0;
};

struct ApResult {
  double ap = 0.0;
  int ground_truth = 0;
  std::vector<PrPoint> curve;
};

enum class MatchOutcome : int { kTruePositive, kFalsePositive, kIgnored };

/// Greedy matching of one frame for one class, difficulty and metric:
/// detections in descending score order each take the unmatched valid object
/// with the highest overlap at or above the threshold. Detections that only
/// match ignored objects (wrong difficulty, neighbouring class) or fall inside
/// a DontCare region are ignored. Stereo overlap is the smaller of the left
/// and right 2D overlaps. Returns one outcome per detection in input order;
/// `valid_objects` receives the number of objects that count toward recall.
std::vector<MatchOutcome> match_frame(const EvalFrame& frame, const std::string& cls,
                                      Difficulty difficulty, Metric metric, double threshold,
                                      int& valid_objects);

/// Interpolated AP from a PR curve: mean over recall levels of the highest
/// precision reached at that recall or beyond.
double interpolated_ap(const std::vector<PrPoint>& curve, int points);

ApResult average_precision(const std::vector<EvalFrame>& frames, const std::string& cls,
                           Difficulty difficulty, Metric metric, const EvalConfig& config);

struct ClassReport {
  std::string cls;
  std::array<std::array<ApResult, 3>, 4> ap;  // [metric][difficulty]
  /// Sum over difficulties of (stereo AP - left AP).
  double gap = 0.0;
};

struct EvalReport {
  int ap_points = 11;
  int frames = 0;
  std::vector<ClassReport> classes;

  std::string to_text() const;
  std::string to_key_values() const;
  std::string to_pr_csv() const;
};

EvalReport evaluate(const std::vector<EvalFrame>& frames, const EvalConfig& config);

/// Builds an evaluation frame from KITTI ground truth and results. Right boxes
/// come from projecting the 3D box into the right view (ground truth) or from
/// `right_boxes` when given (detections, same order as `results`).
EvalFrame make_frame(const std::vector<KittiLabel>& ground_truth,
                     const std::vector<KittiLabel>& results, const StereoCalibration& rig,
                     const Eigen::Vector3d& offset,
                     const std::vector<std::optional<Box2D>>& right_boxes = {});

/// Tight right-view box of a 3D box (rows shared with the left view).
Box2D project_right_box(const Box3D& box, const StereoCalibration& rig);

}  // namespace sc
