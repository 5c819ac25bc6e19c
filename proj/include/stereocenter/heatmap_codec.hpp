#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stereocenter/geometry.hpp"
#include "stereocenter/solver.hpp"
#include "stereocenter/tensor.hpp"

namespace sc {

struct ClassPrior {
  std::string name;
  Dimensions mean;  // per-class average L, W, H in meters
};

/// Head geometry and decode thresholds. Regression targets live in output
/// (downsampled) cell units.
struct CodecConfig {
  int downsample = 4;
  double kernel_alpha = 0.6;
  double min_sigma = 0.5;  // cells
  double center_threshold = 0.25;
  double vertex_threshold = 0.1;
  double vertex_match_radius = 2.0;  // cells
  int image_width = 1280;
  int image_height = 384;
  std::vector<ClassPrior> classes{{"Car", {3.88, 1.63, 1.53}}};

  int output_width() const { return image_width / downsample; }
  int output_height() const { return image_height / downsample; }
  int class_index(const std::string& name) const;  // -1 when unknown
};

/// Everything the encoder needs to know about one ground-truth object, in
/// left-image pixels.
struct ObjectAnnotation {
  int class_id = 0;
  Box2D left;
  double right_x1 = 0.0;
  double right_x2 = 0.0;
  Dimensions dims;
  double alpha = 0.0;
  std::array<Eigen::Vector2d, 4> vertices{};  // bottom vertices 0..3
};

/// Projects a 3D box into an annotation: tight left/right boxes and the
/// bottom vertices. Throws Error(kBehindCamera) like project_observations.
ObjectAnnotation annotate_object(const Box3D& box, int class_id, const StereoCalibration& calib);

/// Dense outputs of the ten heads, all on the same output grid.
struct HeadMaps {
  Tensor center_heatmap;   // C classes
  Tensor offset;           // 2
  Tensor size;             // 2
  Tensor distance;         // 2, left-right center distance
  Tensor right_width;      // 1, raw value before w = 1/sigmoid(raw) - 1
  Tensor dim_offset;       // 3
  Tensor orientation;      // 8
  Tensor vertex_heatmap;   // 4
  Tensor vertex_offset;    // 2
  Tensor vertex_distance;  // 8, center-to-vertex

  static HeadMaps zeros(int classes, int height, int width);

  /// Concatenates all heads into one tensor in the member order above.
  Tensor pack() const;
  static HeadMaps unpack(const Tensor& packed, int classes);

  int total_channels() const;
};

struct VertexTarget {
  bool valid = false;  // vertex projects inside the image
  int cell_x = 0;
  int cell_y = 0;
  std::array<double, 2> offset{};
};

/// Sparse regression targets of one object, gathered at its center cell.
struct ObjectTarget {
  int class_id = 0;
  int cell_x = 0;
  int cell_y = 0;
  std::array<double, 2> offset{};
  std::array<double, 2> size{};
  std::array<double, 2> distance{};
  double right_width = 0.0;  // true width, cells
  std::array<double, 3> dim_offset{};
  std::array<double, 8> orientation{};
  std::array<double, 8> vertex_distance{};
  std::array<VertexTarget, 4> vertices{};
};

struct HeadTargets {
  HeadMaps dense;
  std::vector<ObjectTarget> objects;
  int clamped_kernels = 0;  // splats whose sigma hit the floor
};

struct SplatReport {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  bool clamped = false;  // sigma raised to the floor (degenerate box)
  int peak_x = 0;
  int peak_y = 0;
};

/// Max-blends an aspect-ratio Gaussian into `channel` of `heatmap`. The peak
/// sits on floor(center / downsample) and equals 1; sigma = alpha * extent / 6
/// in cells, floored at `min_sigma`.
SplatReport splat_center(Tensor& heatmap, int channel, double center_u, double center_v,
                         double box_width, double box_height, double kernel_alpha,
                         int downsample, double min_sigma = 0.5);

HeadTargets encode_targets(const std::vector<ObjectAnnotation>& objects, const CodecConfig& config);

struct LossValue {
  double value = 0.0;
  Tensor gradient;     // d value / d prediction, same shape as the prediction
  bool empty = false;  // no valid cells; value is 0
};

/// Penalty-reduced focal loss averaged over the number of positive cells.
/// Predictions must lie strictly inside (0, 1), otherwise Error(kNonFiniteInput).
LossValue focal_loss(const Tensor& predicted, const Tensor& target, double alpha = 2.0,
                     double beta = 4.0);

struct RegressionLosses {
  LossValue offset;
  LossValue size;
  LossValue distance;
  LossValue right_width;
  LossValue dim_offset;
  LossValue orientation;
  LossValue vertex_offset;
  LossValue vertex_distance;
};

/// Mean absolute errors at ground-truth cells. The right-width head is
/// compared after the 1/sigmoid(raw) - 1 transform.
RegressionLosses l1_losses(const HeadTargets& targets, const HeadMaps& predicted);

enum LossTerm : int {
  kLossCenterHeatmap = 0,
  kLossOffset,
  kLossDistance,
  kLossSize,
  kLossRightWidth,
  kLossDimension,
  kLossOrientation,
  kLossVertexHeatmap,
  kLossVertexOffset,
  kLossVertexDistance,
};

inline constexpr std::size_t kLossTerms = 10;
using LossVector = std::array<double, kLossTerms>;

/// Learned log-variances s_i of the uncertainty-weighted sum.
struct LossWeights {
  LossVector log_variance{};
};

struct TotalLoss {
  double value = 0.0;
  LossVector d_losses{};         // d total / d L_i
  LossVector d_log_variance{};   // d total / d s_i
};

/// sum_i exp(-s_i) * L_i + s_i.
TotalLoss total_loss(const LossVector& losses, const LossWeights& weights);

struct AllLosses {
  LossValue center_heatmap;
  LossValue vertex_heatmap;
  RegressionLosses regression;

  LossVector values() const;
};

AllLosses compute_losses(const HeadTargets& targets, const HeadMaps& predicted);

/// One decoded stereo detection in pixels.
struct StereoDetection {
  int class_id = 0;
  double score = 0.0;
  int cell_x = 0;
  int cell_y = 0;
  Box2D left;
  double right_x1 = 0.0;
  double right_x2 = 0.0;
  Dimensions dims;
  double alpha = 0.0;
  std::array<Eigen::Vector2d, 4> vertices{};
  std::array<bool, 4> vertex_from_heatmap{};
};

/// Cells that equal their 3x3 max-pool and reach `threshold`. Among equal
/// values the lowest row-major index wins.
std::vector<std::array<int, 2>> find_peaks(const Tensor& heatmap, int channel, double threshold);

/// Decodes peaks of the center heatmap into detections sorted by descending
/// score (row-major order among equal scores).
std::vector<StereoDetection> decode_detections(const HeadMaps& maps, const CodecConfig& config);

}  // namespace sc
