#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <vector>

#include "stereocenter/geometry.hpp"
#include "stereocenter/image.hpp"

namespace sc {

inline constexpr int kDefaultDepthLineLength = 1280;

/// Horizontal extent of an object's left 2D box (pixels) and its depth.
struct ObjectExtent {
  double x_min = 0.0;
  double x_max = 0.0;
  double z = 0.0;
};

struct OcclusionResult {
  std::vector<bool> occluded;     // input order
  std::vector<double> depth_line;  // 0 = empty, else depth in meters
  bool extent_clamped = false;     // an endpoint fell outside the buffer
};

/// Two-pass depth-line classification. Pass one visits objects in input order
/// and writes each depth over its columns (empty cell takes z, a nearer object
/// averages with the stored value). Pass two marks an object occluded only
/// when the stored depth at both of its endpoints is nearer than its own.
OcclusionResult classify_occlusion(std::span<const ObjectExtent> objects,
                                   int buffer_length = kDefaultDepthLineLength);

/// classify_occlusion on the objects ordered nearest first (stable), with the
/// flags reported back in input order.
OcclusionResult classify_occlusion_near_first(std::span<const ObjectExtent> objects,
                                              int buffer_length = kDefaultDepthLineLength);

/// Left-image pixels used for photometric alignment: the lower half of the
/// left 2D box, between the boundary keypoints. Moving the box along its
/// bearing to candidate center depth z puts the visible face of pixel (u, v)
/// at depth max_i(gain[i] * z + bias[i]), one affine piece per face the ray
/// can enter.
struct AlignmentPatch {
  struct Sample {
    int u = 0;
    int v = 0;
    std::array<double, 2> gain{1.0, 1.0};
    std::array<double, 2> bias{};

    double depth_at(double z) const {
      return std::max(gain[0] * z + bias[0], gain[1] * z + bias[1]);
    }
  };
  std::vector<Sample> samples;
  double reference_depth = 0.0;
};

/// Pixels are kept only when they stay on the box for every candidate out to
/// `far_scale` times the pose depth (the farthest candidate has the smallest
/// image footprint).
AlignmentPatch make_patch(const Box3D& pose, const Box2D& left_box,
                          const StereoCalibration& calib, double far_scale = 1.0);

struct RefineConfig {
  double bracket = 0.2;  // scan z0 * (1 -/+ bracket)
  int samples = 64;
  double flat_threshold = 1e-6;
  /// Larger patches are thinned with a uniform stride; keeps near objects
  /// from dominating the frame budget.
  int max_pixels = 768;
};

struct RefineResult {
  double z = 0.0;
  bool flat_cost = false;  // cost range below threshold; z is z0
  double step = 0.0;       // spacing of the depth scan
  double cost = 0.0;       // mean squared intensity difference at the best sample
  int pixels = 0;
};

/// Scans candidate depths around z0 and returns the one minimising the mean
/// squared difference between left pixels and right pixels shifted by the
/// disparity each pixel would have at that depth, refined by a parabola
/// through the best sample and its neighbours.
RefineResult refine_depth(const AlignmentPatch& patch, const GrayImage& left,
                          const GrayImage& right, double z0, const StereoCalibration& calib,
                          const RefineConfig& config = {});

struct AlignmentInput {
  Box3D pose;
  Box2D left_box;
  bool occluded = false;
};

struct AlignmentOutput {
  Box3D pose;
  bool refined = false;
  bool flat_cost = false;
  bool failed = false;  // refinement error; pose passed through
};

/// Occluded objects keep their geometric pose. The rest get the refined depth,
/// with x and y rescaled so the bearing is unchanged.
std::vector<AlignmentOutput> adaptive_refine(std::span<const AlignmentInput> objects,
                                             const GrayImage& left, const GrayImage& right,
                                             const StereoCalibration& calib,
                                             const RefineConfig& config = {});

}  // namespace sc
