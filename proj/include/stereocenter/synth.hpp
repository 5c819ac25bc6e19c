#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stereocenter/geometry.hpp"
#include "stereocenter/image.hpp"
#include "stereocenter/solver.hpp"

namespace sc {

inline constexpr Dimensions kMeanCarDimensions{3.88, 1.63, 1.53};

struct NoiseSpec {
  double pixel_sigma = 0.0;
  /// Rows reported as missing (stored as NaN so the solver drops them).
  RowMask dropout{};
};

struct SceneOptions {
  int n_objects = 5;
  double z_min = 10.0;
  double z_max = 50.0;
  double occlusion_fraction = 0.0;
  NoiseSpec noise;
  StereoCalibration calib;
  Dimensions mean_dims = kMeanCarDimensions;
  double dims_sigma_fraction = 0.1;
  double dims_clip_fraction = 0.3;
  double camera_height = 1.65;  // boxes rest on the ground plane
  bool allow_truncation = false;
  int max_attempts = 1000;
};

struct SceneObject {
  std::string type = "Car";
  Box3D box;
  ObservationVector observation;  // exact projection plus noise
  ObservationVector noise;        // normalized units
  bool intended_occluded = false;
};

struct SceneRecord {
  std::uint64_t seed = 0;
  StereoCalibration calib;
  NoiseSpec noise;
  std::vector<SceneObject> objects;
};

/// Samples a scene of boxes lying on the ground plane, fully inside both
/// images. round(occlusion_fraction * n) objects are placed behind an earlier
/// object on the same bearing so that the depth-line test flags them; all
/// others are guaranteed unoccluded. Throws Error(kInfeasiblePlacement) when
/// rejection sampling exhausts `max_attempts` for one object.
SceneRecord generate_scene(std::uint64_t seed, const SceneOptions& options);

/// True when every corner projects inside both images.
bool fully_visible(const Box3D& box, const StereoCalibration& calib);

/// Procedural texture of a box face at face coordinates (meters).
double face_texture(std::uint64_t seed, int face, double s, double t);

struct StereoPair {
  GrayImage left;
  GrayImage right;
};

inline constexpr std::uint8_t kBackgroundIntensity = 96;

/// Ray-cast rendering of textured boxes into both views; nearest hit wins and
/// everything else is background.
StereoPair render_scene(std::span<const Box3D> boxes, const StereoCalibration& calib,
                        std::uint64_t texture_seed);

StereoPair render_patch_pair(const Box3D& box, const StereoCalibration& calib,
                             std::uint64_t texture_seed);

}  // namespace sc
