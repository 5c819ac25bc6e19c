#pragma once

// Scene and evaluation fixtures shared by the unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "stereocenter/eval.hpp"
#include "stereocenter/synth.hpp"

namespace fixture {

/// Left 2D box of a box's exact projection, in pixels.
sc::Box2D left_box(const sc::Box3D& box, const sc::StereoCalibration& calib);

struct EvalFrameOptions {
  int objects_per_frame = 6;
  double z_max = 40.0;
  /// Detections are ground truth perturbed by this much (meters, radians).
  double position_noise = 0.3;
  double yaw_noise = 0.1;
  /// Chance that an object is missed and that a false alarm is added.
  double miss_rate = 0.15;
  double false_alarm_rate = 0.3;
  bool mark_occlusion = true;  // random KITTI occlusion levels 0..2
  bool add_dont_care = true;
};

/// Synthetic evaluation frames built from generated scenes: ground truth
/// with projected left and right boxes, detections with noisy poses, random
/// scores, misses and false alarms.
std::vector<sc::EvalFrame> random_eval_frames(std::uint64_t seed, int frames,
                                              const EvalFrameOptions& options = {});

/// Ground-truth objects detected exactly with distinct descending scores.
std::vector<sc::EvalFrame> perfect_eval_frames(std::uint64_t seed, int frames);

}  // namespace fixture
