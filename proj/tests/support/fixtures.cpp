#include "fixtures.hpp"

#include <random>

namespace fixture {

sc::Box2D left_box(const sc::Box3D& box, const sc::StereoCalibration& calib) {
  const sc::ObservationVector o = sc::project_observations(box, calib);
  return {calib.to_pixel_u(o[sc::kLeftUMin]), calib.to_pixel_v(o[sc::kLeftVMin]),
          calib.to_pixel_u(o[sc::kLeftUMax]), calib.to_pixel_v(o[sc::kLeftVMax])};
}

namespace {

sc::EvalDetection detect(const sc::Box3D& box, const sc::StereoCalibration& calib, double score) {
  sc::EvalDetection d;
  d.type = "Car";
  d.score = score;
  d.box = box;
  d.left = left_box(box, calib);
  d.right = sc::project_right_box(box, calib);
  return d;
}

}  // namespace

std::vector<sc::EvalFrame> random_eval_frames(std::uint64_t seed, int frames,
                                              const EvalFrameOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> pos(0.0, options.position_noise), yaw(0.0, options.yaw_noise);
  sc::SceneOptions scene;
  scene.n_objects = options.objects_per_frame;
  scene.z_max = options.z_max;
  const sc::StereoCalibration& calib = scene.calib;
  std::vector<sc::EvalFrame> out;
  for (int f = 0; f < frames; ++f) {
    const sc::SceneRecord record = sc::generate_scene(seed * 1000 + static_cast<std::uint64_t>(f), scene);
    sc::EvalFrame frame;
    for (const sc::SceneObject& o : record.objects) {
      sc::EvalObject gt;
      gt.type = "Car";
      gt.box = o.box;
      gt.left = left_box(o.box, calib);
      gt.right = sc::project_right_box(o.box, calib);
      gt.occluded = options.mark_occlusion ? static_cast<int>(rng() % 3) : 0;
      frame.ground_truth.push_back(gt);
      if (unit(rng) < options.miss_rate) continue;
      sc::Box3D noisy = o.box;
      noisy.x += pos(rng);
      noisy.z += pos(rng);
      noisy.theta += yaw(rng);
      if (noisy.z < 3.0) noisy.z = 3.0;
      frame.detections.push_back(detect(noisy, calib, unit(rng)));
    }
    while (unit(rng) < options.false_alarm_rate) {
      const sc::Box3D fake{-10.0 + 20.0 * unit(rng), 0.9, 8.0 + 30.0 * unit(rng),
                           -3.0 + 6.0 * unit(rng), 3.9, 1.6, 1.5};
      frame.detections.push_back(detect(fake, calib, unit(rng)));
    }
    if (options.add_dont_care && unit(rng) < 0.3) {
      sc::EvalObject dc;
      dc.type = "DontCare";
      dc.left = {1000.0, 150.0, 1100.0, 250.0};
      frame.ground_truth.push_back(dc);
    }
    out.push_back(frame);
  }
  return out;
}

std::vector<sc::EvalFrame> perfect_eval_frames(std::uint64_t seed, int frames) {
  EvalFrameOptions options;
  options.miss_rate = 0.0;
  options.false_alarm_rate = 0.0;
  options.position_noise = 1e-12;
  options.yaw_noise = 1e-12;
  std::vector<sc::EvalFrame> out = random_eval_frames(seed, frames, options);
  const sc::StereoCalibration calib;
  double score = 1.0;
  for (sc::EvalFrame& f : out) {
    f.detections.clear();
    for (const sc::EvalObject& gt : f.ground_truth) {
      if (gt.type != "Car") continue;
      f.detections.push_back(detect(gt.box, calib, score));
      score *= 0.999;
    }
  }
  return out;
}

}  // namespace fixture
