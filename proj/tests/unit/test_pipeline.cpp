#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "stereocenter/error.hpp"
#include "stereocenter/pipeline.hpp"

using namespace sc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sc_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tree_contents(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.string() + "\n" + slurp(root / f);
  return all;
}

}  // namespace

TEST(Pipeline, FrameNameIsSixDigits) {
  EXPECT_EQ(frame_name(7), "000007");
  EXPECT_EQ(frame_name(123456), "123456");
}

TEST(Pipeline, ObservationFileRoundTrip) {
  const fs::path dir = scratch("obs");
  FrameObservation a;
  a.type = "Car";
  a.score = 0.75;
  a.left = {100.25, 150.5, 180.125, 200.0};
  a.right_x1 = 90.5;
  a.right_x2 = 170.0;
  a.keypoint_u = std::nan("");
  a.dims = {3.9, 1.6, 1.5};
  a.alpha = -0.3;
  write_observation_file(dir / "f.txt", {a});
  const auto back = read_observation_file(dir / "f.txt");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].left.x1, a.left.x1);
  EXPECT_EQ(back[0].right_x2, a.right_x2);
  EXPECT_TRUE(std::isnan(back[0].keypoint_u));
  EXPECT_EQ(back[0].alpha, a.alpha);
  fs::remove_all(dir);
}

TEST(Pipeline, NoiseFreeSynthSolvesAndScoresPerfectly) {
  const fs::path root = scratch("e2e");
  SynthRunOptions synth;
  synth.output_dir = root / "scene";
  synth.seed = 5;
  synth.frames = 6;
  synth.scene.n_objects = 4;
  run_synth(synth);

  SolveRunOptions solve;
  solve.input_dir = synth.output_dir;
  solve.output_dir = root / "results";
  const SolveRunSummary summary = run_solve(solve);
  EXPECT_EQ(summary.frames, 6);
  EXPECT_EQ(summary.objects, 24);
  EXPECT_EQ(summary.solved, 24);
  EXPECT_EQ(summary.failed_frames, 0);

  EvalRunOptions eval;
  eval.results_dir = solve.output_dir;
  eval.ground_truth_dir = synth.output_dir;
  eval.output_dir = root / "metrics";
  const EvalReport report = run_eval(eval);
  ASSERT_EQ(report.classes.size(), 1u);
  for (int d = 0; d < 3; ++d) {
    // Result files hold 2-decimal poses, so 3D overlap is high but not exact.
    EXPECT_NEAR(report.classes[0].ap[static_cast<int>(Metric::kBev)][d].ap, 1.0, 1e-12);
  }
  EXPECT_TRUE(fs::exists(root / "metrics" / "metrics.txt"));
  EXPECT_TRUE(fs::exists(root / "metrics" / "pr_curve.csv"));
  fs::remove_all(root);
}

TEST(Pipeline, OutputIsIndependentOfWorkerCount) {
  const fs::path root = scratch("workers");
  SynthRunOptions synth;
  synth.seed = 9;
  synth.frames = 5;
  synth.scene.noise.pixel_sigma = 0.5;
  synth.scene.occlusion_fraction = 0.3;
  synth.write_images = true;
  synth.output_dir = root / "a";
  synth.workers = 1;
  run_synth(synth);
  synth.output_dir = root / "b";
  synth.workers = 4;
  run_synth(synth);
  EXPECT_EQ(tree_contents(root / "a"), tree_contents(root / "b"));

  SolveRunOptions solve;
  solve.input_dir = root / "a";
  solve.output_dir = root / "ra";
  solve.workers = 1;
  run_solve(solve);
  solve.output_dir = root / "rb";
  solve.workers = 3;
  run_solve(solve);
  EXPECT_EQ(tree_contents(root / "ra"), tree_contents(root / "rb"));
  fs::remove_all(root);
}

TEST(Pipeline, HeadMapsPathRecoversTruth) {
  const StereoCalibration calib;
  SceneOptions opt;
  opt.n_objects = 5;
  CodecConfig codec;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SceneRecord scene = generate_scene(seed, opt);
    std::vector<ObjectAnnotation> annotations;
    for (const SceneObject& o : scene.objects) annotations.push_back(annotate_object(o.box, 0, calib));
    const HeadTargets targets = encode_targets(annotations, codec);
    const auto objects = observations_from_heads(targets.dense, codec);
    ASSERT_EQ(objects.size(), scene.objects.size());
    // Mean dims are decoded; solve with the true ones for an exact check.
    std::vector<FrameObservation> exact_dims = objects;
    for (auto& ob : exact_dims) {
      for (const SceneObject& o : scene.objects) {
        const Box2D b = fixture::left_box(o.box, calib);
        if (std::abs(b.center_x() - ob.left.center_x()) < 1e-6) {
          ob.dims = {o.box.length, o.box.width, o.box.height};
        }
      }
    }
    const FrameSolution sol = solve_frame(exact_dims, calib, SolverConfig{});
    for (const SolvedObject& s : sol.objects) {
      ASSERT_TRUE(s.pose.converged);
      double best = 1e9;
      for (const SceneObject& o : scene.objects) best = std::min(best, std::abs(o.box.z - s.pose.z));
      EXPECT_LT(best, 1e-5);
    }
  }
}

TEST(Pipeline, RefinementImprovesCorruptedDepthOnRenderedFrame) {
  const StereoCalibration calib;
  const Box3D truth{1.5, 0.9, 17.0, 0.5, 3.9, 1.6, 1.5};
  const std::vector<Box3D> boxes{truth};
  const StereoPair pair = render_scene(boxes, calib, 4);
  const ObservationVector exact = project_observations(truth, calib);
  FrameObservation ob;
  ob.left = fixture::left_box(truth, calib);
  ob.right_x1 = calib.to_pixel_u(exact[kRightUMin]);
  ob.right_x2 = calib.to_pixel_u(exact[kRightUMax]);
  ob.keypoint_u = calib.to_pixel_u(exact[kKeypointU]);
  ob.dims = {truth.length, truth.width, truth.height};
  ob.alpha = theta_to_alpha(truth.theta, truth.x, truth.z);
  // Biased right box: disparity too small, so the geometric depth is too far.
  ob.right_x1 += 1.0;
  ob.right_x2 += 1.0;
  const FrameSolution sol = solve_frame({ob}, calib, SolverConfig{}, &pair.left, &pair.right);
  ASSERT_EQ(sol.objects.size(), 1u);
  const FrameSolution geometric = solve_frame({ob}, calib, SolverConfig{});
  EXPECT_TRUE(sol.objects[0].refined);
  EXPECT_LT(std::abs(sol.objects[0].pose.z - truth.z), std::abs(geometric.objects[0].pose.z - truth.z));
}

TEST(Pipeline, MissingInputDirectoryThrows) {
  SolveRunOptions solve;
  solve.input_dir = "/nonexistent/sc_scene";
  solve.output_dir = fs::temp_directory_path() / "sc_pipeline_missing_out";
  EXPECT_THROW(run_solve(solve), Error);
}
