#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stereocenter/alignment.hpp"
#include "stereocenter/eval.hpp"
#include "stereocenter/heatmap_codec.hpp"
#include "stereocenter/solver.hpp"
#include "stereocenter/synth.hpp"

namespace sc {

/// One detection handed to the geometric stage, in pixels.
struct FrameObservation {
  std::string type = "Car";
  double score = 1.0;
  Box2D left;
  double right_x1 = 0.0;
  double right_x2 = 0.0;
  double keypoint_u = 0.0;
  Dimensions dims;
  double alpha = 0.0;
  /// Bottom vertices when the detection came from head maps; lets the solver
  /// re-pick the keypoint once the pose is known.
  std::optional<std::array<Eigen::Vector2d, 4>> vertices;

  ObservationVector normalized(const StereoCalibration& calib) const;
};

/// Observation file: one object per line,
///   type score u1 v1 u2 v2 u1' u2' up L W H alpha
/// with pixel columns, meters, and the internal local angle. Missing rows are
/// written as nan.
std::vector<FrameObservation> read_observation_file(const std::filesystem::path& path);
void write_observation_file(const std::filesystem::path& path,
                            const std::vector<FrameObservation>& objects);

/// Frame stem used for every per-frame file (six digits, zero padded).
std::string frame_name(int index);

struct SynthRunOptions {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  int frames = 10;
  SceneOptions scene;
  bool write_heads = false;
  bool write_images = false;
  int workers = 1;
};

/// Writes calib/, label_2/, observations/ and truth/ (full-precision boxes),
/// plus heads/ and image_2/, image_3/ when requested. Output depends only on
/// the options, never on the worker count.
void run_synth(const SynthRunOptions& options);

struct SolveRunOptions {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> calib_path;  // overrides per-frame calib files
  SolverConfig solver;
  RefineConfig refine;
  CodecConfig codec;
  bool refine_depth = true;
  int image_width = 1280;
  int image_height = 384;
  int workers = 1;
};

struct SolvedObject {
  FrameObservation observation;
  PoseEstimate pose;
  bool occluded = false;
  bool refined = false;
  double milliseconds = 0.0;
};

struct FrameSolution {
  std::vector<SolvedObject> objects;
};

struct SolveRunSummary {
  int frames = 0;
  int objects = 0;
  int solved = 0;
  int failed_frames = 0;
  std::vector<double> object_milliseconds;  // frame order
  std::vector<std::string> errors;          // one message per failed frame
};

/// Geometric stage for one frame: solve every object, classify occlusion on
/// the solved depths, then refine unoccluded depths when a stereo pair is
/// given.
FrameSolution solve_frame(const std::vector<FrameObservation>& objects,
                          const StereoCalibration& calib, const SolverConfig& solver,
                          const GrayImage* left = nullptr, const GrayImage* right = nullptr,
                          const RefineConfig& refine = {});

/// Decoded detections as geometric-stage input.
std::vector<FrameObservation> observations_from_heads(const HeadMaps& maps, const CodecConfig& codec);

/// Reads a scene directory, writes KITTI result files to `output_dir` and
/// full-precision poses to `output_dir/poses`. Per-frame failures are logged
/// and counted; the run throws only when nothing can be processed at all.
SolveRunSummary run_solve(const SolveRunOptions& options);

struct EvalRunOptions {
  std::filesystem::path results_dir;
  std::filesystem::path ground_truth_dir;  // scene directory with label_2/ and calib/
  std::optional<std::filesystem::path> output_dir;
  EvalConfig eval;
};

/// Evaluates result files against ground truth; writes metrics.txt,
/// metrics.kv and pr_curve.csv when an output directory is given.
EvalReport run_eval(const EvalRunOptions& options);

}  // namespace sc
