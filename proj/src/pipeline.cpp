#include "stereocenter/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "stereocenter/error.hpp"
#include "stereocenter/kitti_io.hpp"
#include "stereocenter/log.hpp"
#include "stereocenter/parallel.hpp"

namespace sc {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> fields;
  for (std::string f; in >> f;) fields.push_back(f);
  return fields;
}

double parse_number(const std::string& text, std::size_t field) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kMalformedLine,
              "field " + std::to_string(field) + " is not a number: '" + text + "'");
}

void append_g(std::string& out, double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, " %.17g", value);
  out += buffer;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

std::vector<std::string> stems_in(const fs::path& dir, const std::string& extension) {
  std::vector<std::string> stems;
  if (!fs::is_directory(dir)) return stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

std::uint64_t frame_seed(std::uint64_t seed, int frame) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(frame);
}

Box2D left_box_of(const ObservationVector& obs, const StereoCalibration& calib) {
  return {calib.to_pixel_u(obs[kLeftUMin]), calib.to_pixel_v(obs[kLeftVMin]),
          calib.to_pixel_u(obs[kLeftUMax]), calib.to_pixel_v(obs[kLeftVMax])};
}

// Index of the bottom vertex lowest in the image, i.e. nearest in depth.
std::size_t lowest_vertex(const std::array<Eigen::Vector2d, 4>& vertices) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < 4; ++k) {
    if (vertices[k].y() > vertices[best].y()) best = k;
  }
  return best;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

ObservationVector FrameObservation::normalized(const StereoCalibration& calib) const {
  ObservationVector obs;
  obs[kLeftUMin] = calib.to_normalized_u(left.x1);
  obs[kLeftVMin] = calib.to_normalized_v(left.y1);
  obs[kLeftUMax] = calib.to_normalized_u(left.x2);
  obs[kLeftVMax] = calib.to_normalized_v(left.y2);
  obs[kRightUMin] = calib.to_normalized_u(right_x1);
  obs[kRightUMax] = calib.to_normalized_u(right_x2);
  obs[kKeypointU] = calib.to_normalized_u(keypoint_u);
  return obs;
}

std::vector<FrameObservation> read_observation_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<FrameObservation> objects;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::vector<std::string> f = split_ws(line);
    if (f.empty()) continue;
    try {
      if (f.size() != 13) {
        throw Error(ErrorCode::kMalformedLine, "expected 13 fields, got " + std::to_string(f.size()));
      }
      FrameObservation o;
      o.type = f[0];
      std::array<double, 12> v{};
      for (std::size_t i = 1; i < 13; ++i) v[i - 1] = parse_number(f[i], i + 1);
      o.score = v[0];
      o.left = {v[1], v[2], v[3], v[4]};
      o.right_x1 = v[5];
      o.right_x2 = v[6];
      o.keypoint_u = v[7];
      o.dims = {v[8], v[9], v[10]};
      o.alpha = v[11];
      objects.push_back(o);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return objects;
}

void write_observation_file(const fs::path& path, const std::vector<FrameObservation>& objects) {
  std::string text;
  for (const FrameObservation& o : objects) {
    text += o.type;
    for (double v : {o.score, o.left.x1, o.left.y1, o.left.x2, o.left.y2, o.right_x1, o.right_x2,
                     o.keypoint_u, o.dims.length, o.dims.width, o.dims.height, o.alpha}) {
      append_g(text, v);
    }
    text += '\n';
  }
  write_text(path, text);
}

std::string frame_name(int index) {
  char buffer[16];
  std::snprintf(buffer, sizeof buffer, "%06d", index);
  return buffer;
}

void run_synth(const SynthRunOptions& options) {
  if (options.frames < 0) throw Error(ErrorCode::kInvalidArgument, "frame count must be >= 0");
  options.scene.calib.validate();
  const fs::path& root = options.output_dir;
  std::vector<std::string> dirs{"calib", "label_2", "observations", "truth"};
  if (options.write_heads) dirs.push_back("heads");
  if (options.write_images) {
    dirs.push_back("image_2");
    dirs.push_back("image_3");
  }
  for (const std::string& d : dirs) fs::create_directories(root / d);

  const StereoCalibration& calib = options.scene.calib;
  CodecConfig codec;
  codec.image_width = calib.image_width;
  codec.image_height = calib.image_height;
  const std::string calib_text = format_calib(rig_to_calib(calib));

  parallel_for(static_cast<std::size_t>(options.frames), options.workers, [&](std::size_t i) {
    const int frame = static_cast<int>(i);
    const std::string stem = frame_name(frame);
    const std::uint64_t seed = frame_seed(options.seed, frame);
    const SceneRecord scene = generate_scene(seed, options.scene);

    write_text(root / "calib" / (stem + ".txt"), calib_text);

    std::vector<KittiLabel> labels;
    std::vector<FrameObservation> observations;
    std::vector<Box3D> boxes;
    std::string truth;
    for (const SceneObject& o : scene.objects) {
      const Dimensions dims{o.box.length, o.box.width, o.box.height};
      const ObservationVector exact = project_observations(o.box, calib);
      KittiLabel label = box_to_label(o.box, o.type, left_box_of(exact, calib));
      label.occluded = o.intended_occluded ? 2 : 0;
      labels.push_back(label);

      FrameObservation obs;
      obs.type = o.type;
      obs.left = left_box_of(o.observation, calib);
      obs.right_x1 = calib.to_pixel_u(o.observation[kRightUMin]);
      obs.right_x2 = calib.to_pixel_u(o.observation[kRightUMax]);
      obs.keypoint_u = calib.to_pixel_u(o.observation[kKeypointU]);
      obs.dims = dims;
      obs.alpha = theta_to_alpha(o.box.theta, o.box.x, o.box.z);
      observations.push_back(obs);

      truth += o.type;
      for (double v : {o.box.x, o.box.y, o.box.z, o.box.theta, o.box.length, o.box.width,
                       o.box.height}) {
        append_g(truth, v);
      }
      truth += o.intended_occluded ? " 1\n" : " 0\n";
      boxes.push_back(o.box);
    }
    write_label_file(root / "label_2" / (stem + ".txt"), labels);
    write_observation_file(root / "observations" / (stem + ".txt"), observations);
    write_text(root / "truth" / (stem + ".txt"), truth);

    if (options.write_heads) {
      std::vector<ObjectAnnotation> annotations;
      for (const Box3D& box : boxes) annotations.push_back(annotate_object(box, 0, calib));
      write_scht(root / "heads" / (stem + ".scht"), encode_targets(annotations, codec).dense.pack());
    }
    if (options.write_images) {
      const StereoPair pair = render_scene(boxes, calib, seed);
      write_pgm(root / "image_2" / (stem + ".pgm"), pair.left);
      write_pgm(root / "image_3" / (stem + ".pgm"), pair.right);
    }
  });
}

std::vector<FrameObservation> observations_from_heads(const HeadMaps& maps,
                                                      const CodecConfig& codec) {
  std::vector<FrameObservation> out;
  for (const StereoDetection& d : decode_detections(maps, codec)) {
    FrameObservation o;
    o.type = codec.classes[static_cast<std::size_t>(d.class_id)].name;
    o.score = d.score;
    o.left = d.left;
    o.right_x1 = d.right_x1;
    o.right_x2 = d.right_x2;
    o.dims = d.dims;
    o.alpha = d.alpha;
    o.vertices = d.vertices;
    o.keypoint_u = d.vertices[lowest_vertex(d.vertices)].x();
    out.push_back(o);
  }
  return out;
}

// Decoded vertices carry no visibility flag, so every one is tried as the
// keypoint. A solution counts only when the model agrees that the chosen vertex
// is the nearest one; among those the smallest residual wins.
static SolvedObject solve_with_vertices(const FrameObservation& o, const StereoCalibration& calib,
                                 const SolverConfig& solver) {
  SolvedObject best;
  best.observation = o;
  bool best_consistent = false;
  bool have = false;
  for (std::size_t k = 0; k < 4; ++k) {
    FrameObservation candidate = o;
    candidate.keypoint_u = (*o.vertices)[k].x();
    PoseEstimate pose;
    try {
      pose = solve_pose(candidate.normalized(calib), o.dims, o.alpha, calib, solver);
    } catch (const Error&) {
      continue;
    }
    if (!pose.usable()) continue;
    const bool consistent =
        static_cast<std::size_t>(
            perspective_vertex(pose.theta, pose.x, pose.z, o.dims.length, o.dims.width).index) == k;
    const bool better = !have || (consistent && !best_consistent) ||
                        (consistent == best_consistent && pose.residual_norm < best.pose.residual_norm);
    if (better) {
      best.observation = candidate;
      best.pose = pose;
      best_consistent = consistent;
      have = true;
    }
  }
  if (!have) throw Error(ErrorCode::kDivergedSolution, "no vertex gave a usable pose");
  return best;
}

FrameSolution solve_frame(const std::vector<FrameObservation>& objects,
                          const StereoCalibration& calib, const SolverConfig& solver,
                          const GrayImage* left, const GrayImage* right,
                          const RefineConfig& refine) {
  FrameSolution solution;
  solution.objects.reserve(objects.size());
  for (const FrameObservation& o : objects) {
    const auto start = std::chrono::steady_clock::now();
    SolvedObject solved;
    solved.observation = o;
    try {
      if (o.vertices) {
        solved = solve_with_vertices(o, calib, solver);
      } else {
        solved.pose = solve_pose(o.normalized(calib), o.dims, o.alpha, calib, solver);
      }
    } catch (const Error& e) {
      log::debug("solve_frame: object skipped ({})", e.what());
      solved.pose = PoseEstimate{};
    }
    solved.milliseconds = elapsed_ms(start);
    solution.objects.push_back(solved);
  }

  std::vector<ObjectExtent> extents;
  std::vector<std::size_t> solved_index;
  for (std::size_t i = 0; i < solution.objects.size(); ++i) {
    const SolvedObject& s = solution.objects[i];
    if (!s.pose.usable()) continue;
    extents.push_back({s.observation.left.x1, s.observation.left.x2, s.pose.z});
    solved_index.push_back(i);
  }
  if (extents.empty()) return solution;
  const auto start = std::chrono::steady_clock::now();
  const OcclusionResult occlusion =
      classify_occlusion_near_first(extents, std::max(calib.image_width, 1));
  const double share = elapsed_ms(start) / static_cast<double>(extents.size());
  for (std::size_t j = 0; j < solved_index.size(); ++j) {
    SolvedObject& s = solution.objects[solved_index[j]];
    s.occluded = occlusion.occluded[j];
    s.milliseconds += share;
  }

  if (left == nullptr || right == nullptr) return solution;
  for (std::size_t i : solved_index) {
    SolvedObject& s = solution.objects[i];
    const auto refine_start = std::chrono::steady_clock::now();
    const AlignmentInput input{s.pose.box(s.observation.dims), s.observation.left, s.occluded};
    const AlignmentOutput out =
        adaptive_refine(std::span<const AlignmentInput>(&input, 1), *left, *right, calib, refine)
            .front();
    s.refined = out.refined;
    s.pose.x = out.pose.x;
    s.pose.y = out.pose.y;
    s.pose.z = out.pose.z;
    s.milliseconds += elapsed_ms(refine_start);
  }
  return solution;
}

SolveRunSummary run_solve(const SolveRunOptions& options) {
  const fs::path& in = options.input_dir;
  if (!fs::is_directory(in)) {
    throw Error(ErrorCode::kIoError, "input directory " + in.string() + " does not exist");
  }
  options.solver.validate();
  std::set<std::string> stem_set;
  for (const auto& s : stems_in(in / "observations", ".txt")) stem_set.insert(s);
  for (const auto& s : stems_in(in / "heads", ".scht")) stem_set.insert(s);
  const std::vector<std::string> stems(stem_set.begin(), stem_set.end());
  log::debug("solve: {} frames from {} with {} workers", stems.size(), in.string(), options.workers);

  std::optional<KittiCalib> shared_calib;
  if (options.calib_path) shared_calib = read_calib_file(*options.calib_path);

  fs::create_directories(options.output_dir / "poses");
  std::vector<FrameSolution> solutions(stems.size());
  std::vector<std::string> failures(stems.size());

  parallel_for(stems.size(), options.workers, [&](std::size_t i) {
    const std::string& stem = stems[i];
    try {
      const KittiCalib kitti =
          shared_calib ? *shared_calib : read_calib_file(in / "calib" / (stem + ".txt"));
      std::optional<GrayImage> left;
      std::optional<GrayImage> right;
      const fs::path left_path = in / "image_2" / (stem + ".pgm");
      const fs::path right_path = in / "image_3" / (stem + ".pgm");
      if (options.refine_depth && fs::exists(left_path) && fs::exists(right_path)) {
        left = read_pgm(left_path);
        right = read_pgm(right_path);
      }
      const StereoCalibration rig =
          calib_to_rig(kitti, left ? left->width : options.image_width,
                       left ? left->height : options.image_height);
      const Eigen::Vector3d offset = left_camera_offset(kitti);

      std::vector<FrameObservation> objects;
      const fs::path heads = in / "heads" / (stem + ".scht");
      if (fs::exists(heads)) {
        CodecConfig codec = options.codec;
        codec.image_width = rig.image_width;
        codec.image_height = rig.image_height;
        const Tensor packed = read_scht(heads);
        const int classes = packed.channels() - HeadMaps::zeros(0, 1, 1).total_channels();
        if (classes != static_cast<int>(codec.classes.size())) {
          throw Error(ErrorCode::kInvalidArgument,
                      heads.string() + ": head file has " + std::to_string(classes) +
                          " classes, codec expects " + std::to_string(codec.classes.size()));
        }
        objects = observations_from_heads(HeadMaps::unpack(packed, classes), codec);
      } else {
        objects = read_observation_file(in / "observations" / (stem + ".txt"));
      }

      solutions[i] = solve_frame(objects, rig, options.solver, left ? &*left : nullptr,
                                 right ? &*right : nullptr, options.refine);

      std::vector<KittiLabel> results;
      std::string poses;
      for (const SolvedObject& s : solutions[i].objects) {
        if (!s.pose.usable()) continue;
        const Box3D box = s.pose.box(s.observation.dims);
        KittiLabel label = box_to_label(box, s.observation.type, s.observation.left,
                                        s.observation.score, offset);
        label.truncated = -1.0;
        label.occluded = -1;
        results.push_back(label);
        poses += s.observation.type;
        for (double v : {s.observation.score, box.x, box.y, box.z, box.theta, box.length,
                         box.width, box.height, s.observation.right_x1, s.observation.left.y1,
                         s.observation.right_x2, s.observation.left.y2}) {
          append_g(poses, v);
        }
        poses += s.occluded ? " 1" : " 0";
        poses += s.refined ? " 1\n" : " 0\n";
      }
      write_label_file(options.output_dir / (stem + ".txt"), results);
      write_text(options.output_dir / "poses" / (stem + ".txt"), poses);
    } catch (const std::exception& e) {
      log::error("frame {}: {}", stem, e.what());
      failures[i] = "frame " + stem + ": " + e.what();
    }
  });

  SolveRunSummary summary;
  summary.frames = static_cast<int>(stems.size());
  for (std::size_t i = 0; i < stems.size(); ++i) {
    if (!failures[i].empty()) {
      ++summary.failed_frames;
      summary.errors.push_back(failures[i]);
      continue;
    }
    for (const SolvedObject& s : solutions[i].objects) {
      ++summary.objects;
      if (s.pose.usable()) ++summary.solved;
      summary.object_milliseconds.push_back(s.milliseconds);
      log::info("frame {} object {}: {:.3f} ms", stems[i], summary.objects - 1, s.milliseconds);
    }
  }
  return summary;
}

EvalReport run_eval(const EvalRunOptions& options) {
  options.eval.validate();
  const fs::path labels_dir = options.ground_truth_dir / "label_2";
  if (!fs::is_directory(labels_dir)) {
    throw Error(ErrorCode::kIoError, "ground truth directory " + labels_dir.string() + " missing");
  }
  if (!fs::is_directory(options.results_dir)) {
    throw Error(ErrorCode::kIoError,
                "results directory " + options.results_dir.string() + " does not exist");
  }
  const std::vector<std::string> stems = stems_in(labels_dir, ".txt");
  std::vector<EvalFrame> frames(stems.size());
  for (std::size_t i = 0; i < stems.size(); ++i) {
    const std::string& stem = stems[i];
    const KittiCalib kitti = read_calib_file(options.ground_truth_dir / "calib" / (stem + ".txt"));
    const StereoCalibration rig = calib_to_rig(kitti);
    const std::vector<KittiLabel> gt = read_label_file(labels_dir / (stem + ".txt"));
    std::vector<KittiLabel> results;
    const fs::path result_path = options.results_dir / (stem + ".txt");
    if (fs::exists(result_path)) results = read_label_file(result_path);

    std::vector<std::optional<Box2D>> right_boxes;
    const fs::path poses_path = options.results_dir / "poses" / (stem + ".txt");
    if (fs::exists(poses_path)) {
      std::ifstream poses(poses_path);
      for (std::string line; std::getline(poses, line);) {
        const std::vector<std::string> f = split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 15) {
          throw Error(ErrorCode::kMalformedLine, poses_path.string() + ": expected 15 fields");
        }
        right_boxes.push_back(Box2D{parse_number(f[9], 10), parse_number(f[10], 11),
                                    parse_number(f[11], 12), parse_number(f[12], 13)});
      }
      if (right_boxes.size() != results.size()) right_boxes.clear();
    }
    frames[i] = make_frame(gt, results, rig, left_camera_offset(kitti), right_boxes);
  }

  const EvalReport report = evaluate(frames, options.eval);
  if (options.output_dir) {
    fs::create_directories(*options.output_dir);
    write_text(*options.output_dir / "metrics.txt", report.to_text());
    write_text(*options.output_dir / "metrics.kv", report.to_key_values());
    write_text(*options.output_dir / "pr_curve.csv", report.to_pr_csv());
  }
  return report;
}

}  // namespace sc
