#include "stereocenter/sc_api.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "stereocenter/alignment.hpp"
#include "stereocenter/codec_selftest.hpp"
#include "stereocenter/error.hpp"
#include "stereocenter/pipeline.hpp"
#include "stereocenter/solver.hpp"

struct sc_solver {
  sc::StereoCalibration calib;
  sc::SolverConfig config;
};

struct sc_report {
  std::string text;
  std::string key_values;
  std::string pr_csv;
};

namespace {

thread_local std::string last_error;

template <typename F>
sc_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return SC_OK;
  } catch (const sc::Error& e) {
    last_error = e.what();
    return static_cast<sc_status>(static_cast<int>(e.code()));
  } catch (const std::exception& e) {
    last_error = e.what();
    return SC_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return SC_ERR_INTERNAL;
  }
}

void require(const void* pointer, const char* name) {
  if (pointer == nullptr) {
    throw sc::Error(sc::ErrorCode::kInvalidArgument, std::string(name) + " is null");
  }
}

sc::StereoCalibration to_cpp(const sc_calibration& c) {
  sc::StereoCalibration calib;
  calib.fx = c.fx;
  calib.fy = c.fy;
  calib.cx = c.cx;
  calib.cy = c.cy;
  calib.baseline = c.baseline;
  calib.image_width = c.image_width;
  calib.image_height = c.image_height;
  calib.validate();
  return calib;
}

sc_calibration to_c(const sc::StereoCalibration& calib) {
  return {calib.fx, calib.fy, calib.cx, calib.cy, calib.baseline, calib.image_width,
          calib.image_height};
}

sc::SolverConfig to_cpp(const sc_solver_config& c) {
  sc::SolverConfig config;
  config.max_iterations = c.max_iterations;
  config.step_tolerance = c.step_tolerance;
  config.residual_tolerance = c.residual_tolerance;
  config.damping_lambda = c.damping_lambda;
  config.fallback_damping = c.fallback_damping;
  config.min_depth = c.min_depth;
  config.drop_out_of_image_rows = c.drop_out_of_image_rows != 0;
  config.validate();
  return config;
}

}  // namespace

extern "C" {

const char* sc_last_error(void) { return last_error.c_str(); }

const char* sc_status_name(sc_status status) {
  if (status == SC_OK) return "ok";
  if (status == SC_ERR_INTERNAL) return "internal error";
  return sc::to_string(static_cast<sc::ErrorCode>(static_cast<int>(status)));
}

void sc_calibration_default(sc_calibration* out) {
  if (out != nullptr) *out = to_c(sc::StereoCalibration{});
}

void sc_solver_config_default(sc_solver_config* out) {
  if (out == nullptr) return;
  const sc::SolverConfig d;
  *out = {d.max_iterations, d.step_tolerance,   d.residual_tolerance,
          d.damping_lambda, d.fallback_damping, d.min_depth,
          d.drop_out_of_image_rows ? 1 : 0};
}

sc_status sc_project(const sc_box3d* box, const sc_calibration* calib, sc_observation* out) {
  return guarded([&] {
    require(box, "box");
    require(calib, "calib");
    require(out, "out");
    const sc::Box3D b{box->x, box->y, box->z, box->theta, box->length, box->width, box->height};
    const sc::ObservationVector obs = sc::project_observations(b, to_cpp(*calib));
    std::copy(obs.values.begin(), obs.values.end(), out->values);
  });
}

sc_status sc_solver_create(const sc_calibration* calib, const sc_solver_config* config,
                           sc_solver** out) {
  return guarded([&] {
    require(calib, "calib");
    require(out, "out");
    *out = nullptr;
    sc::SolverConfig cfg;
    if (config != nullptr) cfg = to_cpp(*config);
    *out = new sc_solver{to_cpp(*calib), cfg};
  });
}

void sc_solver_destroy(sc_solver* solver) { delete solver; }

sc_status sc_solver_solve(const sc_solver* solver, const sc_observation* obs, double length,
                          double width, double height, double alpha, sc_pose* out) {
  return guarded([&] {
    require(solver, "solver");
    require(obs, "obs");
    require(out, "out");
    sc::ObservationVector v;
    std::copy(obs->values, obs->values + 7, v.values.begin());
    const sc::PoseEstimate p =
        sc::solve_pose(v, {length, width, height}, alpha, solver->calib, solver->config);
    *out = {p.x,
            p.y,
            p.z,
            p.theta,
            p.residual_norm,
            p.iterations,
            p.converged ? 1 : 0,
            static_cast<sc_solve_status>(static_cast<int>(p.status)),
            p.rows_used};
  });
}

sc_status sc_classify_occlusion(const double* x_min, const double* x_max, const double* z,
                                size_t n, int buffer_length, int* occluded_out) {
  return guarded([&] {
    if (n == 0) return;
    require(x_min, "x_min");
    require(x_max, "x_max");
    require(z, "z");
    require(occluded_out, "occluded_out");
    std::vector<sc::ObjectExtent> extents(n);
    for (size_t i = 0; i < n; ++i) extents[i] = {x_min[i], x_max[i], z[i]};
    const sc::OcclusionResult r = sc::classify_occlusion(extents, buffer_length);
    for (size_t i = 0; i < n; ++i) occluded_out[i] = r.occluded[i] ? 1 : 0;
  });
}

void sc_synth_options_default(sc_synth_options* out) {
  if (out == nullptr) return;
  const sc::SceneOptions d;
  *out = sc_synth_options{};
  out->frames = 10;
  out->objects_per_frame = d.n_objects;
  out->z_min = d.z_min;
  out->z_max = d.z_max;
  out->occlusion_fraction = d.occlusion_fraction;
  out->noise_sigma = d.noise.pixel_sigma;
  out->workers = 1;
  out->calib = to_c(d.calib);
}

sc_status sc_run_synth(const sc_synth_options* options) {
  return guarded([&] {
    require(options, "options");
    require(options->output_dir, "output_dir");
    sc::SynthRunOptions run;
    run.output_dir = options->output_dir;
    run.seed = options->seed;
    run.frames = options->frames;
    run.scene.n_objects = options->objects_per_frame;
    run.scene.z_min = options->z_min;
    run.scene.z_max = options->z_max;
    run.scene.occlusion_fraction = options->occlusion_fraction;
    run.scene.noise.pixel_sigma = options->noise_sigma;
    run.scene.calib = to_cpp(options->calib);
    run.write_heads = options->write_heads != 0;
    run.write_images = options->write_images != 0;
    run.workers = options->workers;
    sc::run_synth(run);
  });
}

void sc_solve_options_default(sc_solve_options* out) {
  if (out == nullptr) return;
  *out = sc_solve_options{};
  sc_solver_config_default(&out->solver);
  out->refine_depth = 1;
  out->workers = 1;
}

sc_status sc_run_solve(const sc_solve_options* options, sc_solve_summary* summary) {
  return guarded([&] {
    require(options, "options");
    require(options->input_dir, "input_dir");
    require(options->output_dir, "output_dir");
    sc::SolveRunOptions run;
    run.input_dir = options->input_dir;
    run.output_dir = options->output_dir;
    if (options->calib_path != nullptr) run.calib_path = options->calib_path;
    run.solver = to_cpp(options->solver);
    run.refine_depth = options->refine_depth != 0;
    run.workers = options->workers;
    const sc::SolveRunSummary s = sc::run_solve(run);
    if (summary != nullptr) {
      std::vector<double> times = s.object_milliseconds;
      double median = 0.0;
      if (!times.empty()) {
        std::sort(times.begin(), times.end());
        const std::size_t mid = times.size() / 2;
        median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
      }
      *summary = {s.frames, s.objects, s.solved, s.failed_frames, median};
    }
    if (s.failed_frames > 0) {
      throw sc::Error(sc::ErrorCode::kIoError, std::to_string(s.failed_frames) +
                                                   " frame(s) failed, first: " + s.errors.front());
    }
  });
}

void sc_eval_options_default(sc_eval_options* out) {
  if (out == nullptr) return;
  const sc::EvalConfig d;
  *out = sc_eval_options{};
  out->ap_points = d.ap_points;
  out->car_iou = d.iou_threshold.at("Car");
  out->pedestrian_iou = d.iou_threshold.at("Pedestrian");
  out->cyclist_iou = d.iou_threshold.at("Cyclist");
  out->workers = 1;
}

sc_status sc_run_eval(const sc_eval_options* options, sc_report** out) {
  return guarded([&] {
    require(options, "options");
    require(options->results_dir, "results_dir");
    require(options->ground_truth_dir, "ground_truth_dir");
    require(out, "out");
    *out = nullptr;
    sc::EvalRunOptions run;
    run.results_dir = options->results_dir;
    run.ground_truth_dir = options->ground_truth_dir;
    if (options->output_dir != nullptr) run.output_dir = options->output_dir;
    run.eval.ap_points = options->ap_points;
    run.eval.iou_threshold = {{"Car", options->car_iou},
                              {"Pedestrian", options->pedestrian_iou},
                              {"Cyclist", options->cyclist_iou}};
    run.eval.workers = options->workers;
    const sc::EvalReport report = sc::run_eval(run);
    *out = new sc_report{report.to_text(), report.to_key_values(), report.to_pr_csv()};
  });
}

sc_status sc_run_codec_selftest(uint64_t seed, int inject_gradient_bug, sc_report** out,
                                int* passed) {
  return guarded([&] {
    require(out, "out");
    require(passed, "passed");
    *out = nullptr;
    sc::CodecSelfTestOptions options;
    options.seed = seed;
    options.inject_gradient_bug = inject_gradient_bug != 0;
    const sc::CodecSelfTestReport report = sc::run_codec_selftest(options);
    *passed = report.passed() ? 1 : 0;
    *out = new sc_report{report.to_text(), {}, {}};
  });
}

const char* sc_report_text(const sc_report* report) {
  return report != nullptr ? report->text.c_str() : "";
}

const char* sc_report_key_values(const sc_report* report) {
  return report != nullptr ? report->key_values.c_str() : "";
}

const char* sc_report_pr_csv(const sc_report* report) {
  return report != nullptr ? report->pr_csv.c_str() : "";
}

void sc_report_destroy(sc_report* report) { delete report; }

}  // extern "C"
