#ifndef STEREOCENTER_SC_API_H
#define STEREOCENTER_SC_API_H

#include <stddef.h>
#include <stdint.h>

#if defined(SC_BUILDING_LIBRARY)
#define SC_API __attribute__((visibility("default")))
#else
#define SC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Values 1-11 mirror the library's error categories. */
typedef enum sc_status {
  SC_OK = 0,
  SC_ERR_INVALID_ARGUMENT = 1,
  SC_ERR_BEHIND_CAMERA = 2,
  SC_ERR_NON_POSITIVE_DISPARITY = 3,
  SC_ERR_DIVERGED_SOLUTION = 4,
  SC_ERR_NON_POSITIVE_DEPTH = 5,
  SC_ERR_UNDERCONSTRAINED_SYSTEM = 6,
  SC_ERR_NON_FINITE_INPUT = 7,
  SC_ERR_MALFORMED_LINE = 8,
  SC_ERR_DEGENERATE_CALIBRATION = 9,
  SC_ERR_INFEASIBLE_PLACEMENT = 10,
  SC_ERR_IO = 11,
  SC_ERR_INTERNAL = 99
} sc_status;

/* Message of the last failure on the calling thread ("" if none). */
SC_API const char* sc_last_error(void);
SC_API const char* sc_status_name(sc_status status);

typedef struct sc_calibration {
  double fx, fy, cx, cy;
  double baseline;
  int image_width, image_height;
} sc_calibration;

typedef struct sc_box3d {
  double x, y, z, theta;
  double length, width, height;
} sc_box3d;

/* Normalized coordinates: left u_min, v_min, u_max, v_max, right u_min,
   u_max, keypoint u. NaN marks a missing row. */
typedef struct sc_observation {
  double values[7];
} sc_observation;

typedef struct sc_solver_config {
  int max_iterations;
  double step_tolerance;
  double residual_tolerance;
  double damping_lambda;
  double fallback_damping;
  double min_depth;
  int drop_out_of_image_rows;
} sc_solver_config;

typedef enum sc_solve_status {
  SC_SOLVE_CONVERGED = 0,
  SC_SOLVE_MAX_ITERATIONS = 1,
  SC_SOLVE_NO_DISPARITY = 2
} sc_solve_status;

typedef struct sc_pose {
  double x, y, z, theta;
  double residual_norm;
  int iterations;
  int converged;
  sc_solve_status status;
  int rows_used;
} sc_pose;

SC_API void sc_calibration_default(sc_calibration* out);
SC_API void sc_solver_config_default(sc_solver_config* out);

SC_API sc_status sc_project(const sc_box3d* box, const sc_calibration* calib, sc_observation* out);

typedef struct sc_solver sc_solver;

SC_API sc_status sc_solver_create(const sc_calibration* calib, const sc_solver_config* config,
                                  sc_solver** out);
SC_API void sc_solver_destroy(sc_solver* solver);
SC_API sc_status sc_solver_solve(const sc_solver* solver, const sc_observation* obs,
                                 double length, double width, double height, double alpha,
                                 sc_pose* out);

/* Depth-line occlusion flags for n objects (1 = occluded). */
SC_API sc_status sc_classify_occlusion(const double* x_min, const double* x_max, const double* z,
                                       size_t n, int buffer_length, int* occluded_out);

typedef struct sc_synth_options {
  const char* output_dir;
  uint64_t seed;
  int frames;
  int objects_per_frame;
  double z_min, z_max;
  double occlusion_fraction;
  double noise_sigma; /* pixels */
  int write_heads;
  int write_images;
  int workers;
  sc_calibration calib;
} sc_synth_options;

SC_API void sc_synth_options_default(sc_synth_options* out);
SC_API sc_status sc_run_synth(const sc_synth_options* options);

typedef struct sc_solve_options {
  const char* input_dir;
  const char* output_dir;
  const char* calib_path; /* optional, NULL for per-frame calib files */
  sc_solver_config solver;
  int refine_depth;
  int workers;
} sc_solve_options;

typedef struct sc_solve_summary {
  int frames;
  int objects;
  int solved;
  int failed_frames;
  double median_object_ms;
} sc_solve_summary;

SC_API void sc_solve_options_default(sc_solve_options* out);
SC_API sc_status sc_run_solve(const sc_solve_options* options, sc_solve_summary* summary);

typedef struct sc_eval_options {
  const char* results_dir;
  const char* ground_truth_dir;
  const char* output_dir; /* optional */
  int ap_points;          /* 11 or 40 */
  double car_iou;
  double pedestrian_iou;
  double cyclist_iou;
  int workers;
} sc_eval_options;

typedef struct sc_report sc_report;

SC_API void sc_eval_options_default(sc_eval_options* out);
SC_API sc_status sc_run_eval(const sc_eval_options* options, sc_report** out);

/* Codec encode/decode and gradient self-test. *passed is 1 when every check
   passes. */
SC_API sc_status sc_run_codec_selftest(uint64_t seed, int inject_gradient_bug, sc_report** out,
                                       int* passed);

/* Report text stays valid until sc_report_destroy. */
SC_API const char* sc_report_text(const sc_report* report);
SC_API const char* sc_report_key_values(const sc_report* report);
SC_API const char* sc_report_pr_csv(const sc_report* report);
SC_API void sc_report_destroy(sc_report* report);

#ifdef __cplusplus
}
#endif

#endif
