// sc: batch front end for the stereo geometric pipeline.
//
//   sc synth --out DIR [--frames N] [--objects N] [--heads] [--images]
//   sc solve --input DIR --out DIR [--calib FILE] [--no-refine]
//   sc eval  --results DIR --gt DIR [--out DIR] [--ap-mode 11|40]
//   sc codec [--inject-gradient-bug]
//
// A manifest given with --config holds `key = value` lines. Global keys
// (seed, workers, calib, ap-mode, noise-sigma) sit at the top; subcommand keys
// are written `synth.frames = 4` or under a [synth] section. Flags on the
// command line override the manifest.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "stereocenter/sc_api.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitSelfTestFailed = 2;

int fail(const std::string& message) {
  std::fprintf(stderr, "sc: %s\n", message.c_str());
  return kExitInputError;
}

int fail_status(const char* what, sc_status status) {
  return fail(std::string(what) + " failed (" + sc_status_name(status) + "): " + sc_last_error());
}

bool require_dir(const std::string& path, const char* role, std::string& error) {
  if (std::filesystem::is_directory(path)) return true;
  error = std::string(role) + " directory not found: " + path;
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo 3D box recovery from 2D stereo detections"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Manifest file with key = value lines");
  app.get_config_formatter_base()->valueSeparator('=');

  std::uint64_t seed = 0;
  int workers = 1;
  std::string calib_path;
  int ap_mode = 11;
  double noise_sigma = 0.0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--calib", calib_path, "KITTI calibration file applied to every frame");
  app.add_option("--ap-mode", ap_mode, "AP interpolation points")
      ->check(CLI::IsMember({11, 40}))
      ->capture_default_str();
  app.add_option("--noise-sigma", noise_sigma, "Observation noise in pixels")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  sc_synth_options synth;
  sc_synth_options_default(&synth);
  std::string synth_out;
  bool synth_heads = false;
  bool synth_images = false;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene directory");
  synth_cmd->fallthrough()->configurable();
  synth_cmd->add_option("--out", synth_out, "Output scene directory")->required();
  synth_cmd->add_option("--frames", synth.frames, "Number of frames")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--objects", synth.objects_per_frame, "Objects per frame")
      ->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--z-min", synth.z_min, "Nearest object depth (m)")->capture_default_str();
  synth_cmd->add_option("--z-max", synth.z_max, "Farthest object depth (m)")->capture_default_str();
  synth_cmd->add_option("--occlusion", synth.occlusion_fraction, "Fraction of occluded objects")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth_cmd->add_flag("--heads", synth_heads, "Also write encoded head maps");
  synth_cmd->add_flag("--images", synth_images, "Also render the stereo pair");

  sc_solve_options solve;
  sc_solve_options_default(&solve);
  std::string solve_in;
  std::string solve_out;
  bool no_refine = false;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Recover 3D boxes for a scene directory");
  solve_cmd->fallthrough()->configurable();
  solve_cmd->add_option("--input", solve_in, "Scene directory")->required();
  solve_cmd->add_option("--out", solve_out, "Result directory")->required();
  solve_cmd->add_option("--max-iterations", solve.solver.max_iterations, "Solver iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  solve_cmd->add_flag("--no-refine", no_refine, "Skip photometric depth refinement");

  sc_eval_options eval;
  sc_eval_options_default(&eval);
  std::string eval_results;
  std::string eval_gt;
  std::string eval_out;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score result files against ground truth");
  eval_cmd->fallthrough()->configurable();
  eval_cmd->add_option("--results", eval_results, "Result directory")->required();
  eval_cmd->add_option("--gt", eval_gt, "Ground-truth scene directory")->required();
  eval_cmd->add_option("--out", eval_out, "Directory for metrics and PR curves");

  bool inject_bug = false;
  CLI::App* codec_cmd = app.add_subcommand("codec", "Run the head codec self-test");
  codec_cmd->fallthrough()->configurable();
  codec_cmd->add_flag("--inject-gradient-bug", inject_bug, "Corrupt one gradient on purpose");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  std::string error;
  if (!calib_path.empty() && !std::filesystem::is_regular_file(calib_path)) {
    return fail("calibration file not found: " + calib_path);
  }

  if (*synth_cmd) {
    synth.output_dir = synth_out.c_str();
    synth.seed = seed;
    synth.noise_sigma = noise_sigma;
    synth.write_heads = synth_heads ? 1 : 0;
    synth.write_images = synth_images ? 1 : 0;
    synth.workers = workers;
    const sc_status status = sc_run_synth(&synth);
    if (status != SC_OK) return fail_status("synth", status);
    std::printf("wrote %d frame(s) to %s\n", synth.frames, synth_out.c_str());
    return kExitOk;
  }

  if (*solve_cmd) {
    if (!require_dir(solve_in, "input", error)) return fail(error);
    solve.input_dir = solve_in.c_str();
    solve.output_dir = solve_out.c_str();
    solve.calib_path = calib_path.empty() ? nullptr : calib_path.c_str();
    solve.refine_depth = no_refine ? 0 : 1;
    solve.workers = workers;
    sc_solve_summary summary{};
    const sc_status status = sc_run_solve(&solve, &summary);
    std::printf("frames %d objects %d solved %d failed_frames %d median_ms %.4f\n", summary.frames,
                summary.objects, summary.solved, summary.failed_frames, summary.median_object_ms);
    if (status != SC_OK) return fail_status("solve", status);
    return kExitOk;
  }

  if (*eval_cmd) {
    if (!require_dir(eval_results, "results", error)) return fail(error);
    if (!require_dir(eval_gt, "ground truth", error)) return fail(error);
    eval.results_dir = eval_results.c_str();
    eval.ground_truth_dir = eval_gt.c_str();
    eval.output_dir = eval_out.empty() ? nullptr : eval_out.c_str();
    eval.ap_points = ap_mode;
    eval.workers = workers;
    sc_report* report = nullptr;
    const sc_status status = sc_run_eval(&eval, &report);
    if (status != SC_OK) return fail_status("eval", status);
    std::fputs(sc_report_text(report), stdout);
    sc_report_destroy(report);
    return kExitOk;
  }

  if (*codec_cmd) {
    sc_report* report = nullptr;
    int passed = 0;
    const sc_status status =
        sc_run_codec_selftest(seed, inject_bug ? 1 : 0, &report, &passed);
    if (status != SC_OK) return fail_status("codec self-test", status);
    std::fputs(sc_report_text(report), stdout);
    sc_report_destroy(report);
    return passed ? kExitOk : kExitSelfTestFailed;
  }
  return kExitInputError;
}
