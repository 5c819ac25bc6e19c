#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stereocenter/heatmap_codec.hpp"

namespace sc {

struct CodecSelfTestOptions {
  std::uint64_t seed = 7;
  int round_trip_objects = 100;
  int gradient_fixtures = 20;
  /// Scales one analytic gradient so the gradient checks must fail. Used to
  /// prove the checks can detect a broken derivative.
  bool inject_gradient_bug = false;
};

struct SelfTestCheck {
  std::string name;
  bool passed = false;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;  // largest error seen (meaning depends on the check)
};

struct ThresholdSweepPoint {
  double threshold = 0.0;
  int detections = 0;
};

struct CodecSelfTestReport {
  std::vector<SelfTestCheck> checks;
  std::vector<ThresholdSweepPoint> sweep;
  bool sweep_monotone = false;

  bool passed() const;
  std::string to_text() const;
};

/// Small head grid used by the gradient fixtures (64 x 48 pixels, R = 4).
CodecConfig gradient_fixture_config();

/// Random annotations placed inside the image of `config`.
std::vector<ObjectAnnotation> random_annotations(std::uint64_t seed, int count,
                                                 const CodecConfig& config);

/// Random head predictions with heatmaps in (0.01, 0.99) and regression
/// channels kept at least `margin` away from their targets so the L1 kinks
/// are not straddled by finite-difference steps.
HeadMaps random_predictions(std::uint64_t seed, const HeadTargets& targets, double margin = 1e-2);

/// Predictions that reproduce the targets: regression heads equal to the
/// targets, heatmaps at 1 - eps on positive cells and eps elsewhere.
HeadMaps perfect_predictions(const HeadTargets& targets, double eps = 1e-6);

struct GradientCheck {
  double worst_relative = 0.0;
  int elements = 0;
};

using HeadLoss = std::function<LossValue(const HeadMaps&)>;

/// Largest relative disagreement between the analytic gradient of `loss` with
/// respect to `head` and central differences, over every element of the head.
/// `gradient_scale` multiplies the analytic side (1 for a genuine check).
GradientCheck check_head_gradient(HeadMaps predicted, Tensor HeadMaps::*head,
                                  const HeadLoss& loss, double step = 1e-6,
                                  double gradient_scale = 1.0);

/// Relative error, or the absolute error when both values are below `floor`.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Encode/decode round trip, loss gradient checks against central differences
/// and a decode threshold sweep.
CodecSelfTestReport run_codec_selftest(const CodecSelfTestOptions& options = {});

}  // namespace sc
