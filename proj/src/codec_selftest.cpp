#include "stereocenter/codec_selftest.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <cstdio>
#include <random>
#include <tuple>

#include "stereocenter/synth.hpp"

namespace sc {

namespace {

constexpr double kGradientTolerance = 1e-4;
// At 1e-6 summation rounding in the heatmap losses dominates the smallest
// per-cell gradients; 1e-5 balances rounding against truncation.
constexpr double kDifferenceStep = 1e-5;
constexpr double kRoundTripTolerance = 1e-9;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Moves `value` at least `margin` away from every target.
double keep_clear(double value, const std::vector<double>& targets, double margin) {
  const bool clear = std::all_of(targets.begin(), targets.end(),
                                 [&](double t) { return std::abs(value - t) >= margin; });
  if (clear) return value;
  return *std::max_element(targets.begin(), targets.end()) + 2.0 * margin;
}

double angle_error(double a, double b) { return std::abs(normalize_angle(a - b)); }

SelfTestCheck round_trip_check(const CodecSelfTestOptions& options) {
  SelfTestCheck check;
  check.name = "round_trip";
  const CodecConfig config;
  SceneOptions scene_options;
  scene_options.n_objects = 1;
  scene_options.z_min = 5.0;
  scene_options.z_max = 60.0;
  for (int i = 0; i < options.round_trip_objects; ++i) {
    ++check.cases;
    const SceneRecord scene = generate_scene(options.seed * 1000003ull + static_cast<std::uint64_t>(i),
                                             scene_options);
    const Box3D& box = scene.objects.front().box;
    const ObjectAnnotation a = annotate_object(box, 0, scene.calib);
    const HeadTargets targets = encode_targets({a}, config);
    const std::vector<StereoDetection> found = decode_detections(targets.dense, config);
    double err = found.size() == 1 ? 0.0 : 1.0;
    if (found.size() == 1) {
      const StereoDetection& d = found.front();
      err = std::max({std::abs(d.left.x1 - a.left.x1), std::abs(d.left.y1 - a.left.y1),
                      std::abs(d.left.x2 - a.left.x2), std::abs(d.left.y2 - a.left.y2),
                      std::abs(d.right_x1 - a.right_x1), std::abs(d.right_x2 - a.right_x2),
                      std::abs(d.dims.length - a.dims.length),
                      std::abs(d.dims.width - a.dims.width),
                      std::abs(d.dims.height - a.dims.height), angle_error(d.alpha, a.alpha)});
    }
    check.worst = std::max(check.worst, err);
    if (!(err <= kRoundTripTolerance)) ++check.failures;
  }
  check.passed = check.failures == 0;
  return check;
}

SelfTestCheck gradient_suite(const std::string& name, Tensor HeadMaps::*head,
                             const std::function<LossValue(const HeadTargets&, const HeadMaps&)>& loss,
                             const CodecSelfTestOptions& options, double scale) {
  SelfTestCheck check;
  check.name = name;
  const CodecConfig config = gradient_fixture_config();
  for (int f = 0; f < options.gradient_fixtures; ++f) {
    const std::uint64_t seed = options.seed * 7919ull + static_cast<std::uint64_t>(f);
    const HeadTargets targets = encode_targets(random_annotations(seed, 3, config), config);
    const HeadMaps predicted = random_predictions(seed ^ 0xABCDEFull, targets);
    const GradientCheck g = check_head_gradient(
        predicted, head, [&](const HeadMaps& p) { return loss(targets, p); }, kDifferenceStep, scale);
    ++check.cases;
    check.worst = std::max(check.worst, g.worst_relative);
    if (!(g.worst_relative < kGradientTolerance)) ++check.failures;
  }
  check.passed = check.failures == 0;
  return check;
}

SelfTestCheck total_loss_check(const CodecSelfTestOptions& options) {
  SelfTestCheck check;
  check.name = "gradient.total";
  std::mt19937_64 rng(options.seed ^ 0x70741ull);
  const double h = kDifferenceStep;
  for (int f = 0; f < options.gradient_fixtures; ++f) {
    ++check.cases;
    LossVector losses{};
    LossWeights weights;
    for (std::size_t i = 0; i < kLossTerms; ++i) {
      losses[i] = uniform(rng, 0.0, 3.0);
      weights.log_variance[i] = uniform(rng, -2.0, 2.0);
    }
    const TotalLoss analytic = total_loss(losses, weights);
    double worst = 0.0;
    for (std::size_t i = 0; i < kLossTerms; ++i) {
      LossVector up = losses;
      LossVector down = losses;
      up[i] += h;
      down[i] -= h;
      const double d_loss =
          (total_loss(up, weights).value - total_loss(down, weights).value) / (2.0 * h);
      LossWeights w_up = weights;
      LossWeights w_down = weights;
      w_up.log_variance[i] += h;
      w_down.log_variance[i] -= h;
      const double d_s =
          (total_loss(losses, w_up).value - total_loss(losses, w_down).value) / (2.0 * h);
      worst = std::max({worst, relative_error(analytic.d_losses[i], d_loss),
                        relative_error(analytic.d_log_variance[i], d_s)});
    }
    check.worst = std::max(check.worst, worst);
    if (!(worst < kGradientTolerance)) ++check.failures;
  }
  check.passed = check.failures == 0;
  return check;
}

SelfTestCheck perfect_prediction_check(const CodecSelfTestOptions& options) {
  SelfTestCheck check;
  check.name = "perfect_prediction";
  const CodecConfig config = gradient_fixture_config();
  for (int f = 0; f < options.gradient_fixtures; ++f) {
    ++check.cases;
    const HeadTargets targets = encode_targets(
        random_annotations(options.seed * 104729ull + static_cast<std::uint64_t>(f), 1, config),
        config);
    const AllLosses all = compute_losses(targets, perfect_predictions(targets));
    double worst = 0.0;
    for (double v : all.values()) worst = std::max(worst, std::abs(v));
    worst = std::max(worst, std::abs(total_loss(all.values(), LossWeights{}).value));
    check.worst = std::max(check.worst, worst);
    if (!(worst <= 1e-6)) ++check.failures;
  }
  check.passed = check.failures == 0;
  return check;
}

std::vector<ThresholdSweepPoint> threshold_sweep(const CodecSelfTestOptions& options) {
  CodecConfig config;
  SceneOptions scene_options;
  scene_options.n_objects = 6;
  const SceneRecord scene = generate_scene(options.seed, scene_options);
  std::vector<ObjectAnnotation> annotations;
  for (const SceneObject& o : scene.objects) {
    annotations.push_back(annotate_object(o.box, 0, scene.calib));
  }
  HeadMaps maps = encode_targets(annotations, config).dense;
  // Background clutter so low thresholds admit spurious peaks.
  std::mt19937_64 rng(options.seed ^ 0x5EEDull);
  for (double& v : maps.center_heatmap.data()) v = std::max(v, uniform(rng, 0.0, 0.6));

  std::vector<ThresholdSweepPoint> sweep;
  for (int i = 1; i <= 9; ++i) {
    config.center_threshold = 0.1 * i;
    sweep.push_back({config.center_threshold,
                     static_cast<int>(decode_detections(maps, config).size())});
  }
  return sweep;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  // Near-zero gradients are compared absolutely: central differences of a
  // loss of order one carry about 1e-10 of rounding noise.
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale < floor ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
}

CodecConfig gradient_fixture_config() {
  CodecConfig config;
  config.image_width = 64;
  config.image_height = 48;
  return config;
}

std::vector<ObjectAnnotation> random_annotations(std::uint64_t seed, int count,
                                                 const CodecConfig& config) {
  std::mt19937_64 rng(seed);
  const double W = config.image_width;
  const double H = config.image_height;
  std::vector<ObjectAnnotation> out;
  for (int i = 0; i < count; ++i) {
    ObjectAnnotation a;
    a.class_id = static_cast<int>(std::uniform_int_distribution<std::size_t>(
        0, config.classes.size() - 1)(rng));
    const double w = uniform(rng, 0.15 * W, 0.45 * W);
    const double h = uniform(rng, 0.15 * H, 0.45 * H);
    a.left.x1 = uniform(rng, 0.0, W - w - 1.0);
    a.left.y1 = uniform(rng, 0.0, H - h - 1.0);
    a.left.x2 = a.left.x1 + w;
    a.left.y2 = a.left.y1 + h;
    a.right_x1 = a.left.x1 - uniform(rng, 1.0, 10.0);
    a.right_x2 = a.right_x1 + w * uniform(rng, 0.8, 1.2);
    const Dimensions& mean = config.classes[static_cast<std::size_t>(a.class_id)].mean;
    a.dims = {mean.length * uniform(rng, 0.8, 1.2), mean.width * uniform(rng, 0.8, 1.2),
              mean.height * uniform(rng, 0.8, 1.2)};
    a.alpha = uniform(rng, -kPi, kPi);
    // One dense cell holds one offset, so vertices of an object get distinct cells.
    const double R = config.downsample;
    for (std::size_t k = 0; k < a.vertices.size(); ++k) {
      bool shared = true;
      while (shared) {
        a.vertices[k] = {uniform(rng, -0.1 * W, W - 1.0), uniform(rng, 0.0, H - 1.0)};
        shared = false;
        for (std::size_t j = 0; j < k; ++j) {
          shared = shared ||
                   (std::floor(a.vertices[j].x() / R) == std::floor(a.vertices[k].x() / R) &&
                    std::floor(a.vertices[j].y() / R) == std::floor(a.vertices[k].y() / R));
        }
      }
    }
    out.push_back(a);
  }
  return out;
}

HeadMaps random_predictions(std::uint64_t seed, const HeadTargets& targets, double margin) {
  std::mt19937_64 rng(seed);
  HeadMaps p = targets.dense;
  for (double& v : p.center_heatmap.data()) v = uniform(rng, 0.01, 0.99);
  for (double& v : p.vertex_heatmap.data()) v = uniform(rng, 0.01, 0.99);
  for (Tensor* t : {&p.offset, &p.size, &p.distance, &p.dim_offset, &p.orientation,
                    &p.vertex_offset, &p.vertex_distance}) {
    for (double& v : t->data()) v += uniform(rng, -1.0, 1.0);
  }
  for (double& v : p.right_width.data()) v += uniform(rng, -0.5, 0.5);

  // A cell can hold targets of several objects, so each prediction is moved
  // clear of all of them at once; the right width is compared after its
  // exp(-raw) transform.
  std::map<double*, std::vector<double>> plain;
  std::map<double*, std::vector<double>> width;
  for (const ObjectTarget& t : targets.objects) {
    const int x = t.cell_x;
    const int y = t.cell_y;
    for (int c = 0; c < 2; ++c) {
      const auto i = static_cast<std::size_t>(c);
      plain[&p.offset.at(c, y, x)].push_back(t.offset[i]);
      plain[&p.size.at(c, y, x)].push_back(t.size[i]);
      plain[&p.distance.at(c, y, x)].push_back(t.distance[i]);
    }
    width[&p.right_width.at(0, y, x)].push_back(t.right_width);
    for (int c = 0; c < 3; ++c) {
      plain[&p.dim_offset.at(c, y, x)].push_back(t.dim_offset[static_cast<std::size_t>(c)]);
    }
    for (int c = 0; c < 8; ++c) {
      const auto i = static_cast<std::size_t>(c);
      plain[&p.orientation.at(c, y, x)].push_back(t.orientation[i]);
      plain[&p.vertex_distance.at(c, y, x)].push_back(t.vertex_distance[i]);
    }
    for (const VertexTarget& v : t.vertices) {
      if (!v.valid) continue;
      for (int c = 0; c < 2; ++c) {
        plain[&p.vertex_offset.at(c, v.cell_y, v.cell_x)].push_back(
            v.offset[static_cast<std::size_t>(c)]);
      }
    }
  }
  for (auto& [value, list] : plain) *value = keep_clear(*value, list, margin);
  for (auto& [raw, list] : width) *raw = -std::log(keep_clear(std::exp(-*raw), list, margin));
  return p;
}

HeadMaps perfect_predictions(const HeadTargets& targets, double eps) {
  HeadMaps p = targets.dense;
  for (Tensor* heat : {&p.center_heatmap, &p.vertex_heatmap}) {
    for (double& v : heat->data()) v = v == 1.0 ? 1.0 - eps : eps;
  }
  return p;
}

GradientCheck check_head_gradient(HeadMaps predicted, Tensor HeadMaps::*head, const HeadLoss& loss,
                                  double step, double gradient_scale) {
  const LossValue base = loss(predicted);
  GradientCheck result;
  std::vector<double>& values = (predicted.*head).data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + step;
    const double up = loss(predicted).value;
    values[i] = original - step;
    const double down = loss(predicted).value;
    values[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = gradient_scale * base.gradient.data()[i];
    result.worst_relative = std::max(result.worst_relative, relative_error(analytic, numeric));
    ++result.elements;
  }
  return result;
}

bool CodecSelfTestReport::passed() const {
  if (!sweep_monotone) return false;
  return std::all_of(checks.begin(), checks.end(), [](const SelfTestCheck& c) { return c.passed; });
}

std::string CodecSelfTestReport::to_text() const {
  std::string out;
  char line[160];
  for (const SelfTestCheck& c : checks) {
    std::snprintf(line, sizeof line, "%-28s %s cases=%d failures=%d worst=%.3e\n", c.name.c_str(),
                  c.passed ? "PASS" : "FAIL", c.cases, c.failures, c.worst);
    out += line;
  }
  out += "threshold_sweep";
  for (const ThresholdSweepPoint& p : sweep) {
    std::snprintf(line, sizeof line, " %.1f:%d", p.threshold, p.detections);
    out += line;
  }
  out += sweep_monotone ? " monotone\n" : " NOT monotone\n";
  out += passed() ? "codec self-test PASS\n" : "codec self-test FAIL\n";
  return out;
}

CodecSelfTestReport run_codec_selftest(const CodecSelfTestOptions& options) {
  CodecSelfTestReport report;
  report.checks.push_back(round_trip_check(options));

  auto focal = [](Tensor HeadMaps::*heat) {
    return [heat](const HeadTargets& t, const HeadMaps& p) {
      return focal_loss(p.*heat, t.dense.*heat);
    };
  };
  auto l1 = [](LossValue RegressionLosses::*term) {
    return [term](const HeadTargets& t, const HeadMaps& p) { return l1_losses(t, p).*term; };
  };
  const double bug = options.inject_gradient_bug ? 1.01 : 1.0;
  report.checks.push_back(gradient_suite("gradient.center_heatmap", &HeadMaps::center_heatmap,
                                         focal(&HeadMaps::center_heatmap), options, bug));
  report.checks.push_back(gradient_suite("gradient.vertex_heatmap", &HeadMaps::vertex_heatmap,
                                         focal(&HeadMaps::vertex_heatmap), options, 1.0));
  const std::array<std::tuple<const char*, Tensor HeadMaps::*, LossValue RegressionLosses::*>, 8>
      regressions{{{"gradient.offset", &HeadMaps::offset, &RegressionLosses::offset},
                   {"gradient.size", &HeadMaps::size, &RegressionLosses::size},
                   {"gradient.distance", &HeadMaps::distance, &RegressionLosses::distance},
                   {"gradient.right_width", &HeadMaps::right_width, &RegressionLosses::right_width},
                   {"gradient.dim_offset", &HeadMaps::dim_offset, &RegressionLosses::dim_offset},
                   {"gradient.orientation", &HeadMaps::orientation, &RegressionLosses::orientation},
                   {"gradient.vertex_offset", &HeadMaps::vertex_offset,
                    &RegressionLosses::vertex_offset},
                   {"gradient.vertex_distance", &HeadMaps::vertex_distance,
                    &RegressionLosses::vertex_distance}}};
  for (const auto& [name, head, term] : regressions) {
    report.checks.push_back(gradient_suite(name, head, l1(term), options, 1.0));
  }
  report.checks.push_back(total_loss_check(options));
  report.checks.push_back(perfect_prediction_check(options));

  report.sweep = threshold_sweep(options);
  report.sweep_monotone = true;
  for (std::size_t i = 1; i < report.sweep.size(); ++i) {
    if (report.sweep[i].detections > report.sweep[i - 1].detections) report.sweep_monotone = false;
  }
  return report;
}

}  // namespace sc
