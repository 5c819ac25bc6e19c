#include "stereocenter/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stereocenter/error.hpp"
#include "stereocenter/parallel.hpp"

namespace sc {

namespace {

constexpr double kAreaEpsilon = 1e-12;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

double signed_area(const std::vector<Eigen::Vector2d>& poly) {
  double area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    area += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * area;
}

std::vector<Eigen::Vector2d> counter_clockwise(std::vector<Eigen::Vector2d> poly) {
  if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

std::vector<Eigen::Vector2d> footprint(const Box3D& box) {
  const CornerSet corners = corners_of(box);
  std::vector<Eigen::Vector2d> poly;
  for (std::size_t k = 0; k < 4; ++k) poly.emplace_back(corners[k].x(), corners[k].z());
  return poly;
}

double vertical_overlap(const Box3D& a, const Box3D& b) {
  const double top = std::max(a.y - a.height / 2.0, b.y - b.height / 2.0);
  const double bottom = std::min(a.y + a.height / 2.0, b.y + b.height / 2.0);
  return std::max(0.0, bottom - top);
}

double intersection_over_area(const Box2D& det, const Box2D& region) {
  const double w = std::min(det.x2, region.x2) - std::max(det.x1, region.x1);
  const double h = std::min(det.y2, region.y2) - std::max(det.y1, region.y1);
  const double area = det.width() * det.height();
  if (w <= 0.0 || h <= 0.0 || area <= 0.0) return 0.0;
  return w * h / area;
}

bool neighbouring_class(const std::string& cls, const std::string& type) {
  return (cls == "Car" && type == "Van") || (cls == "Pedestrian" && type == "Person_sitting");
}

double overlap(const EvalDetection& det, const EvalObject& gt, Metric metric) {
  switch (metric) {
    case Metric::kLeft2D:
      return iou_2d(det.left, gt.left);
    case Metric::kStereo2D:
      if (!det.right || !gt.right) return 0.0;
      return std::min(iou_2d(det.left, gt.left), iou_2d(*det.right, *gt.right));
    case Metric::kBev:
      return iou_bev(det.box, gt.box);
    case Metric::k3D:
      return iou_3d(det.box, gt.box);
  }
  return 0.0;
}

void append_format(std::string& out, const char* format, double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, format, value);
  out += buffer;
}

}  // namespace

double iou_2d(const Box2D& a, const Box2D& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double convex_intersection_area(const std::vector<Eigen::Vector2d>& a,
                                const std::vector<Eigen::Vector2d>& b) {
  std::vector<Eigen::Vector2d> output = counter_clockwise(a);
  const std::vector<Eigen::Vector2d> clip = counter_clockwise(b);
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Eigen::Vector2d& p = clip[e];
    const Eigen::Vector2d edge = clip[(e + 1) % clip.size()] - p;
    const std::vector<Eigen::Vector2d> input = std::move(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Eigen::Vector2d& cur = input[i];
      const Eigen::Vector2d& prev = input[(i + input.size() - 1) % input.size()];
      const double side_cur = cross(edge, cur - p);
      const double side_prev = cross(edge, prev - p);
      if (side_cur >= 0.0) {
        if (side_prev < 0.0) {
          output.push_back(prev + (cur - prev) * (side_prev / (side_prev - side_cur)));
        }
        output.push_back(cur);
      } else if (side_prev >= 0.0) {
        output.push_back(prev + (cur - prev) * (side_prev / (side_prev - side_cur)));
      }
    }
  }
  if (output.size() < 3) return 0.0;
  const double area = signed_area(output);
  return area < kAreaEpsilon ? 0.0 : area;
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = convex_intersection_area(footprint(a), footprint(b));
  if (inter <= 0.0) return 0.0;
  const double uni = a.length * a.width + b.length * b.width - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double h = vertical_overlap(a, b);
  if (h <= 0.0) return 0.0;
  const double inter = convex_intersection_area(footprint(a), footprint(b)) * h;
  if (inter <= 0.0) return 0.0;
  const double uni =
      a.length * a.width * a.height + b.length * b.width * b.height - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

const char* to_string(Difficulty difficulty) {
  switch (difficulty) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
  }
  return "unknown";
}

DifficultyFilter difficulty_filter(Difficulty difficulty) {
  switch (difficulty) {
    case Difficulty::kEasy: return {40.0, 0, 0.15};
    case Difficulty::kModerate: return {25.0, 1, 0.30};
    case Difficulty::kHard: return {25.0, 2, 0.50};
  }
  return {};
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::kLeft2D: return "left_2d";
    case Metric::kStereo2D: return "stereo_2d";
    case Metric::kBev: return "bev";
    case Metric::k3D: return "3d";
  }
  return "unknown";
}

void EvalConfig::validate() const {
  for (const auto& [cls, t] : iou_threshold) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "IoU threshold for " + cls + " must lie in (0, 1]");
    }
  }
  if (ap_points != 11 && ap_points != 40) {
    throw Error(ErrorCode::kInvalidArgument, "AP interpolation must use 11 or 40 points");
  }
  for (const std::string& cls : classes) threshold(cls);
}

double EvalConfig::threshold(const std::string& cls) const {
  const auto it = iou_threshold.find(cls);
  if (it == iou_threshold.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no IoU threshold for class " + cls);
  }
  return it->second;
}

std::vector<MatchOutcome> match_frame(const EvalFrame& frame, const std::string& cls,
                                      Difficulty difficulty, Metric metric, double threshold,
                                      int& valid_objects) {
  const DifficultyFilter filter = difficulty_filter(difficulty);
  enum class Role { kNone, kValid, kIgnored, kDontCare };
  std::vector<Role> roles(frame.ground_truth.size(), Role::kNone);
  valid_objects = 0;
  for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
    const EvalObject& gt = frame.ground_truth[g];
    if (gt.type == "DontCare") {
      roles[g] = Role::kDontCare;
    } else if (gt.type == cls) {
      const bool passes = gt.left.height() >= filter.min_height &&
                          gt.occluded <= filter.max_occlusion &&
                          gt.truncated <= filter.max_truncation;
      roles[g] = passes ? Role::kValid : Role::kIgnored;
      if (passes) ++valid_objects;
    } else if (neighbouring_class(cls, gt.type)) {
      roles[g] = Role::kIgnored;
    }
  }

  std::vector<MatchOutcome> outcome(frame.detections.size(), MatchOutcome::kIgnored);
  std::vector<std::size_t> order;
  for (std::size_t d = 0; d < frame.detections.size(); ++d) {
    if (frame.detections[d].type == cls) order.push_back(d);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frame.detections[a].score > frame.detections[b].score;
  });

  std::vector<bool> taken(frame.ground_truth.size(), false);
  for (std::size_t d : order) {
    const EvalDetection& det = frame.detections[d];
    if (det.left.height() < filter.min_height) continue;
    auto best_of = [&](Role role) {
      std::ptrdiff_t best = -1;
      double best_overlap = threshold;
      for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
        if (roles[g] != role || taken[g]) continue;
        const double o = overlap(det, frame.ground_truth[g], metric);
        if (o >= best_overlap && (best < 0 || o > best_overlap)) {
          best = static_cast<std::ptrdiff_t>(g);
          best_overlap = o;
        }
      }
      return best;
    };
    if (const std::ptrdiff_t g = best_of(Role::kValid); g >= 0) {
      taken[static_cast<std::size_t>(g)] = true;
      outcome[d] = MatchOutcome::kTruePositive;
      continue;
    }
    if (const std::ptrdiff_t g = best_of(Role::kIgnored); g >= 0) {
      taken[static_cast<std::size_t>(g)] = true;
      continue;
    }
    bool in_dont_care = false;
    for (std::size_t g = 0; g < frame.ground_truth.size() && !in_dont_care; ++g) {
      in_dont_care = roles[g] == Role::kDontCare &&
                     intersection_over_area(det.left, frame.ground_truth[g].left) >= threshold;
    }
    if (!in_dont_care) outcome[d] = MatchOutcome::kFalsePositive;
  }
  return outcome;
}

double interpolated_ap(const std::vector<PrPoint>& curve, int points) {
  if (points != 11 && points != 40) {
    throw Error(ErrorCode::kInvalidArgument, "AP interpolation must use 11 or 40 points");
  }
  const int first = points == 11 ? 0 : 1;
  const double denominator = points == 11 ? 10.0 : 40.0;
  double sum = 0.0;
  for (int i = first; i < first + points; ++i) {
    const double level = static_cast<double>(i) / denominator;
    double best = 0.0;
    for (const PrPoint& p : curve) {
      if (p.recall >= level) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / points;
}

ApResult average_precision(const std::vector<EvalFrame>& frames, const std::string& cls,
                           Difficulty difficulty, Metric metric, const EvalConfig& config) {
  const double threshold = config.threshold(cls);
  std::vector<std::vector<MatchOutcome>> outcomes(frames.size());
  std::vector<int> valid(frames.size(), 0);
  parallel_for(frames.size(), config.workers, [&](std::size_t f) {
    outcomes[f] = match_frame(frames[f], cls, difficulty, metric, threshold, valid[f]);
  });

  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> scored;
  ApResult result;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    result.ground_truth += valid[f];
    for (std::size_t d = 0; d < outcomes[f].size(); ++d) {
      if (outcomes[f][d] == MatchOutcome::kIgnored) continue;
      scored.push_back({frames[f].detections[d].score, outcomes[f][d] == MatchOutcome::kTruePositive});
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });

  int tp = 0;
  int fp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    (scored[i].tp ? tp : fp) += 1;
    const bool group_end = i + 1 == scored.size() || scored[i + 1].score != scored[i].score;
    if (!group_end) continue;
    PrPoint p;
    p.score = scored[i].score;
    p.true_positives = tp;
    p.false_positives = fp;
    p.recall = result.ground_truth > 0 ? static_cast<double>(tp) / result.ground_truth : 0.0;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    result.curve.push_back(p);
  }
  result.ap = result.ground_truth > 0 ? interpolated_ap(result.curve, config.ap_points) : 0.0;
  return result;
}

EvalReport evaluate(const std::vector<EvalFrame>& frames, const EvalConfig& config) {
  config.validate();
  EvalReport report;
  report.ap_points = config.ap_points;
  report.frames = static_cast<int>(frames.size());
  for (const std::string& cls : config.classes) {
    ClassReport entry;
    entry.cls = cls;
    for (Metric metric : kMetrics) {
      for (Difficulty difficulty : kDifficulties) {
        entry.ap[static_cast<std::size_t>(metric)][static_cast<std::size_t>(difficulty)] =
            average_precision(frames, cls, difficulty, metric, config);
      }
    }
    for (Difficulty difficulty : kDifficulties) {
      const auto d = static_cast<std::size_t>(difficulty);
      entry.gap += entry.ap[static_cast<std::size_t>(Metric::kStereo2D)][d].ap -
                   entry.ap[static_cast<std::size_t>(Metric::kLeft2D)][d].ap;
    }
    report.classes.push_back(std::move(entry));
  }
  return report;
}

std::string EvalReport::to_text() const {
  std::string out = "frames " + std::to_string(frames) + "\n";
  out += "ap_points " + std::to_string(ap_points) + "\n";
  for (const ClassReport& c : classes) {
    for (Metric metric : kMetrics) {
      out += c.cls + " " + to_string(metric);
      for (Difficulty difficulty : kDifficulties) {
        out += std::string(" ") + to_string(difficulty);
        append_format(out, " %.4f",
                      c.ap[static_cast<std::size_t>(metric)][static_cast<std::size_t>(difficulty)].ap);
      }
      out += '\n';
    }
    out += c.cls + " gap";
    append_format(out, " %.4f", c.gap);
    out += '\n';
  }
  return out;
}

std::string EvalReport::to_key_values() const {
  std::string out = "frames=" + std::to_string(frames) + "\n";
  out += "ap_points=" + std::to_string(ap_points) + "\n";
  for (const ClassReport& c : classes) {
    for (Metric metric : kMetrics) {
      for (Difficulty difficulty : kDifficulties) {
        const ApResult& r =
            c.ap[static_cast<std::size_t>(metric)][static_cast<std::size_t>(difficulty)];
        const std::string key = c.cls + "." + to_string(metric) + "." + to_string(difficulty);
        out += key + ".ap=";
        append_format(out, "%.10g", r.ap);
        out += "\n" + key + ".ground_truth=" + std::to_string(r.ground_truth) + "\n";
      }
    }
    out += c.cls + ".gap=";
    append_format(out, "%.10g", c.gap);
    out += '\n';
  }
  return out;
}

std::string EvalReport::to_pr_csv() const {
  std::string out = "class,metric,difficulty,score,recall,precision\n";
  for (const ClassReport& c : classes) {
    for (Metric metric : kMetrics) {
      for (Difficulty difficulty : kDifficulties) {
        const ApResult& r =
            c.ap[static_cast<std::size_t>(metric)][static_cast<std::size_t>(difficulty)];
        for (const PrPoint& p : r.curve) {
          out += c.cls + "," + to_string(metric) + "," + to_string(difficulty);
          append_format(out, ",%.6g", p.score);
          append_format(out, ",%.10g", p.recall);
          append_format(out, ",%.10g", p.precision);
          out += '\n';
        }
      }
    }
  }
  return out;
}

Box2D project_right_box(const Box3D& box, const StereoCalibration& rig) {
  const ObservationVector obs = project_observations(box, rig);
  return {rig.to_pixel_u(obs[kRightUMin]), rig.to_pixel_v(obs[kLeftVMin]),
          rig.to_pixel_u(obs[kRightUMax]), rig.to_pixel_v(obs[kLeftVMax])};
}

EvalFrame make_frame(const std::vector<KittiLabel>& ground_truth,
                     const std::vector<KittiLabel>& results, const StereoCalibration& rig,
                     const Eigen::Vector3d& offset,
                     const std::vector<std::optional<Box2D>>& right_boxes) {
  auto right_of = [&](const Box3D& box) -> std::optional<Box2D> {
    try {
      return project_right_box(box, rig);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  EvalFrame frame;
  for (const KittiLabel& label : ground_truth) {
    EvalObject object;
    object.type = label.type;
    object.left = label.bbox;
    object.truncated = label.truncated;
    object.occluded = label.occluded;
    if (!label.dont_care()) {
      object.box = label_to_box(label, offset);
      object.right = right_of(object.box);
    }
    frame.ground_truth.push_back(std::move(object));
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    const KittiLabel& label = results[i];
    if (label.dont_care()) continue;
    EvalDetection det;
    det.type = label.type;
    det.score = label.score.value_or(0.0);
    det.left = label.bbox;
    det.box = label_to_box(label, offset);
    det.right = i < right_boxes.size() && right_boxes[i] ? right_boxes[i] : right_of(det.box);
    frame.detections.push_back(std::move(det));
  }
  return frame;
}

}  // namespace sc
