#include "stereocenter/heatmap_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stereocenter/error.hpp"

namespace sc {

namespace {

int sign_of(double value) { return (value > 0.0) - (value < 0.0); }


double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Accumulates mean-absolute-error terms at explicit cells.
class L1Accumulator {
 public:
  explicit L1Accumulator(const Tensor& predicted)
      : predicted_(predicted),
        gradient_(predicted.channels(), predicted.height(), predicted.width()) {}

  void add(int channel, int x, int y, double target) {
    const double diff = predicted_.at(channel, y, x) - target;
    sum_ += std::abs(diff);
    gradient_.at(channel, y, x) += sign_of(diff);
    ++count_;
  }

  // |exp(-raw) - target|, with exp(-raw) = 1/sigmoid(raw) - 1.
  void add_inverse_sigmoid(int channel, int x, int y, double target) {
    const double transformed = std::exp(-predicted_.at(channel, y, x));
    const double diff = transformed - target;
    sum_ += std::abs(diff);
    gradient_.at(channel, y, x) += sign_of(diff) * -transformed;
    ++count_;
  }

  LossValue finish() {
    LossValue loss;
    loss.gradient = std::move(gradient_);
    if (count_ == 0) {
      loss.empty = true;
      return loss;
    }
    loss.value = sum_ / static_cast<double>(count_);
    for (double& g : loss.gradient.data()) g /= static_cast<double>(count_);
    return loss;
  }

 private:
  const Tensor& predicted_;
  Tensor gradient_;
  double sum_ = 0.0;
  long count_ = 0;
};

}  // namespace

int CodecConfig::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

ObjectAnnotation annotate_object(const Box3D& box, int class_id, const StereoCalibration& calib) {
  const ObservationVector obs = project_observations(box, calib);
  ObjectAnnotation a;
  a.class_id = class_id;
  a.left = Box2D{calib.to_pixel_u(obs[kLeftUMin]), calib.to_pixel_v(obs[kLeftVMin]),
                 calib.to_pixel_u(obs[kLeftUMax]), calib.to_pixel_v(obs[kLeftVMax])};
  a.right_x1 = calib.to_pixel_u(obs[kRightUMin]);
  a.right_x2 = calib.to_pixel_u(obs[kRightUMax]);
  a.dims = Dimensions{box.length, box.width, box.height};
  a.alpha = theta_to_alpha(box.theta, box.x, box.z);
  const CornerSet corners = corners_of(box);
  for (std::size_t k = 0; k < 4; ++k) {
    a.vertices[k] = Eigen::Vector2d(calib.to_pixel_u(corners[k].x() / corners[k].z()),
                                    calib.to_pixel_v(corners[k].y() / corners[k].z()));
  }
  return a;
}

HeadMaps HeadMaps::zeros(int classes, int height, int width) {
  HeadMaps maps;
  maps.center_heatmap = Tensor(classes, height, width);
  maps.offset = Tensor(2, height, width);
  maps.size = Tensor(2, height, width);
  maps.distance = Tensor(2, height, width);
  maps.right_width = Tensor(1, height, width);
  maps.dim_offset = Tensor(3, height, width);
  maps.orientation = Tensor(8, height, width);
  maps.vertex_heatmap = Tensor(4, height, width);
  maps.vertex_offset = Tensor(2, height, width);
  maps.vertex_distance = Tensor(8, height, width);
  return maps;
}

int HeadMaps::total_channels() const {
  return center_heatmap.channels() + offset.channels() + size.channels() + distance.channels() +
         right_width.channels() + dim_offset.channels() + orientation.channels() +
         vertex_heatmap.channels() + vertex_offset.channels() + vertex_distance.channels();
}

Tensor HeadMaps::pack() const {
  const std::array<const Tensor*, 10> parts{&center_heatmap, &offset,       &size,
                                            &distance,       &right_width,  &dim_offset,
                                            &orientation,    &vertex_heatmap, &vertex_offset,
                                            &vertex_distance};
  Tensor packed(total_channels(), center_heatmap.height(), center_heatmap.width());
  auto out = packed.data().begin();
  for (const Tensor* part : parts) {
    if (!part->same_extent(center_heatmap)) {
      throw Error(ErrorCode::kInvalidArgument, "head maps differ in spatial extent");
    }
    out = std::copy(part->data().begin(), part->data().end(), out);
  }
  return packed;
}

HeadMaps HeadMaps::unpack(const Tensor& packed, int classes) {
  HeadMaps maps = zeros(classes, packed.height(), packed.width());
  if (packed.channels() != maps.total_channels()) {
    throw Error(ErrorCode::kInvalidArgument,
                "packed head tensor has " + std::to_string(packed.channels()) +
                    " channels, expected " + std::to_string(maps.total_channels()));
  }
  const std::array<Tensor*, 10> parts{&maps.center_heatmap, &maps.offset,        &maps.size,
                                      &maps.distance,       &maps.right_width,   &maps.dim_offset,
                                      &maps.orientation,    &maps.vertex_heatmap, &maps.vertex_offset,
                                      &maps.vertex_distance};
  auto in = packed.data().begin();
  for (Tensor* part : parts) {
    std::copy(in, in + static_cast<std::ptrdiff_t>(part->size()), part->data().begin());
    in += static_cast<std::ptrdiff_t>(part->size());
  }
  return maps;
}

SplatReport splat_center(Tensor& heatmap, int channel, double center_u, double center_v,
                         double box_width, double box_height, double kernel_alpha,
                         int downsample, double min_sigma) {
  if (!(box_width > 0.0) || !(box_height > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "splat box extent must be positive");
  }
  const double grid_u = center_u / downsample;
  const double grid_v = center_v / downsample;
  if (grid_u < 0.0 || grid_v < 0.0 || grid_u >= heatmap.width() || grid_v >= heatmap.height()) {
    throw Error(ErrorCode::kInvalidArgument, "splat center outside the heatmap");
  }
  SplatReport report;
  report.sigma_x = kernel_alpha * (box_width / downsample) / 6.0;
  report.sigma_y = kernel_alpha * (box_height / downsample) / 6.0;
  if (report.sigma_x < min_sigma) {
    report.sigma_x = min_sigma;
    report.clamped = true;
  }
  if (report.sigma_y < min_sigma) {
    report.sigma_y = min_sigma;
    report.clamped = true;
  }
  report.peak_x = static_cast<int>(std::floor(grid_u));
  report.peak_y = static_cast<int>(std::floor(grid_v));

  const double inv_x = 1.0 / (2.0 * report.sigma_x * report.sigma_x);
  const double inv_y = 1.0 / (2.0 * report.sigma_y * report.sigma_y);
  for (int y = 0; y < heatmap.height(); ++y) {
    const double dy = y - report.peak_y;
    const double ey = dy * dy * inv_y;
    for (int x = 0; x < heatmap.width(); ++x) {
      const double dx = x - report.peak_x;
      const double value = std::exp(-dx * dx * inv_x - ey);
      double& cell = heatmap.at(channel, y, x);
      cell = std::max(cell, value);
    }
  }
  return report;
}

HeadTargets encode_targets(const std::vector<ObjectAnnotation>& objects,
                           const CodecConfig& config) {
  const int width = config.output_width();
  const int height = config.output_height();
  const double r = config.downsample;
  HeadTargets targets;
  targets.dense = HeadMaps::zeros(static_cast<int>(config.classes.size()), height, width);
  HeadMaps& d = targets.dense;

  for (const ObjectAnnotation& a : objects) {
    if (a.class_id < 0 || a.class_id >= static_cast<int>(config.classes.size())) {
      throw Error(ErrorCode::kInvalidArgument, "unknown class id " + std::to_string(a.class_id));
    }
    const double right_width = (a.right_x2 - a.right_x1) / r;
    if (!(right_width > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "right box width must be positive");
    }
    const double u = a.left.center_x();
    const double v = a.left.center_y();
    const SplatReport center = splat_center(d.center_heatmap, a.class_id, u, v, a.left.width(),
                                            a.left.height(), config.kernel_alpha,
                                            config.downsample, config.min_sigma);
    if (center.clamped) ++targets.clamped_kernels;

    ObjectTarget t;
    t.class_id = a.class_id;
    t.cell_x = center.peak_x;
    t.cell_y = center.peak_y;
    t.offset = {u / r - t.cell_x, v / r - t.cell_y};
    t.size = {a.left.width() / r, a.left.height() / r};
    const double right_u = 0.5 * (a.right_x1 + a.right_x2);
    t.distance = {right_u / r - t.cell_x, v / r - t.cell_y};
    t.right_width = right_width;
    const Dimensions& mean = config.classes[static_cast<std::size_t>(a.class_id)].mean;
    t.dim_offset = {2.0 * (a.dims.length - mean.length), 2.0 * (a.dims.width - mean.width),
                    2.0 * (a.dims.height - mean.height)};
    t.orientation = encode_orientation(a.alpha).values;

    const double vertex_extent = std::min(a.left.width(), a.left.height());
    for (std::size_t k = 0; k < 4; ++k) {
      const Eigen::Vector2d& p = a.vertices[k];
      t.vertex_distance[2 * k] = p.x() / r - t.cell_x;
      t.vertex_distance[2 * k + 1] = p.y() / r - t.cell_y;
      VertexTarget& vt = t.vertices[k];
      vt.valid = p.x() >= 0.0 && p.y() >= 0.0 && p.x() < config.image_width &&
                 p.y() < config.image_height;
      if (!vt.valid) continue;
      const SplatReport vertex =
          splat_center(d.vertex_heatmap, static_cast<int>(k), p.x(), p.y(), vertex_extent,
                       vertex_extent, config.kernel_alpha, config.downsample, config.min_sigma);
      if (vertex.clamped) ++targets.clamped_kernels;
      vt.cell_x = vertex.peak_x;
      vt.cell_y = vertex.peak_y;
      vt.offset = {p.x() / r - vt.cell_x, p.y() / r - vt.cell_y};
      d.vertex_offset.at(0, vt.cell_y, vt.cell_x) = vt.offset[0];
      d.vertex_offset.at(1, vt.cell_y, vt.cell_x) = vt.offset[1];
    }

    const int x = t.cell_x;
    const int y = t.cell_y;
    for (int c = 0; c < 2; ++c) {
      d.offset.at(c, y, x) = t.offset[static_cast<std::size_t>(c)];
      d.size.at(c, y, x) = t.size[static_cast<std::size_t>(c)];
      d.distance.at(c, y, x) = t.distance[static_cast<std::size_t>(c)];
    }
    d.right_width.at(0, y, x) = -std::log(t.right_width);
    for (int c = 0; c < 3; ++c) d.dim_offset.at(c, y, x) = t.dim_offset[static_cast<std::size_t>(c)];
    for (int c = 0; c < 8; ++c) {
      d.orientation.at(c, y, x) = t.orientation[static_cast<std::size_t>(c)];
      d.vertex_distance.at(c, y, x) = t.vertex_distance[static_cast<std::size_t>(c)];
    }
    targets.objects.push_back(t);
  }
  return targets;
}

LossValue focal_loss(const Tensor& predicted, const Tensor& target, double alpha, double beta) {
  if (!predicted.same_shape(target)) {
    throw Error(ErrorCode::kInvalidArgument, "focal loss shape mismatch");
  }
  long positives = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = predicted.data()[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(ErrorCode::kNonFiniteInput,
                  "prediction " + std::to_string(p) + " outside (0, 1) at index " +
                      std::to_string(i));
    }
    if (target.data()[i] == 1.0) ++positives;
  }
  const double norm = static_cast<double>(std::max<long>(positives, 1));
  LossValue loss;
  loss.gradient = Tensor(predicted.channels(), predicted.height(), predicted.width());
  loss.empty = positives == 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = predicted.data()[i];
    const double y = target.data()[i];
    double& grad = loss.gradient.data()[i];
    if (y == 1.0) {
      const double log_p = std::log(p);
      const double focus = std::pow(1.0 - p, alpha);
      sum += focus * log_p;
      grad = -(-alpha * std::pow(1.0 - p, alpha - 1.0) * log_p + focus / p) / norm;
    } else {
      const double penalty = std::pow(1.0 - y, beta);
      const double log_q = std::log1p(-p);
      const double focus = std::pow(p, alpha);
      sum += penalty * focus * log_q;
      grad = -penalty * (alpha * std::pow(p, alpha - 1.0) * log_q - focus / (1.0 - p)) / norm;
    }
  }
  loss.value = -sum / norm;
  return loss;
}

RegressionLosses l1_losses(const HeadTargets& targets, const HeadMaps& predicted) {
  L1Accumulator offset(predicted.offset);
  L1Accumulator size(predicted.size);
  L1Accumulator distance(predicted.distance);
  L1Accumulator right_width(predicted.right_width);
  L1Accumulator dim_offset(predicted.dim_offset);
  L1Accumulator orientation(predicted.orientation);
  L1Accumulator vertex_offset(predicted.vertex_offset);
  L1Accumulator vertex_distance(predicted.vertex_distance);

  for (const ObjectTarget& t : targets.objects) {
    const int x = t.cell_x;
    const int y = t.cell_y;
    for (int c = 0; c < 2; ++c) {
      offset.add(c, x, y, t.offset[static_cast<std::size_t>(c)]);
      size.add(c, x, y, t.size[static_cast<std::size_t>(c)]);
      distance.add(c, x, y, t.distance[static_cast<std::size_t>(c)]);
    }
    right_width.add_inverse_sigmoid(0, x, y, t.right_width);
    for (int c = 0; c < 3; ++c) dim_offset.add(c, x, y, t.dim_offset[static_cast<std::size_t>(c)]);
    for (int c = 0; c < 8; ++c) {
      orientation.add(c, x, y, t.orientation[static_cast<std::size_t>(c)]);
      vertex_distance.add(c, x, y, t.vertex_distance[static_cast<std::size_t>(c)]);
    }
    for (const VertexTarget& v : t.vertices) {
      if (!v.valid) continue;
      vertex_offset.add(0, v.cell_x, v.cell_y, v.offset[0]);
      vertex_offset.add(1, v.cell_x, v.cell_y, v.offset[1]);
    }
  }
  return RegressionLosses{offset.finish(),      size.finish(),        distance.finish(),
                          right_width.finish(), dim_offset.finish(),  orientation.finish(),
                          vertex_offset.finish(), vertex_distance.finish()};
}

TotalLoss total_loss(const LossVector& losses, const LossWeights& weights) {
  TotalLoss total;
  for (std::size_t i = 0; i < kLossTerms; ++i) {
    const double precision = std::exp(-weights.log_variance[i]);
    total.value += precision * losses[i] + weights.log_variance[i];
    total.d_losses[i] = precision;
    total.d_log_variance[i] = 1.0 - precision * losses[i];
  }
  return total;
}

LossVector AllLosses::values() const {
  LossVector v{};
  v[kLossCenterHeatmap] = center_heatmap.value;
  v[kLossOffset] = regression.offset.value;
  v[kLossDistance] = regression.distance.value;
  v[kLossSize] = regression.size.value;
  v[kLossRightWidth] = regression.right_width.value;
  v[kLossDimension] = regression.dim_offset.value;
  v[kLossOrientation] = regression.orientation.value;
  v[kLossVertexHeatmap] = vertex_heatmap.value;
  v[kLossVertexOffset] = regression.vertex_offset.value;
  v[kLossVertexDistance] = regression.vertex_distance.value;
  return v;
}

AllLosses compute_losses(const HeadTargets& targets, const HeadMaps& predicted) {
  AllLosses all;
  all.center_heatmap = focal_loss(predicted.center_heatmap, targets.dense.center_heatmap);
  all.vertex_heatmap = focal_loss(predicted.vertex_heatmap, targets.dense.vertex_heatmap);
  all.regression = l1_losses(targets, predicted);
  return all;
}

std::vector<std::array<int, 2>> find_peaks(const Tensor& heatmap, int channel, double threshold) {
  std::vector<std::array<int, 2>> peaks;
  const int h = heatmap.height();
  const int w = heatmap.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double value = heatmap.at(channel, y, x);
      if (!(value >= threshold)) continue;
      bool peak = true;
      for (int ny = std::max(0, y - 1); peak && ny <= std::min(h - 1, y + 1); ++ny) {
        for (int nx = std::max(0, x - 1); nx <= std::min(w - 1, x + 1); ++nx) {
          if (nx == x && ny == y) continue;
          const double other = heatmap.at(channel, ny, nx);
          const bool earlier = ny < y || (ny == y && nx < x);
          if (other > value || (other == value && earlier)) {
            peak = false;
            break;
          }
        }
      }
      if (peak) peaks.push_back({x, y});
    }
  }
  return peaks;
}

std::vector<StereoDetection> decode_detections(const HeadMaps& maps, const CodecConfig& config) {
  const Tensor& heat = maps.center_heatmap;
  const std::array<const Tensor*, 9> heads{&maps.offset,         &maps.size,
                                           &maps.distance,       &maps.right_width,
                                           &maps.dim_offset,     &maps.orientation,
                                           &maps.vertex_heatmap, &maps.vertex_offset,
                                           &maps.vertex_distance};
  for (const Tensor* head : heads) {
    if (!head->same_extent(heat)) {
      throw Error(ErrorCode::kInvalidArgument, "head maps differ in spatial extent");
    }
  }
  if (heat.channels() != static_cast<int>(config.classes.size())) {
    throw Error(ErrorCode::kInvalidArgument, "center heatmap channels do not match classes");
  }
  const double r = config.downsample;

  // Vertex candidates per channel, refined by their offsets (cell units).
  std::array<std::vector<Eigen::Vector2d>, 4> vertex_peaks;
  for (int k = 0; k < 4; ++k) {
    for (const auto& cell : find_peaks(maps.vertex_heatmap, k, config.vertex_threshold)) {
      vertex_peaks[static_cast<std::size_t>(k)].emplace_back(
          cell[0] + maps.vertex_offset.at(0, cell[1], cell[0]),
          cell[1] + maps.vertex_offset.at(1, cell[1], cell[0]));
    }
  }

  std::vector<StereoDetection> detections;
  for (int c = 0; c < heat.channels(); ++c) {
    const Dimensions& mean = config.classes[static_cast<std::size_t>(c)].mean;
    for (const auto& cell : find_peaks(heat, c, config.center_threshold)) {
      const int x = cell[0];
      const int y = cell[1];
      StereoDetection det;
      det.class_id = c;
      det.score = heat.at(c, y, x);
      det.cell_x = x;
      det.cell_y = y;
      const double u = (x + maps.offset.at(0, y, x)) * r;
      const double v = (y + maps.offset.at(1, y, x)) * r;
      const double w = maps.size.at(0, y, x) * r;
      const double h = maps.size.at(1, y, x) * r;
      det.left = Box2D{u - w / 2.0, v - h / 2.0, u + w / 2.0, v + h / 2.0};
      const double right_u = (x + maps.distance.at(0, y, x)) * r;
      const double right_w = (1.0 / sigmoid(maps.right_width.at(0, y, x)) - 1.0) * r;
      det.right_x1 = right_u - right_w / 2.0;
      det.right_x2 = right_u + right_w / 2.0;
      det.dims = Dimensions{mean.length + maps.dim_offset.at(0, y, x) / 2.0,
                            mean.width + maps.dim_offset.at(1, y, x) / 2.0,
                            mean.height + maps.dim_offset.at(2, y, x) / 2.0};
      OrientationEncoding encoding;
      for (int i = 0; i < 8; ++i) {
        encoding.values[static_cast<std::size_t>(i)] = maps.orientation.at(i, y, x);
      }
      det.alpha = decode_orientation(encoding);

      for (std::size_t k = 0; k < 4; ++k) {
        const Eigen::Vector2d regressed(x + maps.vertex_distance.at(static_cast<int>(2 * k), y, x),
                                        y + maps.vertex_distance.at(static_cast<int>(2 * k + 1), y, x));
        const Eigen::Vector2d* nearest = nullptr;
        double best = config.vertex_match_radius;
        for (const Eigen::Vector2d& candidate : vertex_peaks[k]) {
          const double dist = (candidate - regressed).norm();
          if (dist <= best) {
            if (nearest == nullptr || dist < best) {
              best = dist;
              nearest = &candidate;
            }
          }
        }
        det.vertex_from_heatmap[k] = nearest != nullptr;
        det.vertices[k] = (nearest != nullptr ? *nearest : regressed) * r;
      }
      detections.push_back(det);
    }
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const StereoDetection& a, const StereoDetection& b) {
                     return a.score > b.score;
                   });
  return detections;
}

}  // namespace sc
