#include "stereocenter/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stereocenter/error.hpp"
#include "stereocenter/log.hpp"

namespace sc {

namespace {

int column_index(double x, int length, bool& clamped) {
  const int index = static_cast<int>(std::floor(x));
  if (index < 0 || index >= length) {
    clamped = true;
    return std::clamp(index, 0, length - 1);
  }
  return index;
}

// Depth at which the bird's-eye ray x = slope * z first enters the footprint,
// or NaN if it misses.
double ray_entry_depth(const std::array<Eigen::Vector2d, 4>& footprint, double slope) {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < 4; ++k) {
    const Eigen::Vector2d& p = footprint[k];
    const Eigen::Vector2d& q = footprint[(k + 1) % 4];
    const double dx = q.x() - p.x();
    const double dz = q.y() - p.y();
    const double denom = slope * dz - dx;
    if (std::abs(denom) < 1e-15) continue;
    const double s = (p.x() - slope * p.y()) / denom;
    if (s < 0.0 || s > 1.0) continue;
    const double depth = p.y() + s * dz;
    if (depth > 0.0 && !(depth >= best)) best = depth;
  }
  return best;
}

}  // namespace

OcclusionResult classify_occlusion(std::span<const ObjectExtent> objects, int buffer_length) {
  if (buffer_length <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "depth line length must be positive");
  }
  OcclusionResult result;
  result.depth_line.assign(static_cast<std::size_t>(buffer_length), 0.0);
  result.occluded.assign(objects.size(), false);

  struct Span {
    int first;
    int last;
  };
  std::vector<Span> spans(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!(objects[i].z > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "object " + std::to_string(i) + " has non-positive depth");
    }
    int first = column_index(objects[i].x_min, buffer_length, result.extent_clamped);
    int last = column_index(objects[i].x_max, buffer_length, result.extent_clamped);
    if (first > last) std::swap(first, last);
    spans[i] = {first, last};
  }
  if (result.extent_clamped) log::warn("classify_occlusion: extent clamped to depth line");

  auto& line = result.depth_line;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const double z = objects[i].z;
    for (int j = spans[i].first; j <= spans[i].last; ++j) {
      double& cell = line[static_cast<std::size_t>(j)];
      if (cell == 0.0) {
        cell = z;
      } else if (z < cell) {
        cell = (z + cell) / 2.0;
      }
    }
  }

  for (std::size_t k = 0; k < objects.size(); ++k) {
    const double z = objects[k].z;
    const bool left_visible = !(line[static_cast<std::size_t>(spans[k].first)] < z);
    const bool right_visible = !(line[static_cast<std::size_t>(spans[k].last)] < z);
    result.occluded[k] = !left_visible && !right_visible;
  }
  return result;
}

OcclusionResult classify_occlusion_near_first(std::span<const ObjectExtent> objects,
                                              int buffer_length) {
  std::vector<std::size_t> order(objects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return objects[a].z < objects[b].z;
  });
  std::vector<ObjectExtent> sorted;
  sorted.reserve(objects.size());
  for (std::size_t i : order) sorted.push_back(objects[i]);
  OcclusionResult result = classify_occlusion(sorted, buffer_length);
  std::vector<bool> flags(objects.size(), false);
  for (std::size_t j = 0; j < order.size(); ++j) flags[order[j]] = result.occluded[j];
  result.occluded = std::move(flags);
  return result;
}

AlignmentPatch make_patch(const Box3D& pose, const Box2D& left_box,
                          const StereoCalibration& calib, double far_scale) {
  if (!(pose.z > 0.0) || !(far_scale >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "patch needs a positive depth and far_scale >= 1");
  }
  Box3D far = pose;
  far.x *= far_scale;
  far.y *= far_scale;
  far.z *= far_scale;
  const CornerSet far_corners = corners_of(far);
  std::array<Eigen::Vector2d, 4> far_footprint;
  for (std::size_t k = 0; k < 4; ++k) far_footprint[k] = {far_corners[k].x(), far_corners[k].z()};

  const PerspectiveVertex keypoint =
      perspective_vertex(far.theta, far.x, far.z, far.length, far.width);
  const auto& a = far_corners[static_cast<std::size_t>(keypoint.boundary[0])];
  const auto& b = far_corners[static_cast<std::size_t>(keypoint.boundary[1])];
  const double ua = calib.to_pixel_u(a.x() / a.z());
  const double ub = calib.to_pixel_u(b.x() / b.z());

  const double col_lo = std::max({std::min(ua, ub), left_box.x1, 0.0});
  const double col_hi = std::min({std::max(ua, ub), left_box.x2, calib.image_width - 1.0});
  const double row_lo = std::max(left_box.center_y(), 0.0);
  const double row_hi = std::min(left_box.y2, calib.image_height - 1.0);

  // Footprint edges at the pose: point on the edge relative to the center,
  // and outward normal in (x, z).
  const CornerSet corners = corners_of(pose);
  const Eigen::Vector2d center(pose.x, pose.z);
  std::array<Eigen::Vector2d, 4> edge_point;
  std::array<Eigen::Vector2d, 4> edge_normal;
  for (std::size_t k = 0; k < 4; ++k) {
    const Eigen::Vector2d p(corners[k].x(), corners[k].z());
    const Eigen::Vector2d q(corners[(k + 1) % 4].x(), corners[(k + 1) % 4].z());
    Eigen::Vector2d n(q.y() - p.y(), p.x() - q.x());
    if (n.dot(p - center) < 0.0) n = -n;
    edge_point[k] = p - center;
    edge_normal[k] = n.normalized();
  }

  AlignmentPatch patch;
  patch.reference_depth = pose.z;
  const double top = far.y - far.height / 2.0;
  const double bottom = far.y + far.height / 2.0;
  // The face depth along a ray depends only on its column, so columns are
  // resolved once and rows only check the vertical extent.
  struct Column {
    double far_depth;
    AlignmentPatch::Sample sample;
  };
  std::vector<Column> columns;
  columns.reserve(static_cast<std::size_t>(std::max(0.0, col_hi - col_lo + 2.0)));
  for (int u = static_cast<int>(std::ceil(col_lo)); u <= static_cast<int>(std::floor(col_hi)); ++u) {
    const double slope = calib.to_normalized_u(u);
    const double far_depth = ray_entry_depth(far_footprint, slope);
    if (std::isnan(far_depth)) continue;

    // The center moves as z * (x/z, 1); each entering edge line then meets the
    // ray at a depth affine in z.
    const Eigen::Vector2d ray(slope, 1.0);
    AlignmentPatch::Sample sample;
    sample.u = u;
    int pieces = 0;
    for (std::size_t k = 0; k < 4 && pieces < 2; ++k) {
      const double facing = edge_normal[k].dot(ray);
      if (!(facing < 0.0)) continue;
      const auto i = static_cast<std::size_t>(pieces++);
      sample.gain[i] = edge_normal[k].dot(center) / (pose.z * facing);
      sample.bias[i] = edge_normal[k].dot(edge_point[k]) / facing;
    }
    if (pieces == 0) continue;
    if (pieces == 1) {
      sample.gain[1] = sample.gain[0];
      sample.bias[1] = sample.bias[0];
    }
    columns.push_back({far_depth, sample});
  }

  const int first_row = static_cast<int>(std::ceil(row_lo));
  const int last_row = static_cast<int>(std::floor(row_hi));
  patch.samples.reserve(columns.size() * static_cast<std::size_t>(std::max(0, last_row - first_row + 1)));
  for (int v = first_row; v <= last_row; ++v) {
    const double vn = calib.to_normalized_v(v);
    for (const Column& column : columns) {
      const double y = vn * column.far_depth;
      if (y < top || y > bottom) continue;
      AlignmentPatch::Sample sample = column.sample;
      sample.v = v;
      patch.samples.push_back(sample);
    }
  }
  return patch;
}

RefineResult refine_depth(const AlignmentPatch& patch, const GrayImage& left,
                          const GrayImage& right, double z0, const StereoCalibration& calib,
                          const RefineConfig& config) {
  if (!(z0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "initial depth must be positive");
  if (config.samples < 3 || !(config.bracket > 0.0) || !(config.bracket < 1.0) ||
      config.max_pixels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid depth scan configuration");
  }
  const double z_lo = z0 * (1.0 - config.bracket);
  const double z_hi = z0 * (1.0 + config.bracket);
  const double focal_baseline = calib.fx * calib.baseline;
  const double last_column = right.width - 1.0;

  // Samples sharing a column share their depth model, so the right-image
  // position is computed per column and candidate, not per pixel.
  struct ColumnModel {
    double u;
    std::array<double, 2> gain;
    std::array<double, 2> bias;
  };
  struct Pixel {
    double intensity;
    const std::uint8_t* right_row;
    std::size_t column;
  };
  std::vector<ColumnModel> columns;
  std::vector<bool> column_usable;
  // Column index per image column; a patch built by hand may reuse a column
  // with a different depth model, which then gets its own entry.
  std::vector<std::ptrdiff_t> column_of(static_cast<std::size_t>(std::max(left.width, 0)), -1);
  std::vector<Pixel> pixels;
  pixels.reserve(patch.samples.size());
  for (const auto& s : patch.samples) {
    if (s.u < 0 || s.v < 0 || s.u >= left.width || s.v >= left.height || s.v >= right.height) {
      continue;
    }
    std::ptrdiff_t& slot = column_of[static_cast<std::size_t>(s.u)];
    if (slot < 0 || columns[static_cast<std::size_t>(slot)].gain != s.gain ||
        columns[static_cast<std::size_t>(slot)].bias != s.bias) {
      const double near = s.depth_at(z_lo);
      const double far = s.depth_at(z_hi);
      const bool usable = near > 0.0 && far > 0.0 && s.u - focal_baseline / near >= 0.0 &&
                          s.u - focal_baseline / far <= last_column;
      slot = static_cast<std::ptrdiff_t>(columns.size());
      columns.push_back({static_cast<double>(s.u), s.gain, s.bias});
      column_usable.push_back(usable);
    }
    const auto column = static_cast<std::size_t>(slot);
    if (!column_usable[column]) continue;
    pixels.push_back({static_cast<double>(left.at(s.u, s.v)),
                      right.pixels.data() + static_cast<std::size_t>(s.v) *
                                                static_cast<std::size_t>(right.width),
                      column});
  }
  if (pixels.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "alignment patch has no usable pixels");
  }
  const auto cap = static_cast<std::size_t>(config.max_pixels);
  if (pixels.size() > cap) {
    const std::size_t stride = (pixels.size() + cap - 1) / cap;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < pixels.size(); i += stride) pixels[kept++] = pixels[i];
    pixels.resize(kept);
  }

  RefineResult result;
  result.pixels = static_cast<int>(pixels.size());
  result.step = (z_hi - z_lo) / (config.samples - 1);
  std::vector<double> cost(static_cast<std::size_t>(config.samples));
  std::vector<int> column_x0(columns.size());
  std::vector<double> column_t(columns.size());
  for (int i = 0; i < config.samples; ++i) {
    const double z = z_lo + i * result.step;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const ColumnModel& m = columns[c];
      const double depth = std::max(m.gain[0] * z + m.bias[0], m.gain[1] * z + m.bias[1]);
      const double x = m.u - focal_baseline / depth;
      column_x0[c] = std::min(static_cast<int>(x), right.width - 2);
      column_t[c] = x - column_x0[c];
    }
    double sum = 0.0;
    for (const Pixel& p : pixels) {
      const int x0 = column_x0[p.column];
      const double t = column_t[p.column];
      const double sampled = (1.0 - t) * p.right_row[x0] + t * p.right_row[x0 + 1];
      const double diff = p.intensity - sampled;
      sum += diff * diff;
    }
    cost[static_cast<std::size_t>(i)] = sum / static_cast<double>(pixels.size());
  }

  const auto [min_it, max_it] = std::minmax_element(cost.begin(), cost.end());
  if (*max_it - *min_it < config.flat_threshold) {
    result.flat_cost = true;
    result.z = z0;
    result.cost = *min_it;
    return result;
  }
  const auto best = static_cast<int>(std::distance(cost.begin(), min_it));
  result.cost = *min_it;
  result.z = z_lo + best * result.step;
  if (best > 0 && best < config.samples - 1) {
    const double c_prev = cost[static_cast<std::size_t>(best - 1)];
    const double c_next = cost[static_cast<std::size_t>(best + 1)];
    const double curvature = c_prev - 2.0 * *min_it + c_next;
    if (curvature > 0.0) {
      const double shift = std::clamp(0.5 * (c_prev - c_next) / curvature, -0.5, 0.5);
      result.z += shift * result.step;
    }
  }
  return result;
}

std::vector<AlignmentOutput> adaptive_refine(std::span<const AlignmentInput> objects,
                                             const GrayImage& left, const GrayImage& right,
                                             const StereoCalibration& calib,
                                             const RefineConfig& config) {
  std::vector<AlignmentOutput> out;
  out.reserve(objects.size());
  for (const AlignmentInput& object : objects) {
    AlignmentOutput result;
    result.pose = object.pose;
    if (object.occluded) {
      out.push_back(result);
      continue;
    }
    try {
      const AlignmentPatch patch =
          make_patch(object.pose, object.left_box, calib, 1.0 + config.bracket);
      const RefineResult refined = refine_depth(patch, left, right, object.pose.z, calib, config);
      result.flat_cost = refined.flat_cost;
      if (!refined.flat_cost) {
        const double scale = refined.z / object.pose.z;
        result.pose.x *= scale;
        result.pose.y *= scale;
        result.pose.z = refined.z;
        result.refined = true;
      }
    } catch (const Error& e) {
      log::debug("adaptive_refine: keeping geometric pose ({})", e.what());
      result.failed = true;
    }
    out.push_back(result);
  }
  return out;
}

}  // namespace sc
