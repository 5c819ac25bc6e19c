#include "stereocenter/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "stereocenter/alignment.hpp"
#include "stereocenter/error.hpp"

namespace sc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, int face, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(face));
  h = splitmix64(h ^ static_cast<std::uint64_t>(i));
  h = splitmix64(h ^ static_cast<std::uint64_t>(j));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, int face, double s, double t, double cell) {
  const double gs = s / cell;
  const double gt = t / cell;
  const auto i = static_cast<std::int64_t>(std::floor(gs));
  const auto j = static_cast<std::int64_t>(std::floor(gt));
  const double fs = smooth(gs - static_cast<double>(i));
  const double ft = smooth(gt - static_cast<double>(j));
  const double v00 = lattice_value(seed, face, i, j);
  const double v10 = lattice_value(seed, face, i + 1, j);
  const double v01 = lattice_value(seed, face, i, j + 1);
  const double v11 = lattice_value(seed, face, i + 1, j + 1);
  return (1.0 - ft) * ((1.0 - fs) * v00 + fs * v10) + ft * ((1.0 - fs) * v01 + fs * v11);
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int face = -1;
  double s = 0.0;
  double r = 0.0;
};

// Slab test in the box frame. Faces: 2 * axis + (0 for -, 1 for +).
Hit intersect(const Box3D& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const Eigen::Vector3d rel = origin - Eigen::Vector3d(box.x, box.y, box.z);
  const Eigen::Vector3d o(c * rel.x() - s * rel.z(), rel.y(), s * rel.x() + c * rel.z());
  const Eigen::Vector3d d(c * dir.x() - s * dir.z(), dir.y(), s * dir.x() + c * dir.z());
  const Eigen::Vector3d half(box.width / 2.0, box.height / 2.0, box.length / 2.0);

  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int entry_axis = -1;
  int entry_side = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return {};
      continue;
    }
    double t1 = (-half[a] - o[a]) / d[a];
    double t2 = (half[a] - o[a]) / d[a];
    int side = 0;
    if (t1 > t2) {
      std::swap(t1, t2);
      side = 1;
    }
    if (t1 > t_near) {
      t_near = t1;
      entry_axis = a;
      entry_side = side;
    }
    t_far = std::min(t_far, t2);
  }
  if (entry_axis < 0 || t_near > t_far || t_near <= 0.0) return {};
  const Eigen::Vector3d p = o + t_near * d;
  Hit hit;
  hit.t = t_near;
  hit.face = 2 * entry_axis + entry_side;
  switch (entry_axis) {
    case 0: hit.s = p.z(); hit.r = p.y(); break;
    case 1: hit.s = p.x(); hit.r = p.z(); break;
    default: hit.s = p.x(); hit.r = p.y(); break;
  }
  return hit;
}

struct PixelBounds {
  int x0, y0, x1, y1;
};

PixelBounds projected_bounds(const Box3D& box, const StereoCalibration& calib, double camera_x) {
  double u_lo = std::numeric_limits<double>::infinity();
  double u_hi = -u_lo;
  double v_lo = u_lo;
  double v_hi = -u_lo;
  for (const Eigen::Vector3d& p : corners_of(box)) {
    const double u = calib.to_pixel_u((p.x() - camera_x) / p.z());
    const double v = calib.to_pixel_v(p.y() / p.z());
    u_lo = std::min(u_lo, u);
    u_hi = std::max(u_hi, u);
    v_lo = std::min(v_lo, v);
    v_hi = std::max(v_hi, v);
  }
  return {std::max(0, static_cast<int>(std::floor(u_lo)) - 1),
          std::max(0, static_cast<int>(std::floor(v_lo)) - 1),
          std::min(calib.image_width - 1, static_cast<int>(std::ceil(u_hi)) + 1),
          std::min(calib.image_height - 1, static_cast<int>(std::ceil(v_hi)) + 1)};
}

GrayImage render_view(std::span<const Box3D> boxes, const StereoCalibration& calib,
                      std::uint64_t seed, double camera_x) {
  GrayImage image(calib.image_width, calib.image_height, kBackgroundIntensity);
  std::vector<PixelBounds> bounds;
  bounds.reserve(boxes.size());
  for (const Box3D& box : boxes) bounds.push_back(projected_bounds(box, calib, camera_x));
  const Eigen::Vector3d origin(camera_x, 0.0, 0.0);

  // Box-filtered pixels: each one averages a kSubsamples x kSubsamples grid of
  // rays over its footprint, so the image holds no aliased texture detail.
  constexpr int kSubsamples = 4;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const PixelBounds& region = bounds[b];
    for (int v = region.y0; v <= region.y1; ++v) {
      for (int u = region.x0; u <= region.x1; ++u) {
        // Each pixel is shaded once, by the first box whose region covers it.
        const bool shaded_earlier = [&] {
          for (std::size_t other = 0; other < b; ++other) {
            const PixelBounds& r = bounds[other];
            if (u >= r.x0 && u <= r.x1 && v >= r.y0 && v <= r.y1) return true;
          }
          return false;
        }();
        if (shaded_earlier) continue;
        double sum = 0.0;
        bool any_hit = false;
        for (int sv = 0; sv < kSubsamples; ++sv) {
          for (int su = 0; su < kSubsamples; ++su) {
            const double pu = u - 0.5 + (su + 0.5) / kSubsamples;
            const double pv = v - 0.5 + (sv + 0.5) / kSubsamples;
            const Eigen::Vector3d dir(calib.to_normalized_u(pu), calib.to_normalized_v(pv), 1.0);
            Hit best;
            std::size_t owner = 0;
            for (std::size_t other = 0; other < boxes.size(); ++other) {
              const PixelBounds& r = bounds[other];
              if (u < r.x0 || u > r.x1 || v < r.y0 || v > r.y1) continue;
              const Hit hit = intersect(boxes[other], origin, dir);
              if (hit.face >= 0 && hit.t < best.t) {
                best = hit;
                owner = other;
              }
            }
            if (best.face < 0) {
              sum += kBackgroundIntensity;
              continue;
            }
            any_hit = true;
            sum += 30.0 + 200.0 * face_texture(seed + 0x51ED2705ull * (owner + 1), best.face,
                                               best.s, best.r);
          }
        }
        if (!any_hit) continue;
        image.at(u, v) =
            static_cast<std::uint8_t>(std::lround(sum / (kSubsamples * kSubsamples)));
      }
    }
  }
  return image;
}

std::vector<ObjectExtent> extents_of(const std::vector<SceneObject>& objects,
                                     const StereoCalibration& calib) {
  std::vector<ObjectExtent> extents;
  extents.reserve(objects.size());
  for (const SceneObject& o : objects) {
    const ObservationVector exact = project_observations(o.box, calib);
    extents.push_back({calib.to_pixel_u(exact[kLeftUMin]), calib.to_pixel_u(exact[kLeftUMax]),
                       o.box.z});
  }
  return extents;
}

bool occlusion_matches_intent(const std::vector<SceneObject>& objects,
                              const StereoCalibration& calib) {
  const std::vector<ObjectExtent> extents = extents_of(objects, calib);
  const OcclusionResult flags =
      classify_occlusion_near_first(extents, std::max(calib.image_width, kDefaultDepthLineLength));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (flags.occluded[i] != objects[i].intended_occluded) return false;
  }
  return true;
}

}  // namespace

double face_texture(std::uint64_t seed, int face, double s, double t) {
  const double coarse = value_noise(seed, face, s, t, 0.12);
  const double fine = value_noise(seed ^ 0xA5A5A5A5ull, face, s, t, 0.05);
  return 0.65 * coarse + 0.35 * fine;
}

bool fully_visible(const Box3D& box, const StereoCalibration& calib) {
  for (const Eigen::Vector3d& p : corners_of(box)) {
    if (!(p.z() > kDefaultMinDepth)) return false;
    const double v = calib.to_pixel_v(p.y() / p.z());
    const double u_left = calib.to_pixel_u(p.x() / p.z());
    const double u_right = calib.to_pixel_u((p.x() - calib.baseline) / p.z());
    if (v < 0.0 || v > calib.image_height) return false;
    if (u_left < 0.0 || u_left > calib.image_width) return false;
    if (u_right < 0.0 || u_right > calib.image_width) return false;
  }
  return true;
}

SceneRecord generate_scene(std::uint64_t seed, const SceneOptions& options) {
  if (options.n_objects < 1) {
    throw Error(ErrorCode::kInvalidArgument, "a scene needs at least one object");
  }
  if (!(options.z_min > 0.0) || !(options.z_max > options.z_min)) {
    throw Error(ErrorCode::kInvalidArgument, "depth range must be positive and non-empty");
  }
  if (options.occlusion_fraction < 0.0 || options.occlusion_fraction > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "occlusion fraction must lie in [0, 1]");
  }
  options.calib.validate();

  SceneRecord scene;
  scene.seed = seed;
  scene.calib = options.calib;
  scene.noise = options.noise;
  const StereoCalibration& calib = options.calib;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto sample_dim = [&](double mean) {
    const double value = mean * (1.0 + options.dims_sigma_fraction * gauss(rng));
    return std::clamp(value, mean * (1.0 - options.dims_clip_fraction),
                      mean * (1.0 + options.dims_clip_fraction));
  };
  auto sample_shape = [&](Box3D& box) {
    box.length = sample_dim(options.mean_dims.length);
    box.width = sample_dim(options.mean_dims.width);
    box.height = sample_dim(options.mean_dims.height);
    box.theta = normalize_angle(-kPi + 2.0 * kPi * unit(rng));
    box.y = options.camera_height - box.height / 2.0;
  };
  auto acceptable = [&](const Box3D& box) {
    if (options.allow_truncation) {
      return box.z - std::hypot(box.length, box.width) / 2.0 > kDefaultMinDepth;
    }
    return fully_visible(box, calib);
  };

  long occluded_target = std::lround(options.occlusion_fraction * options.n_objects);
  if (occluded_target > 0) occluded_target = std::min<long>(occluded_target, options.n_objects - 1);
  const int free_count = options.n_objects - static_cast<int>(occluded_target);

  for (int i = 0; i < options.n_objects; ++i) {
    const bool hidden = i >= free_count;
    bool placed = false;
    for (int attempt = 0; attempt < options.max_attempts && !placed; ++attempt) {
      SceneObject object;
      object.intended_occluded = hidden;
      sample_shape(object.box);
      if (!hidden) {
        object.box.z = options.z_min + (options.z_max - options.z_min) * unit(rng);
        const double u = calib.image_width * unit(rng);
        object.box.x = calib.to_normalized_u(u) * object.box.z;
      } else {
        const auto& occluder = scene.objects[static_cast<std::size_t>(
            std::min<double>(free_count - 1, std::floor(unit(rng) * free_count)))];
        const double bearing = occluder.box.x / occluder.box.z;
        object.box.z = occluder.box.z + 3.0 + 9.0 * unit(rng);
        object.box.x = bearing * object.box.z;
      }
      if (!acceptable(object.box)) continue;
      scene.objects.push_back(object);
      if (!options.allow_truncation && !occlusion_matches_intent(scene.objects, calib)) {
        scene.objects.pop_back();
        continue;
      }
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::kInfeasiblePlacement,
                  "could not place object " + std::to_string(i) + " after " +
                      std::to_string(options.max_attempts) + " attempts");
    }
  }

  for (SceneObject& object : scene.objects) {
    const ObservationVector exact = project_observations(object.box, calib);
    for (std::size_t row = 0; row < kObservationRows; ++row) {
      const bool vertical = row == kLeftVMin || row == kLeftVMax;
      const double focal = vertical ? calib.fy : calib.fx;
      object.noise[row] =
          options.noise.pixel_sigma > 0.0 ? options.noise.pixel_sigma * gauss(rng) / focal : 0.0;
      object.observation[row] = options.noise.dropout[row]
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : exact[row] + object.noise[row];
    }
  }
  return scene;
}

StereoPair render_scene(std::span<const Box3D> boxes, const StereoCalibration& calib,
                        std::uint64_t texture_seed) {
  for (const Box3D& box : boxes) {
    for (const Eigen::Vector3d& p : corners_of(box)) {
      if (!(p.z() > kDefaultMinDepth)) {
        throw Error(ErrorCode::kBehindCamera, "cannot render a box behind the camera");
      }
    }
  }
  return {render_view(boxes, calib, texture_seed, 0.0),
          render_view(boxes, calib, texture_seed, calib.baseline)};
}

StereoPair render_patch_pair(const Box3D& box, const StereoCalibration& calib,
                             std::uint64_t texture_seed) {
  return render_scene(std::span<const Box3D>(&box, 1), calib, texture_seed);
}

}  // namespace sc
