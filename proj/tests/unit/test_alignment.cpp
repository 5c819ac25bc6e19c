#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stereocenter/alignment.hpp"
#include "stereocenter/error.hpp"
#include "stereocenter/synth.hpp"

using namespace sc;

namespace {

Box2D left_box_of(const Box3D& b, const StereoCalibration& c) {
  const ObservationVector o = project_observations(b, c);
  return {c.to_pixel_u(o[kLeftUMin]), c.to_pixel_v(o[kLeftVMin]), c.to_pixel_u(o[kLeftUMax]),
          c.to_pixel_v(o[kLeftVMax])};
}

Box3D car(double x, double z, double theta) { return {x, 0.9, z, theta, 3.9, 1.6, 1.5}; }

}  // namespace

// Hand traces of the two-pass depth line.

TEST(Occlusion, SingleObjectIsUnoccluded) {
  const std::vector<ObjectExtent> objs{{100.0, 200.0, 10.0}};
  const OcclusionResult r = classify_occlusion(objs);
  EXPECT_FALSE(r.occluded[0]);
  EXPECT_EQ(r.depth_line[99], 0.0);
  EXPECT_EQ(r.depth_line[100], 10.0);
  EXPECT_EQ(r.depth_line[200], 10.0);
  EXPECT_EQ(r.depth_line[201], 0.0);
}

TEST(Occlusion, FarObjectInsideNearExtentIsOccluded) {
  // near [100, 300] z = 10 writes 10; far [150, 250] z = 20 leaves them (20 > 10).
  // Far endpoints read 10 < 20 on both sides; near endpoints read 10, not < 10.
  const std::vector<ObjectExtent> objs{{100.0, 300.0, 10.0}, {150.0, 250.0, 20.0}};
  const OcclusionResult r = classify_occlusion(objs);
  EXPECT_FALSE(r.occluded[0]);
  EXPECT_TRUE(r.occluded[1]);
  EXPECT_EQ(r.depth_line[150], 10.0);
  EXPECT_EQ(r.depth_line[250], 10.0);
}

TEST(Occlusion, SingleEndpointOcclusionStaysUnoccluded) {
  // near [100, 200] z = 10; far [150, 300] z = 20 fills 201..300 with 20.
  // Far left endpoint reads 10 < 20, right endpoint reads 20: only one side.
  const std::vector<ObjectExtent> objs{{100.0, 200.0, 10.0}, {150.0, 300.0, 20.0}};
  const OcclusionResult r = classify_occlusion(objs);
  EXPECT_FALSE(r.occluded[0]);
  EXPECT_FALSE(r.occluded[1]);
  EXPECT_EQ(r.depth_line[300], 20.0);
}

TEST(Occlusion, FarFirstOrderAveragesNearerDepth) {
  // far first writes 20 on 150..250; near then averages those cells to 15
  // and writes 10 on the rest of its extent.
  const std::vector<ObjectExtent> objs{{150.0, 250.0, 20.0}, {100.0, 300.0, 10.0}};
  const OcclusionResult r = classify_occlusion(objs);
  EXPECT_EQ(r.depth_line[150], 15.0);
  EXPECT_EQ(r.depth_line[100], 10.0);
  EXPECT_TRUE(r.occluded[0]);
  EXPECT_FALSE(r.occluded[1]);
}

TEST(Occlusion, NearFirstWrapperMapsFlagsBackToInputOrder) {
  const std::vector<ObjectExtent> objs{{150.0, 250.0, 20.0}, {100.0, 300.0, 10.0}};
  const OcclusionResult r = classify_occlusion_near_first(objs);
  EXPECT_TRUE(r.occluded[0]);
  EXPECT_FALSE(r.occluded[1]);
  EXPECT_EQ(r.depth_line[150], 10.0);
}

TEST(Occlusion, SortedInputIsIdempotentUnderRerun) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1200), w(20, 200), z(5, 60);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ObjectExtent> objs;
    for (int i = 0; i < 8; ++i) {
      const double x = u(rng);
      objs.push_back({x, std::min(x + w(rng), 1279.0), z(rng)});
    }
    std::sort(objs.begin(), objs.end(), [](auto& a, auto& b) { return a.z < b.z; });
    const OcclusionResult a = classify_occlusion(objs);
    const OcclusionResult b = classify_occlusion(objs);
    EXPECT_EQ(a.occluded, b.occluded);
    EXPECT_EQ(a.depth_line, b.depth_line);
    for (const ObjectExtent& o : objs) {
      for (int j = static_cast<int>(o.x_min); j <= static_cast<int>(o.x_max); ++j) {
        ASSERT_GT(a.depth_line[static_cast<std::size_t>(j)], 0.0);
      }
    }
  }
}

TEST(Occlusion, OutOfRangeExtentIsClampedAndFlagged) {
  const std::vector<ObjectExtent> objs{{-5.0, 1300.0, 10.0}};
  const OcclusionResult r = classify_occlusion(objs);
  EXPECT_TRUE(r.extent_clamped);
  EXPECT_EQ(r.depth_line.front(), 10.0);
  EXPECT_EQ(r.depth_line.back(), 10.0);
}

TEST(Occlusion, NonPositiveDepthIsRejected) {
  const std::vector<ObjectExtent> objs{{0.0, 10.0, 0.0}};
  EXPECT_THROW(classify_occlusion(objs), Error);
}

TEST(Refine, FrontoParallelPatchLandsWithinHalfStep) {
  const StereoCalibration c;
  const Box3D truth = car(0.0, 15.0, 0.0);
  const StereoPair pair = render_patch_pair(truth, c, 42);
  for (double factor : {0.93, 1.0, 1.08}) {
    Box3D start = truth;
    start.z = 15.0 * factor;
    const AlignmentPatch patch = make_patch(start, left_box_of(truth, c), c, 1.2);
    ASSERT_FALSE(patch.samples.empty());
    const RefineResult r = refine_depth(patch, pair.left, pair.right, start.z, c);
    EXPECT_FALSE(r.flat_cost);
    EXPECT_LE(std::abs(r.z - 15.0), 0.5 * r.step) << "factor " << factor << " z " << r.z;
  }
}

TEST(Refine, CorruptedDepthIsRecoveredWithinHalfStep) {
  const StereoCalibration c;
  const Box3D truth = car(-2.0, 20.0, 0.6);
  const StereoPair pair = render_patch_pair(truth, c, 7);
  Box3D start = truth;
  start.x *= 1.1;
  start.y *= 1.1;
  start.z *= 1.1;
  const AlignmentPatch patch = make_patch(start, left_box_of(start, c), c, 1.2);
  const RefineResult r = refine_depth(patch, pair.left, pair.right, start.z, c);
  EXPECT_LE(std::abs(r.z - truth.z), 0.5 * r.step) << r.z;
}

TEST(Refine, OptimalStartStaysWithinOneStep) {
  const StereoCalibration c;
  const Box3D truth = car(3.0, 25.0, -0.9);
  const StereoPair pair = render_patch_pair(truth, c, 11);
  const AlignmentPatch patch = make_patch(truth, left_box_of(truth, c), c, 1.2);
  const RefineResult r = refine_depth(patch, pair.left, pair.right, truth.z, c);
  EXPECT_LE(std::abs(r.z - truth.z), r.step);
}

TEST(Refine, OutputStaysInsideBracket) {
  const StereoCalibration c;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> f(0.6, 1.4);
  const Box3D truth = car(1.0, 18.0, 1.2);
  const StereoPair pair = render_patch_pair(truth, c, 3);
  for (int i = 0; i < 20; ++i) {
    const double z0 = truth.z * f(rng);
    Box3D start = truth;
    start.x *= z0 / truth.z;
    start.y *= z0 / truth.z;
    start.z = z0;
    const AlignmentPatch patch = make_patch(start, left_box_of(start, c), c, 1.2);
    const RefineResult r = refine_depth(patch, pair.left, pair.right, z0, c);
    EXPECT_GE(r.z, z0 * 0.8 - 1e-12);
    EXPECT_LE(r.z, z0 * 1.2 + 1e-12);
    EXPECT_NEAR(r.step, z0 * 0.4 / 63.0, 1e-12);
  }
}

TEST(Refine, ConstantImagesGiveFlatCost) {
  const StereoCalibration c;
  const Box3D truth = car(0.0, 15.0, 0.3);
  const GrayImage flat(c.image_width, c.image_height, 120);
  const AlignmentPatch patch = make_patch(truth, left_box_of(truth, c), c);
  const RefineResult r = refine_depth(patch, flat, flat, 15.0, c);
  EXPECT_TRUE(r.flat_cost);
  EXPECT_EQ(r.z, 15.0);
}

TEST(Refine, PatchSamplesLieInLowerHalfBetweenBoundaryKeypoints) {
  const StereoCalibration c;
  const Box3D b = car(2.0, 20.0, 0.8);
  const Box2D box = left_box_of(b, c);
  const AlignmentPatch patch = make_patch(b, box, c);
  ASSERT_FALSE(patch.samples.empty());
  for (const auto& s : patch.samples) {
    EXPECT_GE(s.v + 0.5, box.center_y());
    EXPECT_LE(s.v, box.y2);
    EXPECT_GE(s.u, std::floor(box.x1));
    EXPECT_LE(s.u, std::ceil(box.x2));
    EXPECT_GT(s.depth_at(b.z), 0.0);
  }
}

TEST(Refine, InvalidInputsAreRejected) {
  const StereoCalibration c;
  const Box3D b = car(0.0, 15.0, 0.0);
  EXPECT_THROW(make_patch(b, left_box_of(b, c), c, 0.5), Error);
  const StereoPair pair = render_patch_pair(b, c, 1);
  const AlignmentPatch patch = make_patch(b, left_box_of(b, c), c);
  EXPECT_THROW(refine_depth(patch, pair.left, pair.right, -1.0, c), Error);
  RefineConfig cfg;
  cfg.max_pixels = 0;
  EXPECT_THROW(refine_depth(patch, pair.left, pair.right, 15.0, c, cfg), Error);
}

TEST(AdaptiveRefine, PreservesBearingAndShape) {
  const StereoCalibration c;
  const Box3D truth = car(-3.0, 22.0, 2.0);
  const StereoPair pair = render_patch_pair(truth, c, 5);
  Box3D start = truth;
  const double s = 0.92;
  start.x *= s;
  start.y *= s;
  start.z *= s;
  const std::vector<AlignmentInput> in{{start, left_box_of(start, c), false}};
  const auto out = adaptive_refine(in, pair.left, pair.right, c);
  ASSERT_TRUE(out[0].refined);
  EXPECT_NEAR(out[0].pose.x / out[0].pose.z, start.x / start.z, 1e-12);
  EXPECT_NEAR(out[0].pose.y / out[0].pose.z, start.y / start.z, 1e-12);
  EXPECT_EQ(out[0].pose.theta, start.theta);
  EXPECT_EQ(out[0].pose.length, start.length);
  EXPECT_EQ(out[0].pose.width, start.width);
  EXPECT_EQ(out[0].pose.height, start.height);
  EXPECT_LT(std::abs(out[0].pose.z - truth.z), std::abs(start.z - truth.z));
}

TEST(AdaptiveRefine, OccludedObjectsPassThroughExactly) {
  const StereoCalibration c;
  const Box3D a = car(-3.0, 22.0, 2.0), b = car(4.0, 30.0, -0.4);
  const StereoPair pair = render_patch_pair(a, c, 5);
  const std::vector<AlignmentInput> in{{a, left_box_of(a, c), true}, {b, left_box_of(b, c), true}};
  const auto out = adaptive_refine(in, pair.left, pair.right, c);
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_FALSE(out[i].refined);
    EXPECT_EQ(out[i].pose.x, in[i].pose.x);
    EXPECT_EQ(out[i].pose.y, in[i].pose.y);
    EXPECT_EQ(out[i].pose.z, in[i].pose.z);
    EXPECT_EQ(out[i].pose.theta, in[i].pose.theta);
  }
}
