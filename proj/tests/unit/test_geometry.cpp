#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stereocenter/error.hpp"
#include "stereocenter/geometry.hpp"

using namespace sc;

namespace {

// Frozen from tests/oracles/frozen_values.py (numpy, rotation matrix built by hand).
constexpr double kCorners[8][3] = {
    {2.3519084395603675, 1.5649999999999999, 11.612503820474684},
    {0.79470996228562996, 1.5649999999999999, 12.094201757332668},
    {-0.35190843956036755, 1.5649999999999999, 8.387496179525316},
    {1.20529003771437, 1.5649999999999999, 7.9057982426673323},
    {2.3519084395603675, 0.035000000000000031, 11.612503820474684},
    {0.79470996228562996, 0.035000000000000031, 12.094201757332668},
    {-0.35190843956036755, 0.035000000000000031, 8.387496179525316},
    {1.20529003771437, 0.035000000000000031, 7.9057982426673323},
};

// Same script: box (2.5, 0.9, 20, 0.7) with mean car dims, fx = 721.5, b = 0.54.
constexpr double kKittiNormalized[7] = {
    0.032921762791349875, 0.0061339013605407749, 0.20865401584547305, 0.092545405132738526,
    0.0045622705152950152, 0.18288912841767821, 0.10413798549211448};
constexpr int kKittiVertex = 3;

StereoCalibration kitti_like() {
  StereoCalibration c;
  c.fx = 721.5;
  c.fy = 721.5;
  c.cx = 609.5593;
  c.cy = 172.854;
  c.baseline = 0.54;
  return c;
}

Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> z(5, 60), t(-kPi, kPi), bearing(-0.4, 0.4),
      dim(0.8, 1.2);
  Box3D b;
  b.z = z(rng);
  b.x = bearing(rng) * b.z;
  b.y = 0.9 + 0.1 * bearing(rng);
  b.theta = t(rng);
  b.length = 3.88 * dim(rng);
  b.width = 1.63 * dim(rng);
  b.height = 1.53 * dim(rng);
  return b;
}

}  // namespace

TEST(Geometry, CornersMatchFrozenRotationOracle) {
  const CornerSet c = corners_of({1, 0.8, 10, 0.3, 3.88, 1.63, 1.53});
  for (int i = 0; i < 8; ++i) {
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(c[i][a], kCorners[i][a], 1e-12) << i << "," << a;
  }
}

TEST(Geometry, CornerSignsFollowDocumentedCycle) {
  const double lat[] = {1, -1, -1, 1};
  const double lon[] = {1, 1, -1, -1};
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(corner_signs(k).lateral, lat[k % 4]);
    EXPECT_EQ(corner_signs(k).longitudinal, lon[k % 4]);
  }
}

TEST(Geometry, KittiLikeObservationMatchesFrozenValues) {
  const Box3D box{2.5, 0.9, 20.0, 0.7, 3.88, 1.63, 1.53};
  const ProjectionDetail d = project_detail(box, kitti_like());
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(d.observation[i], kKittiNormalized[i], 1e-14);
  EXPECT_EQ(d.keypoint.index, kKittiVertex);
}

TEST(Geometry, ProjectionAgreesWithFullMatrixOracle) {
  std::mt19937_64 rng(11);
  const StereoCalibration calib;
  const oracle::Rig rig{calib.fx, calib.fy, calib.cx, calib.cy, calib.baseline};
  for (int i = 0; i < 2000; ++i) {
    const Box3D box = random_box(rng);
    const oracle::Projection expected = oracle::project(box, rig);
    const ProjectionDetail got = project_detail(box, calib);
    EXPECT_EQ(got.keypoint.index, expected.perspective_vertex);
    for (std::size_t r = 0; r < 7; ++r) {
      ASSERT_NEAR(got.observation[r], expected.normalized[r], 1e-12) << "box " << i << " row " << r;
    }
  }
}

TEST(Geometry, OnAxisFrontFaceGivesHandComputedDisparity) {
  // theta = 0 puts the width along x; the front face sits at z - L/2.
  StereoCalibration c;
  c.baseline = 0.5;
  const Box3D box{0, 0, 10, 0, 4, 2, 1.5};
  const ObservationVector o = project_observations(box, c);
  const double face = 10 - 2.0;
  EXPECT_NEAR(o[kLeftUMin], -1.0 / face, 1e-15);
  EXPECT_NEAR(o[kLeftUMax], 1.0 / face, 1e-15);
  EXPECT_NEAR(o[kRightUMin] - o[kLeftUMin], -0.5 / face, 1e-15);
  EXPECT_NEAR(o[kRightUMax] - o[kLeftUMax], -0.5 / face, 1e-15);
}

TEST(Geometry, ZeroBaselineMakesViewsCoincide) {
  std::mt19937_64 rng(3);
  StereoCalibration c;
  c.baseline = 0.0;
  for (int i = 0; i < 200; ++i) {
    const ObservationVector o = project_observations(random_box(rng), c);
    EXPECT_EQ(o[kRightUMin], o[kLeftUMin]);
    EXPECT_EQ(o[kRightUMax], o[kLeftUMax]);
  }
}

TEST(Geometry, FullTurnLeavesOutputsUnchanged) {
  std::mt19937_64 rng(5);
  const StereoCalibration c;
  for (int i = 0; i < 200; ++i) {
    Box3D b = random_box(rng);
    Box3D turned = b;
    turned.theta = normalize_angle(b.theta + 2 * kPi);
    b.theta = normalize_angle(b.theta);
    const ObservationVector x = project_observations(b, c);
    const ObservationVector y = project_observations(turned, c);
    for (std::size_t r = 0; r < 7; ++r) EXPECT_NEAR(x[r], y[r], 1e-15);
  }
}

TEST(Geometry, BehindCameraIsRejected) {
  const Box3D box{0, 0, 1.0, 0, 4, 2, 1.5};
  try {
    project_observations(box, StereoCalibration{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
}

TEST(Geometry, PerspectiveVertexMatchesRangeArgmin) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    const Box3D b = random_box(rng);
    const auto pts = oracle::corners(b);
    int best = 0;
    for (int k = 1; k < 4; ++k) {
      if (std::hypot(pts[k][0], pts[k][2]) < std::hypot(pts[best][0], pts[best][2])) best = k;
    }
    const PerspectiveVertex v = perspective_vertex(b.theta, b.x, b.z, b.length, b.width);
    ASSERT_EQ(v.index, best) << "box " << i;
    EXPECT_EQ(v.boundary[0], (best + 3) % 4);
    EXPECT_EQ(v.boundary[1], (best + 1) % 4);
  }
}

TEST(Geometry, PerspectiveVertexCoversAllQuadrantsOnThetaGrid) {
  bool seen[4] = {false, false, false, false};
  for (int i = 0; i < 360; ++i) {
    const double theta = -kPi + (i + 0.5) * 2 * kPi / 360;
    const int k = perspective_vertex(theta, 0.0, 10.0, 3.88, 1.63).index;
    const auto pts = oracle::corners({0, 0, 10, theta, 3.88, 1.63, 1.53});
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(std::hypot(pts[k][0], pts[k][2]), std::hypot(pts[j][0], pts[j][2]) + 1e-12);
    }
    seen[k] = true;
  }
  for (bool s : seen) EXPECT_TRUE(s);
}

TEST(Geometry, SymmetricViewTiesToLowerIndex) {
  const PerspectiveVertex v = perspective_vertex(0.0, 0.0, 10.0, 4.0, 2.0);
  EXPECT_TRUE(v.ambiguous);
  EXPECT_EQ(v.index, 2);  // front face is the -L/2 pair {2, 3}
}

TEST(Geometry, QuarterTurnVertexIsRangeArgmin) {
  const PerspectiveVertex v = perspective_vertex(kPi / 4, 0.0, 10.0, 3.88, 1.63);
  const auto pts = oracle::corners({0, 0, 10, kPi / 4, 3.88, 1.63, 1.53});
  for (int j = 0; j < 4; ++j) {
    EXPECT_LE(std::hypot(pts[v.index][0], pts[v.index][2]), std::hypot(pts[j][0], pts[j][2]));
  }
}

TEST(Geometry, AlphaThetaConversions) {
  EXPECT_DOUBLE_EQ(alpha_to_theta(0.0, 0.0, 10.0), 0.0);
  EXPECT_NEAR(alpha_to_theta(0.2, 7.0, 7.0), 0.2 + kPi / 4, 1e-15);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> a(-kPi, kPi), x(-30, 30), z(1, 80);
  for (int i = 0; i < 1000; ++i) {
    const double alpha = a(rng), px = x(rng), pz = z(rng);
    EXPECT_NEAR(normalize_angle(theta_to_alpha(alpha_to_theta(alpha, px, pz), px, pz) - alpha), 0.0,
                1e-12);
  }
}

TEST(Geometry, OrientationRoundTrip) {
  const OrientationEncoding at_center = encode_orientation(0.0);
  EXPECT_NEAR(at_center.values[2], 0.0, 1e-15);
  EXPECT_NEAR(at_center.values[3], 1.0, 1e-15);
  EXPECT_NEAR(decode_orientation(encode_orientation(1.0)), 1.0, 1e-12);
  double worst = 0.0;
  for (int i = 0; i < 720; ++i) {
    const double alpha = normalize_angle(-kPi + (i + 0.25) * 2 * kPi / 720);
    worst = std::max(worst,
                     std::abs(normalize_angle(decode_orientation(encode_orientation(alpha)) - alpha)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Geometry, NormalizeAngleRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_NEAR(normalize_angle(-kPi), kPi, 1e-15);
  EXPECT_NEAR(normalize_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(0.5 + 4 * kPi), 0.5, 1e-12);
}

TEST(Geometry, CalibrationValidation) {
  StereoCalibration c;
  c.fx = 0;
  EXPECT_THROW(c.validate(), Error);
  c = StereoCalibration{};
  c.baseline = -0.1;
  EXPECT_THROW(c.validate(), Error);
  c.baseline = 0.0;
  EXPECT_NO_THROW(c.validate());
}
