#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stereocenter/codec_selftest.hpp"
#include "stereocenter/error.hpp"
#include "stereocenter/heatmap_codec.hpp"

using namespace sc;

namespace {

constexpr double kFocalSingleCell = 0.010830424696249145;  // frozen_values.py

std::vector<ObjectAnnotation> spaced_cars(const StereoCalibration& calib) {
  std::vector<ObjectAnnotation> out;
  const double xs[] = {-7.0, 0.0, 6.5};
  const double zs[] = {18.0, 25.0, 15.0};
  const double thetas[] = {0.4, -1.1, 2.3};
  for (int i = 0; i < 3; ++i) {
    out.push_back(annotate_object({xs[i], 0.9, zs[i], thetas[i], 3.9, 1.6, 1.5}, 0, calib));
  }
  return out;
}

std::vector<Tensor*> regression_heads(HeadMaps& m) {
  return {&m.offset, &m.size, &m.distance, &m.dim_offset, &m.orientation, &m.vertex_offset,
          &m.vertex_distance};
}

}  // namespace

TEST(Codec, SplatSigmaFollowsBoxAspect) {
  Tensor heat(1, 96, 320);
  const SplatReport r = splat_center(heat, 0, 400.0, 200.0, 100.0, 25.0, 0.6, 4);
  EXPECT_NEAR(r.sigma_x / r.sigma_y, 4.0, 1e-12);
  EXPECT_NEAR(r.sigma_x, 0.6 * 25.0 / 6.0, 1e-12);
  EXPECT_EQ(r.peak_x, 100);
  EXPECT_EQ(r.peak_y, 50);
  EXPECT_EQ(heat.at(0, 50, 100), 1.0);
  EXPECT_FALSE(r.clamped);
}

TEST(Codec, SplatHasEllipticalIsoContours) {
  Tensor heat(1, 96, 320);
  const SplatReport r = splat_center(heat, 0, 401.0, 201.0, 100.0, 25.0, 0.6, 4);
  // Points on the ellipse (dx/sx)^2 + (dy/sy)^2 = 1 share one value.
  for (int dx : {-5, 5}) {
    for (int dy : {-2, 2}) {
      EXPECT_NEAR(heat.at(0, r.peak_y + dy, r.peak_x + dx),
                  heat.at(0, r.peak_y - dy, r.peak_x - dx), 1e-15);
    }
  }
  EXPECT_NEAR(heat.at(0, r.peak_y, r.peak_x + 5), std::exp(-0.5 * 25 / (r.sigma_x * r.sigma_x)),
              1e-12);
}

TEST(Codec, SplatMatchesDenseOracleWithMaxBlending) {
  Tensor heat(1, 40, 60);
  const SplatReport a = splat_center(heat, 0, 80.0, 60.0, 60.0, 30.0, 0.6, 4);
  const SplatReport b = splat_center(heat, 0, 120.0, 70.0, 40.0, 40.0, 0.6, 4);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 60; ++x) {
      const double expected =
          std::max(oracle::splat_value(x, y, a.peak_x, a.peak_y, a.sigma_x, a.sigma_y),
                   oracle::splat_value(x, y, b.peak_x, b.peak_y, b.sigma_x, b.sigma_y));
      ASSERT_NEAR(heat.at(0, y, x), expected, 1e-12) << x << "," << y;
    }
  }
}

TEST(Codec, DegenerateBoxClampsSigma) {
  Tensor heat(1, 20, 20);
  const SplatReport r = splat_center(heat, 0, 40.0, 40.0, 0.1, 2.0, 0.6, 4, 0.5);
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.sigma_x, 0.5);
  EXPECT_EQ(r.sigma_y, 0.5);
}

TEST(Codec, FocalLossSingleCellMatchesFrozenValue) {
  Tensor pred(1, 1, 1, 0.5), target(1, 1, 1, 0.5);
  const LossValue l = focal_loss(pred, target);
  EXPECT_NEAR(l.value, kFocalSingleCell, 1e-15);
  EXPECT_TRUE(l.empty);
}

TEST(Codec, FocalLossPositiveCell) {
  Tensor pred(1, 1, 2, 0.5), target(1, 1, 2, 0.0);
  target.at(0, 0, 0) = 1.0;
  pred.at(0, 0, 0) = 0.8;
  pred.at(0, 0, 1) = 0.1;
  const double expected = -(0.04 * std::log(0.8) + 0.01 * std::log(0.9));
  EXPECT_NEAR(focal_loss(pred, target).value, expected, 1e-15);
}

TEST(Codec, FocalLossRejectsSaturatedPredictions) {
  Tensor pred(1, 1, 1, 1.0), target(1, 1, 1, 0.0);
  EXPECT_THROW(focal_loss(pred, target), Error);
}

TEST(Codec, FocalGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor pred(2, 6, 7), target(2, 6, 7);
  for (double& v : pred.data()) v = u(rng);
  for (double& v : target.data()) v = u(rng) < 0.5 ? 0.0 : u(rng) * 0.9;
  target.at(0, 2, 3) = 1.0;
  target.at(1, 4, 1) = 1.0;
  const LossValue base = focal_loss(pred, target);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Tensor plus = pred, minus = pred;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double numeric = (focal_loss(plus, target).value - focal_loss(minus, target).value) / (2 * h);
    EXPECT_NEAR(base.gradient.data()[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric))) << i;
  }
}

TEST(Codec, L1LossesEqualShiftWhenPredictionsAreOffset) {
  const StereoCalibration calib;
  const HeadTargets targets = encode_targets(spaced_cars(calib), CodecConfig{});
  HeadMaps pred = perfect_predictions(targets);
  const LossVector perfect = compute_losses(targets, pred).values();
  for (std::size_t i = 0; i < kLossTerms; ++i) EXPECT_LT(perfect[i], 1e-5) << i;

  for (Tensor* t : regression_heads(pred)) {
    for (double& v : t->data()) v += 0.1;
  }
  for (double& v : pred.right_width.data()) v = -std::log(std::exp(-v) + 0.1);
  const RegressionLosses l = l1_losses(targets, pred);
  for (const LossValue* v : {&l.offset, &l.size, &l.distance, &l.right_width, &l.dim_offset,
                             &l.orientation, &l.vertex_offset, &l.vertex_distance}) {
    EXPECT_NEAR(v->value, 0.1, 1e-9);
  }
}

TEST(Codec, RightWidthTransformGivesThreeAtQuarterSigmoid) {
  const double raw = std::log(0.25 / 0.75);  // sigmoid(raw) = 0.25
  EXPECT_NEAR(1.0 / (1.0 / (1.0 + std::exp(-raw))) - 1.0, 3.0, 1e-12);
  HeadTargets t;
  t.dense = HeadMaps::zeros(1, 4, 4);
  ObjectTarget o;
  o.cell_x = 1;
  o.cell_y = 2;
  o.right_width = 3.0;
  t.objects.push_back(o);
  HeadMaps pred = HeadMaps::zeros(1, 4, 4);
  pred.right_width.at(0, 2, 1) = raw;
  EXPECT_NEAR(l1_losses(t, pred).right_width.value, 0.0, 1e-12);
}

TEST(Codec, L1GradientsMatchCentralDifferences) {
  const CodecConfig cfg = gradient_fixture_config();
  const HeadTargets targets = encode_targets(random_annotations(3, 3, cfg), cfg);
  const HeadMaps pred = random_predictions(9, targets, 1e-2);
  const RegressionLosses base = l1_losses(targets, pred);
  const double h = 1e-6;
  struct Head {
    Tensor HeadMaps::*field;
    LossValue RegressionLosses::*loss;
  };
  const Head heads[] = {{&HeadMaps::offset, &RegressionLosses::offset},
                        {&HeadMaps::size, &RegressionLosses::size},
                        {&HeadMaps::distance, &RegressionLosses::distance},
                        {&HeadMaps::right_width, &RegressionLosses::right_width},
                        {&HeadMaps::dim_offset, &RegressionLosses::dim_offset},
                        {&HeadMaps::orientation, &RegressionLosses::orientation},
                        {&HeadMaps::vertex_offset, &RegressionLosses::vertex_offset},
                        {&HeadMaps::vertex_distance, &RegressionLosses::vertex_distance}};
  for (const Head& head : heads) {
    const Tensor& grad = (base.*head.loss).gradient;
    for (std::size_t i = 0; i < (pred.*head.field).size(); ++i) {
      HeadMaps plus = pred, minus = pred;
      (plus.*head.field).data()[i] += h;
      (minus.*head.field).data()[i] -= h;
      const double numeric =
          ((l1_losses(targets, plus).*head.loss).value - (l1_losses(targets, minus).*head.loss).value) /
          (2 * h);
      ASSERT_NEAR(grad.data()[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(Codec, TotalLossClosedFormAndGradient) {
  LossVector losses{};
  LossWeights w;
  for (std::size_t i = 0; i < kLossTerms; ++i) {
    losses[i] = 0.3 + 0.2 * static_cast<double>(i);
    w.log_variance[i] = -1.0 + 0.25 * static_cast<double>(i);
  }
  const TotalLoss t = total_loss(losses, w);
  double expected = 0.0;
  for (std::size_t i = 0; i < kLossTerms; ++i) {
    expected += std::exp(-w.log_variance[i]) * losses[i] + w.log_variance[i];
  }
  EXPECT_NEAR(t.value, expected, 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < kLossTerms; ++i) {
    LossWeights p = w, m = w;
    p.log_variance[i] += h;
    m.log_variance[i] -= h;
    const double ds = (total_loss(losses, p).value - total_loss(losses, m).value) / (2 * h);
    EXPECT_NEAR(t.d_log_variance[i], ds, 1e-6);
    LossVector lp = losses, lm = losses;
    lp[i] += h;
    lm[i] -= h;
    const double dl = (total_loss(lp, w).value - total_loss(lm, w).value) / (2 * h);
    EXPECT_NEAR(t.d_losses[i], dl, 1e-6);
  }
}

TEST(Codec, UniformBelowThresholdHeatmapDecodesNothing) {
  CodecConfig cfg;
  HeadMaps maps = HeadMaps::zeros(1, cfg.output_height(), cfg.output_width());
  for (double& v : maps.center_heatmap.data()) v = 0.2;
  EXPECT_TRUE(decode_detections(maps, cfg).empty());
}

TEST(Codec, ClosePeaksAreBothRecovered) {
  Tensor heat(1, 10, 12, 0.0);
  heat.at(0, 5, 3) = 0.9;
  heat.at(0, 5, 6) = 0.8;
  heat.at(0, 5, 4) = 0.5;
  heat.at(0, 5, 5) = 0.5;
  const auto peaks = find_peaks(heat, 0, 0.25);
  ASSERT_EQ(peaks.size(), 2u);
  EXPECT_EQ(peaks[0], (std::array<int, 2>{3, 5}));
  EXPECT_EQ(peaks[1], (std::array<int, 2>{6, 5}));
}

TEST(Codec, PlateauKeepsLowestRowMajorCell) {
  Tensor heat(1, 6, 6, 0.0);
  heat.at(0, 2, 2) = 0.7;
  heat.at(0, 2, 3) = 0.7;
  heat.at(0, 3, 2) = 0.7;
  const auto peaks = find_peaks(heat, 0, 0.25);
  ASSERT_EQ(peaks.size(), 1u);
  EXPECT_EQ(peaks[0], (std::array<int, 2>{2, 2}));
}

TEST(Codec, EncodeDecodeRoundTrip) {
  const StereoCalibration calib;
  const CodecConfig cfg;
  const std::vector<ObjectAnnotation> objects = spaced_cars(calib);
  const HeadTargets targets = encode_targets(objects, cfg);
  const std::vector<StereoDetection> dets = decode_detections(perfect_predictions(targets), cfg);
  ASSERT_EQ(dets.size(), objects.size());
  for (const ObjectAnnotation& a : objects) {
    const StereoDetection* match = nullptr;
    for (const StereoDetection& d : dets) {
      if (std::abs(d.left.center_x() - a.left.center_x()) < 1.0) match = &d;
    }
    ASSERT_NE(match, nullptr);
    // Cell of the peak is within one cell of the raw center before offsets.
    EXPECT_LE(std::abs(match->cell_x - a.left.center_x() / cfg.downsample), 1.0);
    EXPECT_NEAR(match->left.x1, a.left.x1, 1e-9);
    EXPECT_NEAR(match->left.y1, a.left.y1, 1e-9);
    EXPECT_NEAR(match->left.x2, a.left.x2, 1e-9);
    EXPECT_NEAR(match->left.y2, a.left.y2, 1e-9);
    EXPECT_NEAR(match->right_x1, a.right_x1, 1e-9);
    EXPECT_NEAR(match->right_x2, a.right_x2, 1e-9);
    EXPECT_NEAR(match->dims.length, a.dims.length, 1e-12);
    EXPECT_NEAR(match->dims.width, a.dims.width, 1e-12);
    EXPECT_NEAR(match->dims.height, a.dims.height, 1e-12);
    EXPECT_NEAR(normalize_angle(match->alpha - a.alpha), 0.0, 1e-9);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_TRUE(match->vertex_from_heatmap[k]);
      EXPECT_NEAR((match->vertices[k] - a.vertices[k]).norm(), 0.0, 1e-9);
    }
  }
}

TEST(Codec, PackUnpackRoundTrip) {
  const HeadTargets targets = encode_targets(spaced_cars(StereoCalibration{}), CodecConfig{});
  const HeadMaps pred = perfect_predictions(targets);
  const Tensor packed = pred.pack();
  EXPECT_EQ(packed.channels(), pred.total_channels());
  EXPECT_EQ(packed.channels(), 1 + 2 + 2 + 2 + 1 + 3 + 8 + 4 + 2 + 8);
  const HeadMaps back = HeadMaps::unpack(packed, 1);
  EXPECT_EQ(back.pack().data(), packed.data());
}

TEST(Codec, SchtRoundTripIsFloatExact) {
  Tensor t(3, 4, 5);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.1 * static_cast<double>(i) - 2.0;
  std::stringstream buf;
  write_scht(buf, t);
  EXPECT_EQ(buf.str().size(), 4 + 12 + 4 * t.size());
  EXPECT_EQ(buf.str().substr(0, 4), "SCHT");
  const Tensor back = read_scht(buf);
  ASSERT_TRUE(back.same_shape(t));
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back.data()[i], static_cast<double>(static_cast<float>(t.data()[i])));
  }
}

TEST(Codec, SchtRejectsBadMagic) {
  std::stringstream buf("NOPE0000000000000000");
  EXPECT_THROW(read_scht(buf), Error);
}

TEST(Codec, SelfTestPassesAndDetectsInjectedBug) {
  CodecSelfTestOptions opt;
  opt.gradient_fixtures = 4;
  opt.round_trip_objects = 30;
  const CodecSelfTestReport good = run_codec_selftest(opt);
  EXPECT_TRUE(good.passed()) << good.to_text();
  EXPECT_TRUE(good.sweep_monotone);
  opt.inject_gradient_bug = true;
  EXPECT_FALSE(run_codec_selftest(opt).passed());
}

TEST(Codec, UnknownClassIsRejected) {
  ObjectAnnotation a = annotate_object({0, 0.9, 20, 0, 3.9, 1.6, 1.5}, 0, StereoCalibration{});
  a.class_id = 5;
  EXPECT_THROW(encode_targets({a}, CodecConfig{}), Error);
}
