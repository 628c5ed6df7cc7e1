// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "semsplat/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace semsplat;

TEST(Psnr, IdentityConstantAndUnitErrors) {
    Rng rng(3);
    ImageBuffer img = fixtures::random_buffer(rng, 8, 8, 3);
    for (auto& v : img.data) v = std::abs(v) / 4.0;
    EXPECT_TRUE(std::isinf(psnr(img, img)));

    const ImageBuffer zeros(8, 8, 3, 0.0);
    const ImageBuffer tenth(8, 8, 3, 0.1);
    EXPECT_NEAR(psnr(zeros, tenth), 20.0, 1e-12);

    const ImageBuffer ones(8, 8, 3, 1.0);
    EXPECT_NEAR(psnr(zeros, ones), 0.0, 1e-12);
}

TEST(Psnr, Symmetric) {
    Rng rng(5);
    const ImageBuffer a = fixtures::random_buffer(rng, 9, 7, 3, 0.2);
    const ImageBuffer b = fixtures::random_buffer(rng, 9, 7, 3, 0.2);
    EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
}

TEST(Ssim, IdenticalImagesScoreOne) {
    Rng rng(7);
    ImageBuffer img = fixtures::random_buffer(rng, 16, 16, 3);
    for (auto& v : img.data) v = 0.5 + 0.2 * std::tanh(v);
    EXPECT_NEAR(ssim(img, img), 1.0, 1e-12);
}

TEST(Ssim, NegationScoresBelowOne) {
    Rng rng(11);
    ImageBuffer img(16, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) img.at(x, y, 0) = 0.5 + 0.4 * std::sin(0.7 * x + 0.3 * y);
    ImageBuffer negated = img;
    for (auto& v : negated.data) v = 1.0 - v;
    EXPECT_LT(ssim(img, negated), 1.0);
}

TEST(Ssim, MatchesDirectFormulaOracle) {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        ImageBuffer a = fixtures::random_buffer(rng, 20, 14, 3, 0.25);
        ImageBuffer b = a;
        for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += 0.05 * rng.normal();
        for (auto& v : a.data) v = std::clamp(v + 0.5, 0.0, 1.0);
        for (auto& v : b.data) v = std::clamp(v + 0.5, 0.0, 1.0);
        EXPECT_NEAR(ssim(a, b), oracles::ssim_reference(a, b), 1e-6);
    }
}

TEST(DepthMetrics, ExactAndThresholdCases) {
    Rng rng(17);
    ImageBuffer gt(6, 6, 1);
    for (auto& v : gt.data) v = rng.uniform(0.5, 5.0);

    const auto [rel0, tau0] = depth_metrics(gt, gt);
    EXPECT_NEAR(rel0, 0.0, 1e-12);
    EXPECT_NEAR(tau0, 100.0, 1e-12);

    ImageBuffer low = gt;
    for (auto& v : low.data) v *= 1.02;
    const auto [rel2, tau2] = depth_metrics(low, gt);
    EXPECT_NEAR(rel2, 2.0, 1e-9);
    EXPECT_NEAR(tau2, 100.0, 1e-12);

    ImageBuffer high = gt;
    for (auto& v : high.data) v *= 1.05;
    const auto [rel5, tau5] = depth_metrics(high, gt);
    EXPECT_NEAR(rel5, 5.0, 1e-9);
    EXPECT_NEAR(tau5, 0.0, 1e-12);
}

TEST(DepthMetrics, MaskAndInvalidGtExcluded) {
    ImageBuffer gt(2, 2, 1, 1.0);
    gt.at(1, 1, 0) = -1.0; // invalid ground truth
    ImageBuffer pred(2, 2, 1, 1.0);
    pred.at(1, 0, 0) = 2.0; // masked away below
    ImageBuffer mask(2, 2, 1, 1.0);
    mask.at(1, 0, 0) = 0.0;
    const auto [rel, tau] = depth_metrics(pred, gt, &mask);
    EXPECT_NEAR(rel, 0.0, 1e-12);
    EXPECT_NEAR(tau, 100.0, 1e-12);
}

TEST(DepthMetrics, NonPositivePredictionNeverInlier) {
    ImageBuffer gt(1, 1, 1, 1.0);
    ImageBuffer pred(1, 1, 1, -1.0);
    const auto [rel, tau] = depth_metrics(pred, gt);
    EXPECT_NEAR(tau, 0.0, 1e-12);
    EXPECT_NEAR(rel, 200.0, 1e-12);
}

TEST(SegMetrics, PerfectPrediction) {
    Rng rng(19);
    ImageBuffer labels(8, 8, 1);
    for (auto& v : labels.data) v = static_cast<double>(rng.uniform_index(3));
    const SegMetrics m = seg_metrics(labels, labels, 3);
    EXPECT_DOUBLE_EQ(m.miou, 1.0);
    EXPECT_DOUBLE_EQ(m.acc, 1.0);
}

TEST(SegMetrics, HandComputedConfusion) {
    // gt: half class 0, half class 1; prediction: everything class 0.
    ImageBuffer gt(4, 2, 1);
    for (int x = 0; x < 4; ++x) gt.at(x, 1, 0) = 1.0;
    const ImageBuffer pred(4, 2, 1, 0.0);
    const SegMetrics m = seg_metrics(pred, gt, 2);
    EXPECT_DOUBLE_EQ(m.acc, 0.5);
    EXPECT_DOUBLE_EQ(m.per_class_iou[0], 0.5); // TP 4, FP 4, FN 0
    EXPECT_DOUBLE_EQ(m.per_class_iou[1], 0.0); // TP 0, FN 4
    EXPECT_DOUBLE_EQ(m.miou, 0.25);
}

TEST(SegMetrics, MatchesCountingOracle) {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const int classes = 3;
        ImageBuffer gt(9, 9, 1), pred(9, 9, 1);
        for (auto& v : gt.data) v = static_cast<double>(rng.uniform_index(classes));
        for (auto& v : pred.data) v = static_cast<double>(rng.uniform_index(classes + 1)); // may emit void

        std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
        std::size_t correct = 0, valid = 0;
        for (std::size_t i = 0; i < gt.data.size(); ++i) {
            const int g = static_cast<int>(gt.data[i]);
            const int p = static_cast<int>(pred.data[i]);
            ++valid;
            if (p == g) {
                ++correct;
                ++tp[static_cast<std::size_t>(g)];
            } else {
                ++fn[static_cast<std::size_t>(g)];
                if (p < classes) ++fp[static_cast<std::size_t>(p)];
            }
        }
        double iou_sum = 0.0;
        int present = 0;
        for (int c = 0; c < classes; ++c)
            if (tp[static_cast<std::size_t>(c)] + fn[static_cast<std::size_t>(c)] > 0) {
                iou_sum += static_cast<double>(tp[static_cast<std::size_t>(c)]) /
                           static_cast<double>(tp[static_cast<std::size_t>(c)] + fp[static_cast<std::size_t>(c)] +
                                               fn[static_cast<std::size_t>(c)]);
                ++present;
            }

        const SegMetrics m = seg_metrics(pred, gt, classes);
        EXPECT_DOUBLE_EQ(m.acc, static_cast<double>(correct) / static_cast<double>(valid));
        EXPECT_DOUBLE_EQ(m.miou, iou_sum / present);
    }
}

TEST(SegMetrics, InvariantUnderConsistentClassPermutation) {
    Rng rng(29);
    const int classes = 4;
    ImageBuffer gt(10, 10, 1), pred(10, 10, 1);
    for (auto& v : gt.data) v = static_cast<double>(rng.uniform_index(classes));
    for (auto& v : pred.data) v = static_cast<double>(rng.uniform_index(classes));
    const SegMetrics base = seg_metrics(pred, gt, classes);

    const int perm[classes] = {2, 0, 3, 1};
    ImageBuffer gt_p = gt, pred_p = pred;
    for (auto& v : gt_p.data) v = perm[static_cast<int>(v)];
    for (auto& v : pred_p.data) v = perm[static_cast<int>(v)];
    const SegMetrics permuted = seg_metrics(pred_p, gt_p, classes);
    EXPECT_DOUBLE_EQ(permuted.acc, base.acc);
    EXPECT_DOUBLE_EQ(permuted.miou, base.miou);
}

TEST(SegMetrics, GtVoidExcluded) {
    ImageBuffer gt(2, 1, 1);
    gt.at(0, 0, 0) = 0.0;
    gt.at(1, 0, 0) = 2.0; // void for num_classes = 2
    ImageBuffer pred(2, 1, 1, 0.0);
    const SegMetrics m = seg_metrics(pred, gt, 2);
    EXPECT_DOUBLE_EQ(m.acc, 1.0);
    EXPECT_DOUBLE_EQ(m.miou, 1.0);
}

TEST(Metrics, RangesOnRandomInputs) {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        ImageBuffer a = fixtures::random_buffer(rng, 16, 16, 3);
        ImageBuffer b = fixtures::random_buffer(rng, 16, 16, 3);
        for (auto& v : a.data) v = std::clamp(0.5 + 0.3 * v, 0.0, 1.0);
        for (auto& v : b.data) v = std::clamp(0.5 + 0.3 * v, 0.0, 1.0);
        EXPECT_GE(psnr(a, b), 0.0);
        const double s = ssim(a, b);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);

        ImageBuffer depth_a(8, 8, 1), depth_b(8, 8, 1);
        for (auto& v : depth_a.data) v = rng.uniform(0.2, 6.0);
        for (auto& v : depth_b.data) v = rng.uniform(0.2, 6.0);
        const auto [rel, tau] = depth_metrics(depth_a, depth_b);
        EXPECT_GE(rel, 0.0);
        EXPECT_GE(tau, 0.0);
        EXPECT_LE(tau, 100.0);
    }
}
