// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "semsplat/optim.hpp"
#include "semsplat/synth.hpp"
#include "support/oracles.hpp"

using namespace semsplat;

namespace {

SynthSpec small_spec() {
    SynthSpec spec;
    spec.gaussians = 5;
    spec.views = 2;
    spec.classes = 2;
    spec.sem_dim = 8;
    spec.compressed_dim = 4;
    return spec;
}

std::vector<FitView> views_of(const Bundle& bundle) {
    std::vector<FitView> views;
    for (const auto& view : bundle.views) {
        FitView fv;
        fv.camera = view.camera;
        fv.target = view.color;
        fv.teacher = view.teacher;
        fv.reference = reference_from_view(view);
        views.push_back(std::move(fv));
    }
    return views;
}

bool scenes_bit_equal(const GaussianScene& a, const GaussianScene& b) {
    if (a.primitives.size() != b.primitives.size()) return false;
    for (std::size_t i = 0; i < a.primitives.size(); ++i) {
        const auto& pa = a.primitives[i];
        const auto& pb = b.primitives[i];
        if (!(pa.center == pb.center && pa.opacity_raw == pb.opacity_raw && pa.color == pb.color &&
              pa.scale_raw == pb.scale_raw && pa.rotation_raw == pb.rotation_raw &&
              pa.sem_feature == pb.sem_feature))
            return false;
    }
    return true;
}

} // namespace

TEST(AdamStep, ZeroGradientLeavesParametersUnchanged) {
    AdamState state = AdamState::init(3, 0.1);
    std::vector<double> params = {1.0, -2.0, 0.5};
    const std::vector<double> before = params;
    adam_step(state, params, {0.0, 0.0, 0.0});
    EXPECT_EQ(params, before);
}

TEST(AdamStep, FirstStepApproximatesSignedLearningRate) {
    AdamState state = AdamState::init(2, 0.1);
    std::vector<double> params = {0.0, 0.0};
    adam_step(state, params, {3.0, -0.25});
    EXPECT_NEAR(params[0], -0.1, 1e-7);
    EXPECT_NEAR(params[1], 0.1, 1e-6);
}

TEST(AdamStep, QuadraticConvergesAndMatchesScalarOracle) {
    AdamState state = AdamState::init(1, 0.1);
    std::vector<double> params = {1.0};
    for (int t = 0; t < 100; ++t) adam_step(state, params, {2.0 * params[0]});
    EXPECT_LT(std::abs(params[0]), 0.05);

    const double oracle = oracles::adam_scalar_reference(1.0, 0.1, 100, [](double x) { return 2.0 * x; });
    EXPECT_NEAR(params[0], oracle, 1e-12);
}

TEST(AdamStep, LayoutMismatchRejected) {
    AdamState state = AdamState::init(2, 0.1);
    std::vector<double> params = {0.0};
    EXPECT_THROW(adam_step(state, params, {1.0}), std::invalid_argument);
}

TEST(FitScene, ZeroIterationsDisallowed) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 3);
    FitConfig cfg;
    cfg.iterations = 0;
    EXPECT_THROW(fit_scene(bundle.scene, bundle.codec, views_of(bundle), cfg), std::invalid_argument);
}

TEST(FitScene, OneIterationMovesParametersWhenGradientsNonzero) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 5);
    Rng rng(5);
    const GaussianScene init = perturb_scene(bundle.scene, 1.0, rng);
    FitConfig cfg;
    cfg.iterations = 1;
    const FitResult result = fit_scene(init, bundle.codec, views_of(bundle), cfg);
    EXPECT_FALSE(scenes_bit_equal(result.scene, init));
    EXPECT_GT(result.trace[0].l_rgb, 0.0);
}

TEST(FitScene, FixedPointExactWithZeroSideWeights) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 7);
    FitConfig cfg;
    cfg.iterations = 5;
    cfg.weights.lambda_sem = 0.0;
    cfg.weights.lambda_geo = 0.0;
    const FitResult result = fit_scene(bundle.scene, bundle.codec, views_of(bundle), cfg);
    for (const auto& t : result.trace) {
        EXPECT_EQ(t.l_rgb, 0.0);
        EXPECT_EQ(t.l_total, 0.0);
    }
    EXPECT_TRUE(scenes_bit_equal(result.scene, bundle.scene));
}

TEST(FitScene, FixedPointNearZeroWithDefaultWeights) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 9);
    FitConfig cfg;
    cfg.iterations = 5;
    const FitResult result = fit_scene(bundle.scene, bundle.codec, views_of(bundle), cfg);
    for (const auto& t : result.trace) {
        EXPECT_LE(std::abs(t.l_rgb), 1e-9);
        EXPECT_LE(std::abs(t.l_sem), 1e-9);
        EXPECT_LE(std::abs(t.l_geo), 1e-9);
        EXPECT_LE(std::abs(t.l_total), 1e-9);
    }
    // All gradients vanish at the fixed point, so Adam never moves.
    EXPECT_TRUE(scenes_bit_equal(result.scene, bundle.scene));
}

TEST(FitScene, ZeroSideWeightsNeverTouchSemanticsOrCodec) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 11);
    Rng rng(11);
    const GaussianScene init = perturb_scene(bundle.scene, 1.0, rng);
    FitConfig cfg;
    cfg.iterations = 8;
    cfg.weights.lambda_sem = 0.0;
    cfg.weights.lambda_geo = 0.0;
    const FitResult result = fit_scene(init, bundle.codec, views_of(bundle), cfg);
    for (std::size_t i = 0; i < init.primitives.size(); ++i)
        EXPECT_TRUE(result.scene.primitives[i].sem_feature == init.primitives[i].sem_feature);
    EXPECT_TRUE(result.codec.enc_weight == bundle.codec.enc_weight);
    EXPECT_TRUE(result.codec.enc_bias == bundle.codec.enc_bias);
    EXPECT_TRUE(result.codec.dec_weight == bundle.codec.dec_weight);
    EXPECT_TRUE(result.codec.dec_bias == bundle.codec.dec_bias);
    // Geometry did move.
    EXPECT_FALSE(scenes_bit_equal(result.scene, init));
}

TEST(FitScene, FrozenGroupsStayFrozen) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 13);
    Rng rng(13);
    const GaussianScene init = perturb_scene(bundle.scene, 1.0, rng);
    FitConfig cfg;
    cfg.iterations = 4;
    cfg.train_geometry = false;
    const FitResult result = fit_scene(init, bundle.codec, views_of(bundle), cfg);
    for (std::size_t i = 0; i < init.primitives.size(); ++i) {
        EXPECT_TRUE(result.scene.primitives[i].center == init.primitives[i].center);
        EXPECT_EQ(result.scene.primitives[i].opacity_raw, init.primitives[i].opacity_raw);
        EXPECT_TRUE(result.scene.primitives[i].scale_raw == init.primitives[i].scale_raw);
    }
}

TEST(FitScene, DeterministicAcrossRunsAndThreadCounts) {
    const Bundle bundle = synthesize_bundle(small_spec(), 16, 17);
    Rng rng1(17), rng2(17);
    const GaussianScene init1 = perturb_scene(bundle.scene, 1.0, rng1);
    const GaussianScene init2 = perturb_scene(bundle.scene, 1.0, rng2);
    EXPECT_TRUE(scenes_bit_equal(init1, init2));

    FitConfig cfg;
    cfg.iterations = 6;
    cfg.threads = 1;
    const FitResult a = fit_scene(init1, bundle.codec, views_of(bundle), cfg);
    const FitResult b = fit_scene(init2, bundle.codec, views_of(bundle), cfg);
    FitConfig cfg4 = cfg;
    cfg4.threads = 4;
    const FitResult c = fit_scene(init1, bundle.codec, views_of(bundle), cfg4);

    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        EXPECT_EQ(a.trace[i].l_total, b.trace[i].l_total);
        EXPECT_EQ(a.trace[i].l_total, c.trace[i].l_total);
    }
    EXPECT_TRUE(scenes_bit_equal(a.scene, b.scene));
    EXPECT_TRUE(scenes_bit_equal(a.scene, c.scene));
}

TEST(FitScene, LossDecreasesOnPerturbedScene) {
    const Bundle bundle = synthesize_bundle(small_spec(), 24, 19);
    Rng rng(19);
    const GaussianScene init = perturb_scene(bundle.scene, 0.8, rng);
    FitConfig cfg;
    cfg.iterations = 60;
    cfg.lr = 0.02;
    const FitResult result = fit_scene(init, bundle.codec, views_of(bundle), cfg);
    EXPECT_LT(result.trace.back().l_rgb, 0.5 * result.trace.front().l_rgb);
}
