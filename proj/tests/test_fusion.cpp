// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "semsplat/fusion.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace semsplat;

namespace {

TokenSet random_tokens(Rng& rng, int views, int tokens_per_view, int dim) {
    TokenSet set;
    set.tokens_per_view = tokens_per_view;
    set.dim = dim;
    for (int v = 0; v < views; ++v) {
        fusion::Mat m(tokens_per_view, dim);
        for (auto& x : m.v) x = rng.normal();
        set.views.push_back(std::move(m));
    }
    return set;
}

bool mats_equal(const fusion::Mat& a, const fusion::Mat& b) { return a.v == b.v; }

} // namespace

TEST(IntrinsicEmbed, NormalizedIntrinsicsThroughIdentity) {
    Camera cam = fixtures::identity_camera(64, 32);
    cam.fx = 64.0; // fx / width = 1
    cam.fy = 20.0;
    cam.cx = 32.0; // cx / width = 0.5
    cam.cy = 7.0;
    fusion::Mat proj(4, 4);
    for (int i = 0; i < 4; ++i) proj.at(i, i) = 1.0;
    const ImageBuffer emb = intrinsic_embed(cam, 64, 32, proj);
    ASSERT_EQ(emb.channels, 4);
    for (int y = 0; y < 32; y += 7)
        for (int x = 0; x < 64; x += 13) {
            EXPECT_DOUBLE_EQ(emb.at(x, y, 0), 1.0);
            EXPECT_DOUBLE_EQ(emb.at(x, y, 2), 0.5);
        }
}

TEST(IntrinsicEmbed, ZeroProjectionGivesZeroChannels) {
    const Camera cam = fixtures::identity_camera(16, 16);
    const fusion::Mat proj(3, 4);
    const ImageBuffer emb = intrinsic_embed(cam, 16, 16, proj);
    for (double v : emb.data) EXPECT_EQ(v, 0.0);
}

TEST(IntrinsicEmbed, OnlyFxDrivenComponentsChange) {
    Rng rng(3);
    fusion::Mat proj(4, 4);
    for (auto& v : proj.v) v = rng.normal();
    Camera a = fixtures::identity_camera(32, 32);
    Camera b = a;
    b.fx = a.fx * 1.5;
    const ImageBuffer ea = intrinsic_embed(a, 32, 32, proj);
    const ImageBuffer eb = intrinsic_embed(b, 32, 32, proj);
    const double delta_fx = (b.fx - a.fx) / 32.0;
    for (int c = 0; c < 4; ++c)
        EXPECT_NEAR(eb.at(0, 0, c) - ea.at(0, 0, c), proj.at(c, 0) * delta_fx, 1e-12);
}

TEST(Tokenize, ConstantImageGivesIdenticalTokens) {
    Rng rng(5);
    const ImageBuffer img(8, 8, 2, 0.37);
    fusion::Mat proj(6, 2 * 2 * 2);
    for (auto& v : proj.v) v = rng.normal();
    const fusion::Mat tokens = tokenize(img, 2, proj);
    ASSERT_EQ(tokens.rows, 16);
    for (int r = 1; r < tokens.rows; ++r)
        for (int c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(tokens.at(r, c), tokens.at(0, c));
}

TEST(Tokenize, SingleNonzeroPatchYieldsSingleDistinctToken) {
    Rng rng(7);
    ImageBuffer img(8, 8, 1);
    img.at(5, 5, 0) = 1.0; // patch (1,1) in a 2x2 grid of 4px patches
    fusion::Mat proj(3, 16);
    for (auto& v : proj.v) v = rng.normal();
    const fusion::Mat tokens = tokenize(img, 4, proj);
    ASSERT_EQ(tokens.rows, 4);
    int distinct = 0;
    for (int r = 0; r < 4; ++r) {
        bool nonzero = false;
        for (int c = 0; c < 3; ++c) nonzero |= tokens.at(r, c) != 0.0;
        distinct += nonzero;
    }
    EXPECT_EQ(distinct, 1);
}

TEST(Tokenize, MatchesNaiveProjectionOracle) {
    Rng rng(11);
    const ImageBuffer img = fixtures::random_buffer(rng, 8, 4, 3);
    const int patch = 2;
    fusion::Mat proj(5, patch * patch * 3);
    for (auto& v : proj.v) v = rng.normal();
    const fusion::Mat tokens = tokenize(img, patch, proj);

    // Independent flattening and projection.
    const int px_count = img.width / patch;
    for (int py = 0; py < img.height / patch; ++py)
        for (int px = 0; px < px_count; ++px) {
            std::vector<double> flat;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx)
                    for (int c = 0; c < 3; ++c) flat.push_back(img.at(px * patch + dx, py * patch + dy, c));
            for (int r = 0; r < 5; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < flat.size(); ++k) acc += proj.at(r, static_cast<int>(k)) * flat[k];
                EXPECT_EQ(tokens.at(py * px_count + px, r), acc);
            }
        }
}

TEST(Fuse, SingleViewMatchesSelfAttentionStackBitExact) {
    Rng rng(13);
    FusionConfig cfg;
    cfg.layers = 4;
    cfg.d_t = 16;
    cfg.heads = 4;
    const FusionParams params = FusionParams::seeded(cfg, 99);
    const TokenSet tokens = random_tokens(rng, 1, 9, cfg.d_t);
    const TokenSet fused = fuse(tokens, cfg, params);
    const fusion::Mat reference = oracles::self_attention_stack_reference(tokens.views[0], cfg, params);
    EXPECT_TRUE(mats_equal(fused.views[0], reference));
}

TEST(Fuse, ViewPermutationEquivariantBitExact) {
    Rng rng(17);
    FusionConfig cfg;
    cfg.layers = 2;
    cfg.d_t = 16;
    cfg.heads = 2;
    const FusionParams params = FusionParams::seeded(cfg, 7);
    for (int views = 2; views <= 4; ++views) {
        const TokenSet tokens = random_tokens(rng, views, 6, cfg.d_t);
        const TokenSet fused = fuse(tokens, cfg, params);

        std::vector<int> perm(static_cast<std::size_t>(views));
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

        TokenSet permuted = tokens;
        for (int v = 0; v < views; ++v) permuted.views[static_cast<std::size_t>(v)] =
            tokens.views[static_cast<std::size_t>(perm[static_cast<std::size_t>(v)])];
        const TokenSet fused_permuted = fuse(permuted, cfg, params);
        for (int v = 0; v < views; ++v)
            EXPECT_TRUE(mats_equal(fused_permuted.views[static_cast<std::size_t>(v)],
                                   fused.views[static_cast<std::size_t>(perm[static_cast<std::size_t>(v)])]))
                << "views=" << views << " slot=" << v;
    }
}

TEST(Fuse, IntraFrameLayerIsolatesViews) {
    Rng rng(19);
    FusionConfig cfg;
    cfg.layers = 1; // single intra layer
    cfg.d_t = 12;
    cfg.heads = 3;
    const FusionParams params = FusionParams::seeded(cfg, 21);
    TokenSet tokens = random_tokens(rng, 2, 5, cfg.d_t);
    const TokenSet base = fuse(tokens, cfg, params);

    TokenSet perturbed = tokens;
    for (auto& v : perturbed.views[1].v) v += rng.normal();
    const TokenSet out = fuse(perturbed, cfg, params);
    EXPECT_TRUE(mats_equal(out.views[0], base.views[0]));
    EXPECT_FALSE(mats_equal(out.views[1], base.views[1]));
}

TEST(Fuse, CrossFrameLayerPropagatesAcrossViews) {
    Rng rng(23);
    FusionConfig cfg;
    cfg.layers = 2; // intra then cross
    cfg.d_t = 12;
    cfg.heads = 3;
    const FusionParams params = FusionParams::seeded(cfg, 22);
    TokenSet tokens = random_tokens(rng, 2, 5, cfg.d_t);
    const TokenSet base = fuse(tokens, cfg, params);

    TokenSet perturbed = tokens;
    for (auto& v : perturbed.views[1].v) v += 0.5 * rng.normal();
    const TokenSet out = fuse(perturbed, cfg, params);
    EXPECT_FALSE(mats_equal(out.views[0], base.views[0]));
}

TEST(Fuse, AttentionRowsSumToOneEveryLayer) {
    Rng rng(29);
    FusionConfig cfg;
    cfg.layers = 3;
    cfg.d_t = 16;
    cfg.heads = 4;
    const FusionParams params = FusionParams::seeded(cfg, 31);
    const TokenSet tokens = random_tokens(rng, 3, 7, cfg.d_t);
    FuseTrace trace;
    fuse(tokens, cfg, params, &trace);
    ASSERT_EQ(trace.row_sums.size(), 3u);
    for (const auto& layer : trace.row_sums) {
        ASSERT_FALSE(layer.empty());
        for (double sum : layer) EXPECT_NEAR(sum, 1.0, 1e-10);
    }
}

TEST(Fuse, ShapePreservedThroughAnyLayerCount) {
    Rng rng(31);
    for (int layers : {1, 2, 5}) {
        FusionConfig cfg;
        cfg.layers = layers;
        cfg.d_t = 8;
        cfg.heads = 2;
        const FusionParams params = FusionParams::seeded(cfg, 17);
        const TokenSet tokens = random_tokens(rng, 2, 4, cfg.d_t);
        const TokenSet out = fuse(tokens, cfg, params);
        ASSERT_EQ(out.views.size(), 2u);
        for (const auto& v : out.views) {
            EXPECT_EQ(v.rows, 4);
            EXPECT_EQ(v.cols, 8);
        }
    }
}

TEST(Fuse, ConfigValidation) {
    FusionConfig bad;
    bad.layers = 0;
    EXPECT_THROW(validate_fusion_config(bad), std::invalid_argument);
    bad.layers = 1;
    bad.d_t = 10;
    bad.heads = 3; // not divisible
    EXPECT_THROW(validate_fusion_config(bad), std::invalid_argument);
}

TEST(EncodeViews, EndToEndShapes) {
    Rng rng(37);
    FusionConfig cfg;
    cfg.layers = 2;
    cfg.d_t = 16;
    cfg.heads = 4;
    cfg.patch = 4;
    const int res = 16;
    const int patches = (res / cfg.patch) * (res / cfg.patch);
    const FusionParams params = FusionParams::seeded(cfg, 5, 3, patches);

    std::vector<ImageBuffer> images;
    std::vector<Camera> cameras;
    for (int v = 0; v < 2; ++v) {
        images.push_back(fixtures::random_buffer(rng, res, res, 3));
        cameras.push_back(fixtures::identity_camera(res, res));
    }
    const TokenSet tokens = encode_views(images, cameras, cfg, params);
    EXPECT_EQ(tokens.views.size(), 2u);
    EXPECT_EQ(tokens.tokens_per_view, patches + 1);
    const TokenSet fused = fuse(tokens, cfg, params);
    EXPECT_EQ(fused.views[0].rows, patches + 1);
}
