// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semsplat/core/pointmap.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/gaussian.hpp"
#include "semsplat/grad.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/semantic.hpp"

namespace semsplat {

struct AdamState {
    std::size_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m;
    std::vector<double> v;

    static AdamState init(std::size_t param_count, double lr) {
        AdamState s;
        s.lr = lr;
        s.m.assign(param_count, 0.0);
        s.v.assign(param_count, 0.0);
        return s;
    }
};

/// Standard bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter layout mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

struct FitConfig {
    int iterations = 100;
    double lr = 0.01;
    LossWeights weights;
    PerceptualHook perceptual_hook; // optional; absent contributes nothing
    bool train_geometry = true;     // centers, opacity_raw, color, scale_raw, rotation_raw
    bool train_semantics = true;    // sem_feature
    bool train_codec = true;
    std::uint64_t seed = 0;
    int threads = 1;
};

inline void validate_fit_config(const FitConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("fit: iterations must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("fit: learning rate must be positive");
    validate_weights(cfg.weights);
}

struct FitView {
    Camera camera;
    ImageBuffer target;           // 3 channels
    ImageBuffer teacher;          // d channels (decoded feature space)
    ReferencePointMap reference;  // dense points + confidence
};

struct IterationLosses {
    double l_rgb = 0.0;
    double l_sem = 0.0;
    double l_geo = 0.0;
    double l_total = 0.0;
};

struct FitResult {
    GaussianScene scene;
    FeatureCodec codec;
    std::vector<IterationLosses> trace;
};

namespace detail {

// Flat parameter layout for the optimizer. Section order: centers,
// opacity_raw, colors, scale_raw, rotation_raw, sem_feature, codec.
struct ParamLayout {
    std::size_t n = 0;
    int sem_dim = 0;
    int compressed_dim = 0;
    std::size_t color_begin = 0;
    std::size_t color_end = 0;
    std::size_t geometry_end = 0;
    std::size_t semantic_end = 0;
    std::size_t total = 0;

    static ParamLayout of(const GaussianScene& scene) {
        ParamLayout l;
        l.n = scene.primitives.size();
        l.sem_dim = scene.sem_dim;
        l.compressed_dim = scene.compressed_dim;
        l.color_begin = l.n * 4;
        l.color_end = l.n * 7;
        l.geometry_end = l.n * (3 + 1 + 3 + 3 + 4);
        l.semantic_end = l.geometry_end + l.n * static_cast<std::size_t>(l.sem_dim);
        const std::size_t codec = static_cast<std::size_t>(l.compressed_dim) * l.sem_dim + l.compressed_dim +
                                  static_cast<std::size_t>(l.sem_dim) * l.compressed_dim + l.sem_dim;
        l.total = l.semantic_end + codec;
        return l;
    }
};

inline std::vector<double> pack_parameters(const GaussianScene& scene, const FeatureCodec& codec,
                                           const ParamLayout& l) {
    std::vector<double> p(l.total);
    std::size_t k = 0;
    for (const auto& prim : scene.primitives)
        for (int i = 0; i < 3; ++i) p[k++] = prim.center[i];
    for (const auto& prim : scene.primitives) p[k++] = prim.opacity_raw;
    for (const auto& prim : scene.primitives)
        for (int i = 0; i < 3; ++i) p[k++] = prim.color[i];
    for (const auto& prim : scene.primitives)
        for (int i = 0; i < 3; ++i) p[k++] = prim.scale_raw[i];
    for (const auto& prim : scene.primitives)
        for (int i = 0; i < 4; ++i) p[k++] = prim.rotation_raw[i];
    for (const auto& prim : scene.primitives)
        for (int i = 0; i < l.sem_dim; ++i) p[k++] = prim.sem_feature[i];
    for (int r = 0; r < l.compressed_dim; ++r)
        for (int c = 0; c < l.sem_dim; ++c) p[k++] = codec.enc_weight(r, c);
    for (int r = 0; r < l.compressed_dim; ++r) p[k++] = codec.enc_bias[r];
    for (int r = 0; r < l.sem_dim; ++r)
        for (int c = 0; c < l.compressed_dim; ++c) p[k++] = codec.dec_weight(r, c);
    for (int r = 0; r < l.sem_dim; ++r) p[k++] = codec.dec_bias[r];
    return p;
}

inline void unpack_parameters(const std::vector<double>& p, const ParamLayout& l, GaussianScene* scene,
                              FeatureCodec* codec) {
    std::size_t k = 0;
    for (auto& prim : scene->primitives)
        for (int i = 0; i < 3; ++i) prim.center[i] = p[k++];
    for (auto& prim : scene->primitives) prim.opacity_raw = p[k++];
    for (auto& prim : scene->primitives)
        for (int i = 0; i < 3; ++i) prim.color[i] = p[k++];
    for (auto& prim : scene->primitives)
        for (int i = 0; i < 3; ++i) prim.scale_raw[i] = p[k++];
    for (auto& prim : scene->primitives)
        for (int i = 0; i < 4; ++i) prim.rotation_raw[i] = p[k++];
    for (auto& prim : scene->primitives)
        for (int i = 0; i < l.sem_dim; ++i) prim.sem_feature[i] = p[k++];
    for (int r = 0; r < l.compressed_dim; ++r)
        for (int c = 0; c < l.sem_dim; ++c) codec->enc_weight(r, c) = p[k++];
    for (int r = 0; r < l.compressed_dim; ++r) codec->enc_bias[r] = p[k++];
    for (int r = 0; r < l.sem_dim; ++r)
        for (int c = 0; c < l.compressed_dim; ++c) codec->dec_weight(r, c) = p[k++];
    for (int r = 0; r < l.sem_dim; ++r) codec->dec_bias[r] = p[k++];
    refresh_activations(*scene);
}

inline std::vector<double> pack_gradients(const GradientBundle& bundle, const CodecGrads& dec_grads,
                                          double lambda_sem, const ParamLayout& l) {
    std::vector<double> g(l.total);
    std::size_t k = 0;
    for (const auto& v : bundle.center)
        for (int i = 0; i < 3; ++i) g[k++] = v[i];
    for (double v : bundle.opacity_raw) g[k++] = v;
    for (const auto& v : bundle.color)
        for (int i = 0; i < 3; ++i) g[k++] = v[i];
    for (const auto& v : bundle.scale_raw)
        for (int i = 0; i < 3; ++i) g[k++] = v[i];
    for (const auto& v : bundle.rotation_raw)
        for (int i = 0; i < 4; ++i) g[k++] = v[i];
    for (const auto& v : bundle.sem_feature)
        for (int i = 0; i < l.sem_dim; ++i) g[k++] = v[i];
    for (int r = 0; r < l.compressed_dim; ++r)
        for (int c = 0; c < l.sem_dim; ++c) g[k++] = bundle.codec.enc_weight(r, c);
    for (int r = 0; r < l.compressed_dim; ++r) g[k++] = bundle.codec.enc_bias[r];
    for (int r = 0; r < l.sem_dim; ++r)
        for (int c = 0; c < l.compressed_dim; ++c) g[k++] = lambda_sem * dec_grads.dec_weight(r, c);
    for (int r = 0; r < l.sem_dim; ++r) g[k++] = lambda_sem * dec_grads.dec_bias[r];
    return g;
}

} // namespace detail

/// Per-scene fitting: render -> losses -> analytic backward -> Adam on the
/// raw latents, with the codec chained in on both sides of the rendered
/// feature map. The scene's stored median depth is held constant. Loss
/// values are recorded before each step. Colors are projected back into
/// [0, 1] after every update.
inline FitResult fit_scene(const GaussianScene& init, const FeatureCodec& init_codec,
                           const std::vector<FitView>& views, const FitConfig& cfg) {
    validate_fit_config(cfg);
    if (views.empty()) throw std::invalid_argument("fit: need at least one view");
    require_codec_matches(init_codec, init.sem_dim, init.compressed_dim, "fit");

    FitResult result;
    result.scene = init;
    result.codec = init_codec;

    const detail::ParamLayout layout = detail::ParamLayout::of(init);
    std::vector<double> params = detail::pack_parameters(result.scene, result.codec, layout);
    AdamState adam = AdamState::init(layout.total, cfg.lr);
    const RenderOptions ropts{cfg.threads};

    const auto require_finite = [](double v, const char* name, int iter) {
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite loss: " + std::string(name) + " at iteration " +
                                     std::to_string(iter));
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const GaussianScene encoded = encode_features(result.scene, result.codec);

        std::vector<ImageBuffer> rendered_color, decoded;
        std::vector<RenderOutput> outputs;
        std::vector<ImageBuffer> targets, teachers;
        std::vector<PredictedPointMap> pred_points;
        std::vector<ReferencePointMap> references;
        outputs.reserve(views.size());
        for (const auto& view : views) {
            outputs.push_back(render(encoded, view.camera, ropts));
            rendered_color.push_back(outputs.back().color);
            decoded.push_back(decode_features(outputs.back().features, result.codec));
            targets.push_back(view.target);
            teachers.push_back(view.teacher);
            pred_points.push_back(unproject_depth(outputs.back().depth, view.camera));
            references.push_back(view.reference);
        }

        std::vector<ImageBuffer> grad_color, grad_decoded;
        std::vector<std::vector<Eigen::Vector3d>> grad_points;
        const LossBreakdown rgb = loss_rgb(rendered_color, targets, cfg.weights, cfg.perceptual_hook, &grad_color);
        const LossBreakdown sem = loss_sem(decoded, teachers, &grad_decoded);
        const LossBreakdown geo = loss_geo(pred_points, references, cfg.weights, &grad_points);

        IterationLosses losses;
        losses.l_rgb = rgb.total;
        losses.l_sem = sem.total;
        losses.l_geo = geo.total;
        losses.l_total = loss_total(rgb.total, sem.total, geo.total, cfg.weights);
        require_finite(losses.l_rgb, "l_rgb", iter);
        require_finite(losses.l_sem, "l_sem", iter);
        require_finite(losses.l_geo, "l_geo", iter);
        result.trace.push_back(losses);

        GradientBundle bundle = GradientBundle::zeros(encoded);
        CodecGrads dec_grads = CodecGrads::zeros(init.sem_dim, init.compressed_dim);
        for (std::size_t v = 0; v < views.size(); ++v) {
            RenderUpstream upstream;
            upstream.color = grad_color[v];
            ImageBuffer grad_feat = decode_backward(outputs[v].features, result.codec, grad_decoded[v], &dec_grads);
            for (auto& x : grad_feat.data) x *= cfg.weights.lambda_sem;
            upstream.features = std::move(grad_feat);
            ImageBuffer grad_depth =
                unproject_depth_backward(grad_points[v], views[v].camera.width, views[v].camera.height,
                                         views[v].camera);
            for (auto& x : grad_depth.data) x *= cfg.weights.lambda_geo;
            upstream.depth = std::move(grad_depth);
            bundle.axpy(1.0, render_backward(encoded, views[v].camera, upstream, ropts));
        }
        encode_backward(result.scene, result.codec, bundle.sem_compressed, &bundle.sem_feature, &bundle.codec);
        if (!bundle.all_finite())
            throw std::runtime_error("non-finite loss: gradient bundle at iteration " + std::to_string(iter));

        std::vector<double> grads = detail::pack_gradients(bundle, dec_grads, cfg.weights.lambda_sem, layout);
        if (!cfg.train_geometry) std::fill(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(layout.geometry_end), 0.0);
        if (!cfg.train_semantics)
            std::fill(grads.begin() + static_cast<std::ptrdiff_t>(layout.geometry_end),
                      grads.begin() + static_cast<std::ptrdiff_t>(layout.semantic_end), 0.0);
        if (!cfg.train_codec) std::fill(grads.begin() + static_cast<std::ptrdiff_t>(layout.semantic_end), grads.end(), 0.0);

        adam_step(adam, params, grads);
        for (std::size_t i = layout.color_begin; i < layout.color_end; ++i)
            params[i] = std::clamp(params[i], 0.0, 1.0);
        detail::unpack_parameters(params, layout, &result.scene, &result.codec);
    }
    return result;
}

} // namespace semsplat
