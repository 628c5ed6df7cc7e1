// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semsplat/core/camera.hpp"
#include "semsplat/core/image.hpp"
#include "semsplat/core/pointmap.hpp"
#include "semsplat/core/rng.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/gaussian.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/semantic.hpp"

namespace semsplat {

/// Synthetic-scene recipe. The default produces a cluster of class-tagged
/// blobs in front of an arc of cameras, plus a large backdrop Gaussian so
/// every pixel carries content (full alpha coverage).
struct SynthSpec {
    int gaussians = 10;
    int views = 3;
    int classes = 4;
    int sem_dim = 64;
    int compressed_dim = 16;
    bool backdrop = true;
    double spread = 0.8; // half-extent of the cluster box, world units
};

/// One view of a ground-truth fixture: all per-pixel products a training or
/// evaluation run needs.
struct BundleView {
    Camera camera;
    ImageBuffer color;      // 3 ch
    ImageBuffer teacher;    // d ch, decoded rendered features
    ImageBuffer depth;      // 1 ch
    ImageBuffer alpha;      // 1 ch
    ImageBuffer confidence; // 1 ch
    ImageBuffer points;     // 3 ch, per-pixel world points
    ImageBuffer labels;     // 1 ch, class indices (classes == void)
};

struct Bundle {
    GaussianScene scene; // sem_compressed populated
    FeatureCodec codec;
    PrototypeSet prototypes;
    std::uint64_t seed = 0;
    int resolution = 0;
    std::vector<BundleView> views;
};

inline ReferencePointMap reference_from_view(const BundleView& view) {
    ReferencePointMap ref;
    ref.width = view.points.width;
    ref.height = view.points.height;
    ref.points.resize(view.points.pixel_count());
    ref.confidence.resize(view.points.pixel_count());
    for (int y = 0; y < ref.height; ++y)
        for (int x = 0; x < ref.width; ++x) {
            const double* p = view.points.pixel(x, y);
            ref.points[static_cast<std::size_t>(y) * ref.width + x] = Eigen::Vector3d(p[0], p[1], p[2]);
            ref.confidence[static_cast<std::size_t>(y) * ref.width + x] = view.confidence.at(x, y, 0);
        }
    return ref;
}

inline ImageBuffer points_to_buffer(const PredictedPointMap& pm) {
    ImageBuffer buf(pm.width, pm.height, 3);
    for (int y = 0; y < pm.height; ++y)
        for (int x = 0; x < pm.width; ++x) {
            double* p = buf.pixel(x, y);
            const Eigen::Vector3d& v = pm.points[static_cast<std::size_t>(y) * pm.width + x];
            p[0] = v[0];
            p[1] = v[1];
            p[2] = v[2];
        }
    return buf;
}

/// Seeded orthonormal prototype rows (Gram-Schmidt on random vectors).
inline PrototypeSet make_prototypes(int classes, int dim, Rng& rng) {
    if (classes < 1 || classes > dim) throw std::invalid_argument("make_prototypes: need 1 <= classes <= dim");
    Eigen::MatrixXd rows(classes, dim);
    for (int c = 0; c < classes; ++c) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = rng.normal();
        for (int prev = 0; prev < c; ++prev) v -= rows.row(prev).dot(v) * rows.row(prev).transpose();
        rows.row(c) = v.normalized();
    }
    PrototypeSet protos;
    protos.prototypes = rows;
    for (int c = 0; c < classes; ++c) protos.labels.push_back("class_" + std::to_string(c));
    return protos;
}

/// Codec whose encoder rows span the prototypes (extended to d_c rows by an
/// orthonormal completion) with the decoder as the transpose, so prototype
/// features survive an encode/decode round trip exactly.
inline FeatureCodec make_synth_codec(const PrototypeSet& protos, int compressed_dim, Rng& rng) {
    const int d = protos.dim();
    const int nc = protos.num_classes();
    if (compressed_dim < nc) throw std::invalid_argument("make_synth_codec: compressed_dim must be >= classes");
    if (compressed_dim > d) throw std::invalid_argument("make_synth_codec: compressed_dim must be <= sem_dim");
    Eigen::MatrixXd rows(compressed_dim, d);
    rows.topRows(nc) = protos.prototypes;
    for (int r = nc; r < compressed_dim; ++r) {
        Eigen::VectorXd v(d);
        for (int k = 0; k < d; ++k) v[k] = rng.normal();
        for (int prev = 0; prev < r; ++prev) v -= rows.row(prev).dot(v) * rows.row(prev).transpose();
        rows.row(r) = v.normalized();
    }
    FeatureCodec codec;
    codec.enc_weight = rows;
    codec.enc_bias = Eigen::VectorXd::Zero(compressed_dim);
    codec.dec_weight = rows.transpose();
    codec.dec_bias = Eigen::VectorXd::Zero(d);
    return codec;
}

inline std::vector<Camera> make_camera_arc(int views, int resolution, double radius = 4.2) {
    std::vector<Camera> cams;
    const double fx = static_cast<double>(resolution);
    for (int v = 0; v < views; ++v) {
        const double span = 50.0 * 3.14159265358979323846 / 180.0;
        const double angle = views > 1 ? (static_cast<double>(v) / (views - 1) - 0.5) * span : 0.0;
        const Eigen::Vector3d pos(-radius * std::sin(angle), 0.35 * std::sin(2.1 * v), -radius * std::cos(angle));
        cams.push_back(look_at_camera(pos, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0), fx, fx, resolution,
                                      resolution));
    }
    return cams;
}

/// Renders every per-view product of a bundle from an encoded scene.
inline std::vector<BundleView> render_bundle_views(const GaussianScene& encoded, const FeatureCodec& codec,
                                                   const PrototypeSet& protos, const std::vector<Camera>& cameras,
                                                   int threads = 1) {
    std::vector<BundleView> views;
    const RenderOptions ropts{threads};
    for (const Camera& cam : cameras) {
        BundleView view;
        view.camera = cam;
        RenderOutput out = render(encoded, cam, ropts);
        view.teacher = decode_features(out.features, codec);
        view.labels = segment(view.teacher, protos).labels;
        view.points = points_to_buffer(unproject_depth(out.depth, cam));
        view.confidence = out.alpha;
        view.color = std::move(out.color);
        view.depth = std::move(out.depth);
        view.alpha = view.confidence;
        views.push_back(std::move(view));
    }
    return views;
}

/// Deterministic ground-truth fixture: seeded scene, codec, prototypes and
/// per-view rendered products. Re-rendering the stored scene reproduces the
/// stored images bit-exactly.
inline Bundle synthesize_bundle(const SynthSpec& spec, int resolution, std::uint64_t seed, int threads = 1) {
    if (spec.gaussians < 1 || spec.views < 1) throw std::invalid_argument("synth: need gaussians >= 1, views >= 1");
    if (resolution < 8) throw std::invalid_argument("synth: resolution must be >= 8");

    Rng rng(seed);
    Bundle bundle;
    bundle.seed = seed;
    bundle.resolution = resolution;
    bundle.prototypes = make_prototypes(spec.classes, spec.sem_dim, rng);
    bundle.codec = make_synth_codec(bundle.prototypes, spec.compressed_dim, rng);

    const std::vector<Camera> cameras = make_camera_arc(spec.views, resolution);

    // Cluster of class-tagged blobs; the backdrop (when present) is the
    // final primitive on the far side of the cluster.
    std::vector<Eigen::Vector3d> centers;
    for (int i = 0; i < spec.gaussians; ++i) {
        const bool is_backdrop = spec.backdrop && i == spec.gaussians - 1;
        if (is_backdrop) {
            centers.emplace_back(0.0, 0.0, 2.2);
        } else {
            centers.emplace_back(rng.uniform(-spec.spread, spec.spread), rng.uniform(-spec.spread, spec.spread),
                                 rng.uniform(-spec.spread * 0.6, spec.spread * 0.6));
        }
    }

    GaussianScene scene;
    scene.sem_dim = spec.sem_dim;
    scene.compressed_dim = spec.compressed_dim;
    scene.median_depth = compute_median_depth(centers, cameras.front());

    for (int i = 0; i < spec.gaussians; ++i) {
        const bool is_backdrop = spec.backdrop && i == spec.gaussians - 1;
        const int cls = i % spec.classes;
        const double world_scale = is_backdrop ? 3.0 : rng.uniform(0.35, 0.6);
        const Eigen::Vector3d scale_raw =
            Eigen::Vector3d::Constant(std::log(world_scale / scene.median_depth)) +
            (is_backdrop ? Eigen::Vector3d::Zero() : Eigen::Vector3d(0.2 * rng.normal(), 0.2 * rng.normal(),
                                                                     0.2 * rng.normal()));
        Eigen::Vector4d rot_raw(1.0 + 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal(),
                                0.3 * rng.normal());
        const double opacity_raw = is_backdrop ? 4.0 : rng.uniform(2.0, 3.0);
        Eigen::Vector3d color(rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95));
        const Eigen::VectorXd feature = bundle.prototypes.prototypes.row(cls);
        scene.primitives.push_back(
            build_primitive(centers[static_cast<std::size_t>(i)], opacity_raw, color, scale_raw, rot_raw, feature,
                            scene.median_depth));
    }

    bundle.scene = encode_features(scene, bundle.codec);
    bundle.views = render_bundle_views(bundle.scene, bundle.codec, bundle.prototypes, cameras, threads);
    return bundle;
}

/// Seeded noise on every raw latent; magnitudes scale with `amount`.
/// Colors are clamped back into range and activations refreshed.
inline GaussianScene perturb_scene(const GaussianScene& scene, double amount, Rng& rng) {
    GaussianScene out = scene;
    for (auto& p : out.primitives) {
        for (int i = 0; i < 3; ++i) p.center[i] += amount * 0.06 * rng.normal();
        p.opacity_raw += amount * 0.5 * rng.normal();
        for (int i = 0; i < 3; ++i)
            p.color[i] = std::clamp(p.color[i] + amount * 0.10 * rng.normal(), 0.0, 1.0);
        for (int i = 0; i < 3; ++i) p.scale_raw[i] += amount * 0.12 * rng.normal();
        for (int i = 0; i < 4; ++i) p.rotation_raw[i] += amount * 0.10 * rng.normal();
        for (Eigen::Index i = 0; i < p.sem_feature.size(); ++i) p.sem_feature[i] += amount * 0.05 * rng.normal();
    }
    refresh_activations(out);
    return out;
}

} // namespace semsplat
