// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "semsplat/core/camera.hpp"
#include "semsplat/core/rng.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/gaussian.hpp"
#include "semsplat/rasterizer.hpp"

namespace fixtures {

inline semsplat::Camera identity_camera(int width, int height, double focal = 0.0) {
    semsplat::Camera cam;
    cam.fx = cam.fy = focal > 0.0 ? focal : static_cast<double>(width);
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

/// Random but well-conditioned scene in front of an identity camera:
/// centers inside the frustum, footprints a few pixels wide, opacities
/// capped below the clamp (sigmoid(1.5) ~ 0.82) so effective alphas stay in
/// the smooth regime for finite-difference checks.
inline semsplat::GaussianScene random_scene(semsplat::Rng& rng, int count, int sem_dim, int compressed_dim,
                                            const semsplat::Camera& cam, double max_opacity_raw = 1.5) {
    semsplat::GaussianScene scene;
    scene.sem_dim = sem_dim;
    scene.compressed_dim = compressed_dim;
    scene.median_depth = 3.5;
    for (int i = 0; i < count; ++i) {
        const double z = rng.uniform(2.5, 4.5);
        const double half_x = 0.35 * z * cam.width / cam.fx;
        const double half_y = 0.35 * z * cam.height / cam.fy;
        const Eigen::Vector3d center(rng.uniform(-half_x, half_x), rng.uniform(-half_y, half_y), z);

        const double sigma_px = rng.uniform(1.5, 4.0);
        const double world_scale = sigma_px * z / cam.fx;
        const Eigen::Vector3d scale_raw =
            Eigen::Vector3d::Constant(std::log(world_scale / scene.median_depth)) +
            Eigen::Vector3d(0.15 * rng.normal(), 0.15 * rng.normal(), 0.15 * rng.normal());

        Eigen::Vector4d rot_raw(1.0 + 0.4 * rng.normal(), 0.4 * rng.normal(), 0.4 * rng.normal(), 0.4 * rng.normal());
        if (rot_raw.norm() < 0.2) rot_raw = Eigen::Vector4d(1, 0, 0, 0);

        const double opacity_raw = rng.uniform(-0.5, max_opacity_raw);
        const Eigen::Vector3d color(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95));

        Eigen::VectorXd feature(sem_dim);
        for (int k = 0; k < sem_dim; ++k) feature[k] = rng.normal();

        semsplat::GaussianPrimitive p = semsplat::build_primitive(center, opacity_raw, color, scale_raw, rot_raw,
                                                                  feature, scene.median_depth);
        p.sem_compressed.resize(compressed_dim);
        for (int k = 0; k < compressed_dim; ++k) p.sem_compressed[k] = rng.normal();
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

inline semsplat::ImageBuffer random_buffer(semsplat::Rng& rng, int w, int h, int c, double scale = 1.0) {
    semsplat::ImageBuffer buf(w, h, c);
    for (auto& v : buf.data) v = scale * rng.normal();
    return buf;
}

inline semsplat::RenderUpstream random_upstream(semsplat::Rng& rng, int w, int h, int dc) {
    semsplat::RenderUpstream up;
    up.color = random_buffer(rng, w, h, 3);
    up.features = random_buffer(rng, w, h, dc);
    up.depth = random_buffer(rng, w, h, 1);
    up.alpha = random_buffer(rng, w, h, 1);
    return up;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("semsplat_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const { return (rel.empty() ? path_ : path_ / rel).string(); }

private:
    std::filesystem::path path_;
};

} // namespace fixtures
