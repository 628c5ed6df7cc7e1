// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "semsplat/core/camera.hpp"

namespace semsplat {

/// One anisotropic 3D Gaussian. Raw (pre-activation) latents are kept next
/// to their activated values so fitting can optimize the raw fields while
/// the activated ones stay in range by construction.
struct GaussianPrimitive {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double opacity_raw = 0.0;
    double opacity = 0.5;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale_raw = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    Eigen::Vector4d rotation_raw = Eigen::Vector4d(1, 0, 0, 0);
    Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0); // unit quaternion (w, x, y, z)
    Eigen::VectorXd sem_feature;                            // d entries
    Eigen::VectorXd sem_compressed;                         // d_c entries once encoded, else empty
};

struct GaussianScene {
    std::vector<GaussianPrimitive> primitives;
    int sem_dim = 0;
    int compressed_dim = 0;
    double median_depth = 1.0;
};

/// Collects every invariant violation; an empty result means the scene is
/// well formed. Never throws. An empty sem_compressed vector is legal (the
/// scene has not been through the feature codec yet).
inline std::vector<std::string> validate_scene(const GaussianScene& scene) {
    std::vector<std::string> v;
    if (!(scene.median_depth > 0.0)) v.push_back("scene: median_depth must be positive");
    if (scene.compressed_dim > scene.sem_dim) v.push_back("scene: compressed_dim exceeds sem_dim");
    const auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const GaussianPrimitive& p = scene.primitives[i];
        const std::string tag = "primitive " + std::to_string(i) + ": ";
        if (!(p.opacity >= 0.0 && p.opacity <= 1.0)) v.push_back(tag + "opacity outside [0, 1]");
        if (std::abs(p.opacity - sigmoid(p.opacity_raw)) > 1e-9)
            v.push_back(tag + "opacity does not match sigmoid(opacity_raw)");
        if (!(p.scale.x() > 0.0 && p.scale.y() > 0.0 && p.scale.z() > 0.0))
            v.push_back(tag + "scale must be componentwise positive");
        if (std::abs(p.rotation.norm() - 1.0) > 1e-9) v.push_back(tag + "quaternion norm != 1");
        if (p.sem_feature.size() != scene.sem_dim) v.push_back(tag + "sem_feature dimension mismatch");
        if (p.sem_compressed.size() != 0 && p.sem_compressed.size() != scene.compressed_dim)
            v.push_back(tag + "sem_compressed dimension mismatch");
    }
    return v;
}

/// Median camera-space depth over the centers in front of the camera.
/// An even count averages the two central order statistics.
inline double compute_median_depth(const std::vector<Eigen::Vector3d>& centers, const Camera& camera) {
    std::vector<double> depths;
    depths.reserve(centers.size());
    for (const auto& c : centers) {
        const double z = camera.to_camera(c).z();
        if (z > 0.0) depths.push_back(z);
    }
    if (depths.empty()) throw std::runtime_error("no visible geometry");
    std::sort(depths.begin(), depths.end());
    const std::size_t n = depths.size();
    if (n % 2 == 1) return depths[n / 2];
    return 0.5 * (depths[n / 2 - 1] + depths[n / 2]);
}

} // namespace semsplat
