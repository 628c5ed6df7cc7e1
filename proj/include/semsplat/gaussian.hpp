// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <stdexcept>

#include "semsplat/core/scene.hpp"

namespace semsplat {

/// Symmetric positive-semidefinite 3x3 world-space covariance.
struct Covariance3D {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
};

inline double activate_opacity(double f_alpha) { return 1.0 / (1.0 + std::exp(-f_alpha)); }

/// d sigmoid / d f = sigma * (1 - sigma).
inline double d_activate_opacity(double f_alpha) {
    const double s = activate_opacity(f_alpha);
    return s * (1.0 - s);
}

inline Eigen::Vector3d activate_scale(const Eigen::Vector3d& f_s, double d_median) {
    if (!(d_median > 0.0)) throw std::invalid_argument("activate_scale: d_median must be positive");
    return f_s.array().exp() * d_median;
}

/// Diagonal Jacobian of activate_scale; each diagonal entry equals the
/// activated scale component itself.
inline Eigen::Vector3d d_activate_scale(const Eigen::Vector3d& f_s, double d_median) {
    return activate_scale(f_s, d_median);
}

inline constexpr double kDegenerateQuatNorm = 1e-12;

inline Eigen::Vector4d activate_rotation(const Eigen::Vector4d& f_r) {
    const double n = f_r.norm();
    if (!(n > kDegenerateQuatNorm)) throw std::runtime_error("degenerate quaternion");
    return f_r / n;
}

/// Jacobian of f_r -> f_r / |f_r|, i.e. (I - q q^T) / |f_r|.
inline Eigen::Matrix4d jac_activate_rotation(const Eigen::Vector4d& f_r) {
    const double n = f_r.norm();
    if (!(n > kDegenerateQuatNorm)) throw std::runtime_error("degenerate quaternion");
    const Eigen::Vector4d q = f_r / n;
    return (Eigen::Matrix4d::Identity() - q * q.transpose()) / n;
}

/// Rotation matrix of a unit quaternion (w, x, y, z), Hamilton convention.
inline Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// dR/dq_k for the four quaternion components (unit q assumed).
inline std::array<Eigen::Matrix3d, 4> rotation_matrix_grads(const Eigen::Vector4d& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Eigen::Matrix3d, 4> g;
    g[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    g[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    g[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    g[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto& m : g) m *= 2.0;
    return g;
}

/// Sigma = R(q) diag(s^2) R(q)^T.
inline Covariance3D build_covariance(const Eigen::Vector3d& scale, const Eigen::Vector4d& rotation) {
    const Eigen::Matrix3d r = rotation_matrix(rotation);
    const Eigen::Vector3d s2 = scale.cwiseProduct(scale);
    Covariance3D cov;
    cov.matrix = r * s2.asDiagonal() * r.transpose();
    return cov;
}

/// Pullback of a symmetric upstream gradient through build_covariance,
/// yielding gradients on the activated scale and on the unit quaternion.
inline void covariance_pullback(const Eigen::Vector3d& scale, const Eigen::Vector4d& rotation,
                                const Eigen::Matrix3d& upstream, Eigen::Vector3d* d_scale,
                                Eigen::Vector4d* d_rotation) {
    const Eigen::Matrix3d r = rotation_matrix(rotation);
    const Eigen::Matrix3d g = 0.5 * (upstream + upstream.transpose());
    // dL/dD with D = diag(s^2): take the diagonal of R^T G R.
    const Eigen::Vector3d d_diag = (r.transpose() * g * r).diagonal();
    if (d_scale) *d_scale = 2.0 * d_diag.cwiseProduct(scale);
    if (d_rotation) {
        const Eigen::Vector3d s2 = scale.cwiseProduct(scale);
        const Eigen::Matrix3d d_r = 2.0 * g * r * s2.asDiagonal();
        const auto r_grads = rotation_matrix_grads(rotation);
        for (int k = 0; k < 4; ++k) (*d_rotation)[k] = (d_r.cwiseProduct(r_grads[k])).sum();
    }
}

/// Activates all raw latents into a consistent primitive; sem_compressed is
/// left empty until the feature codec runs.
inline GaussianPrimitive build_primitive(const Eigen::Vector3d& center, double opacity_raw,
                                         const Eigen::Vector3d& color, const Eigen::Vector3d& scale_raw,
                                         const Eigen::Vector4d& rotation_raw, const Eigen::VectorXd& sem_feature,
                                         double d_median) {
    GaussianPrimitive p;
    p.center = center;
    p.opacity_raw = opacity_raw;
    p.opacity = activate_opacity(opacity_raw);
    p.color = color;
    p.scale_raw = scale_raw;
    p.scale = activate_scale(scale_raw, d_median);
    p.rotation_raw = rotation_raw;
    p.rotation = activate_rotation(rotation_raw);
    p.sem_feature = sem_feature;
    return p;
}

/// Recompute every activated field from the raw latents (used after an
/// optimizer step mutates the raw parameters).
inline void refresh_activations(GaussianScene& scene) {
    for (auto& p : scene.primitives) {
        p.opacity = activate_opacity(p.opacity_raw);
        p.scale = activate_scale(p.scale_raw, scene.median_depth);
        p.rotation = activate_rotation(p.rotation_raw);
    }
}

} // namespace semsplat
