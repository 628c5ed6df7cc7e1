// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "semsplat/core/camera.hpp"
#include "semsplat/core/image.hpp"
#include "semsplat/core/parallel.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/gaussian.hpp"
#include "semsplat/grad.hpp"

namespace semsplat {

// Standard 3DGS rasterization constants.
inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovDilation = 0.3;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;
inline constexpr int kTileSize = 16;

/// Screen-space footprint of one projected Gaussian.
struct Splat2D {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity(); // cov2d^-1
    double depth = 0.0;                                  // camera-space z of the center
    int source_index = 0;
    double bbox_rx = 0.0; // half extents of the 3-sigma ellipse bounding box
    double bbox_ry = 0.0;
};

struct RenderOutput {
    ImageBuffer color;    // 3 channels
    ImageBuffer features; // d_c channels
    ImageBuffer depth;    // 1 channel, blended camera-space z (not alpha-normalized)
    ImageBuffer alpha;    // 1 channel, accumulated blend weight
};

/// Per-pixel upstream gradients for render_backward. Empty buffers count
/// as all-zero.
struct RenderUpstream {
    ImageBuffer color;
    ImageBuffer features;
    ImageBuffer depth;
    ImageBuffer alpha;
};

struct RenderOptions {
    int threads = 1;
};

/// EWA projection of one primitive into screen space. Returns nullopt when
/// the center is at or behind the near plane.
inline std::optional<Splat2D> project_gaussian(const GaussianPrimitive& primitive, const Covariance3D& cov,
                                               const Camera& camera, int source_index = 0) {
    const Eigen::Vector3d t = camera.to_camera(primitive.center);
    if (t.z() <= kNearPlane) return std::nullopt;

    Splat2D s;
    s.depth = t.z();
    s.source_index = source_index;
    s.mean2d = Eigen::Vector2d(camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy);

    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx / t.z(), 0.0, -camera.fx * t.x() / (t.z() * t.z()),
        0.0, camera.fy / t.z(), -camera.fy * t.y() / (t.z() * t.z());
    const Eigen::Matrix<double, 2, 3> p = jac * camera.rotation;
    s.cov2d = p * cov.matrix * p.transpose();
    s.cov2d(0, 0) += kCovDilation;
    s.cov2d(1, 1) += kCovDilation;

    const double a = s.cov2d(0, 0), b = s.cov2d(0, 1), c = s.cov2d(1, 1);
    const double det = a * c - b * b;
    s.conic << c / det, -b / det, -b / det, a / det;
    s.bbox_rx = 3.0 * std::sqrt(a);
    s.bbox_ry = 3.0 * std::sqrt(c);
    return s;
}

/// Whether the pixel sample lies inside the splat's 3-sigma bounding box.
/// Both the tiled renderer and the brute-force oracle apply this same
/// per-pixel cut, so tile binning never changes the result.
inline bool splat_covers_pixel(const Splat2D& s, double px, double py) {
    return std::abs(px - s.mean2d.x()) <= s.bbox_rx && std::abs(py - s.mean2d.y()) <= s.bbox_ry;
}

/// exp(-1/2 (p - m)^T cov2d^-1 (p - m)), evaluated through the stored conic.
inline double gaussian_weight(const Splat2D& s, double px, double py) {
    const double dx = px - s.mean2d.x();
    const double dy = py - s.mean2d.y();
    const double sigma =
        0.5 * (s.conic(0, 0) * dx * dx + s.conic(1, 1) * dy * dy) + s.conic(0, 1) * dx * dy;
    return std::exp(-sigma);
}

namespace detail {

inline std::vector<Splat2D> project_scene(const GaussianScene& scene, const Camera& camera) {
    std::vector<Splat2D> splats;
    splats.reserve(scene.primitives.size());
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto& prim = scene.primitives[i];
        const Covariance3D cov = build_covariance(prim.scale, prim.rotation);
        if (auto s = project_gaussian(prim, cov, camera, static_cast<int>(i))) splats.push_back(*s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source_index < b.source_index;
    });
    return splats;
}

inline void require_compressed(const GaussianScene& scene) {
    for (const auto& p : scene.primitives)
        if (p.sem_compressed.size() != scene.compressed_dim) throw std::runtime_error("features not compressed");
}

struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    // Per tile, indices into the depth-sorted splat list (ascending).
    std::vector<std::vector<int>> bins;
};

inline TileGrid bin_splats(const std::vector<Splat2D>& splats, int width, int height) {
    TileGrid grid;
    grid.tiles_x = (width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (height + kTileSize - 1) / kTileSize;
    grid.bins.resize(static_cast<std::size_t>(grid.tiles_x) * grid.tiles_y);
    for (std::size_t si = 0; si < splats.size(); ++si) {
        const Splat2D& s = splats[si];
        const double x0 = s.mean2d.x() - s.bbox_rx, x1 = s.mean2d.x() + s.bbox_rx;
        const double y0 = s.mean2d.y() - s.bbox_ry, y1 = s.mean2d.y() + s.bbox_ry;
        int tx0 = std::max(0, static_cast<int>(std::floor(x0 / kTileSize)));
        int tx1 = std::min(grid.tiles_x - 1, static_cast<int>(std::floor(x1 / kTileSize)));
        int ty0 = std::max(0, static_cast<int>(std::floor(y0 / kTileSize)));
        int ty1 = std::min(grid.tiles_y - 1, static_cast<int>(std::floor(y1 / kTileSize)));
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                grid.bins[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<int>(si));
    }
    return grid;
}

} // namespace detail

/// Front-to-back alpha compositing of color, compressed semantic features,
/// depth, and accumulated opacity. Splats are sorted once per image by
/// camera-space center depth (ties by primitive index); per-splat effective
/// alpha is min(kAlphaClamp, opacity * G); splats below kMinSplatAlpha are
/// skipped and accumulation stops once transmittance drops under
/// kTransmittanceStop. Background is zero in every channel. Deterministic
/// for any thread count.
inline RenderOutput render(const GaussianScene& scene, const Camera& camera, const RenderOptions& opts = {}) {
    detail::require_compressed(scene);
    const int w = camera.width, h = camera.height, dc = scene.compressed_dim;
    RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, dc), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};

    const std::vector<Splat2D> splats = detail::project_scene(scene, camera);
    const detail::TileGrid grid = detail::bin_splats(splats, w, h);

    parallel_for(grid.bins.size(), opts.threads, [&](std::size_t tile) {
        const auto& bin = grid.bins[tile];
        if (bin.empty()) return;
        const int tx = static_cast<int>(tile) % grid.tiles_x;
        const int ty = static_cast<int>(tile) / grid.tiles_x;
        const int x0 = tx * kTileSize, x1 = std::min(w, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(h, y0 + kTileSize);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                double transmittance = 1.0;
                double* col = out.color.pixel(x, y);
                double* feat = dc > 0 ? out.features.pixel(x, y) : nullptr;
                double acc_depth = 0.0, acc_alpha = 0.0;
                for (int si : bin) {
                    const Splat2D& s = splats[static_cast<std::size_t>(si)];
                    if (!splat_covers_pixel(s, x, y)) continue;
                    const GaussianPrimitive& prim = scene.primitives[static_cast<std::size_t>(s.source_index)];
                    const double g = gaussian_weight(s, x, y);
                    const double a = std::min(kAlphaClamp, prim.opacity * g);
                    if (a < kMinSplatAlpha) continue;
                    const double weight = a * transmittance;
                    col[0] += weight * prim.color[0];
                    col[1] += weight * prim.color[1];
                    col[2] += weight * prim.color[2];
                    for (int k = 0; k < dc; ++k) feat[k] += weight * prim.sem_compressed[k];
                    acc_depth += weight * s.depth;
                    acc_alpha += weight;
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceStop) break;
                }
                out.depth.at(x, y, 0) = acc_depth;
                out.alpha.at(x, y, 0) = acc_alpha;
            }
    });
    return out;
}

namespace detail {

// Per-primitive gradient accumulators in screen/camera space, filled by the
// per-pixel backward walk and chained to scene parameters afterwards.
struct SplatAccum {
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::VectorXd features;
    double depth = 0.0;
    double alpha_act = 0.0; // dL/d(activated opacity)
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero(); // dL/d(conic)
    bool touched = false;
};

struct PixelContribution {
    int bin_pos; // position within the tile's bin list
    double g;
    double a;
    double transmittance_before;
    double gdot; // upstream-weighted payload of this splat at this pixel
};

} // namespace detail

/// Analytic adjoint of render: gradients of sum(upstream * output) with
/// respect to every primitive's center, opacity_raw, color, scale_raw,
/// rotation_raw and sem_compressed. Replays the forward clamping, skip and
/// early-stop decisions; alphas saturated at the clamp contribute no
/// gradient through it. Deterministic for any thread count (per-tile
/// partials are reduced in tile order).
inline GradientBundle render_backward(const GaussianScene& scene, const Camera& camera,
                                      const RenderUpstream& upstream, const RenderOptions& opts = {}) {
    detail::require_compressed(scene);
    const int w = camera.width, h = camera.height, dc = scene.compressed_dim;

    const auto check = [&](const ImageBuffer& buf, int ch, const char* name) {
        if (buf.empty()) return;
        if (buf.width != w || buf.height != h || buf.channels != ch)
            throw std::invalid_argument(std::string("render_backward: upstream ") + name + " has wrong shape");
    };
    check(upstream.color, 3, "color");
    check(upstream.features, dc, "features");
    check(upstream.depth, 1, "depth");
    check(upstream.alpha, 1, "alpha");

    const std::vector<Splat2D> splats = detail::project_scene(scene, camera);
    const detail::TileGrid grid = detail::bin_splats(splats, w, h);

    // One accumulator block per tile, merged sequentially afterwards.
    std::vector<std::vector<detail::SplatAccum>> tile_accums(grid.bins.size());

    parallel_for(grid.bins.size(), opts.threads, [&](std::size_t tile) {
        const auto& bin = grid.bins[tile];
        if (bin.empty()) return;
        auto& accums = tile_accums[tile];
        accums.resize(bin.size());
        for (auto& acc : accums) acc.features = Eigen::VectorXd::Zero(dc);

        const int tx = static_cast<int>(tile) % grid.tiles_x;
        const int ty = static_cast<int>(tile) / grid.tiles_x;
        const int x0 = tx * kTileSize, x1 = std::min(w, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(h, y0 + kTileSize);

        std::vector<detail::PixelContribution> contribs;
        contribs.reserve(bin.size());
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const double* u_col = upstream.color.empty() ? nullptr : upstream.color.pixel(x, y);
                const double* u_feat = (dc > 0 && !upstream.features.empty()) ? upstream.features.pixel(x, y) : nullptr;
                const double u_depth = upstream.depth.empty() ? 0.0 : upstream.depth.at(x, y, 0);
                const double u_alpha = upstream.alpha.empty() ? 0.0 : upstream.alpha.at(x, y, 0);

                // Forward replay, recording the contributing splats.
                contribs.clear();
                double transmittance = 1.0;
                for (std::size_t pos = 0; pos < bin.size(); ++pos) {
                    const Splat2D& s = splats[static_cast<std::size_t>(bin[pos])];
                    if (!splat_covers_pixel(s, x, y)) continue;
                    const GaussianPrimitive& prim = scene.primitives[static_cast<std::size_t>(s.source_index)];
                    const double g = gaussian_weight(s, x, y);
                    const double a = std::min(kAlphaClamp, prim.opacity * g);
                    if (a < kMinSplatAlpha) continue;
                    double gdot = u_alpha + u_depth * s.depth;
                    if (u_col) gdot += u_col[0] * prim.color[0] + u_col[1] * prim.color[1] + u_col[2] * prim.color[2];
                    if (u_feat)
                        for (int k = 0; k < dc; ++k) gdot += u_feat[k] * prim.sem_compressed[k];
                    contribs.push_back({static_cast<int>(pos), g, a, transmittance, gdot});
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceStop) break;
                }

                // Reverse walk: suffix accumulates sum_{j>i} w_j * gdot_j.
                double suffix = 0.0;
                for (std::size_t r = contribs.size(); r-- > 0;) {
                    const auto& cb = contribs[r];
                    const Splat2D& s = splats[static_cast<std::size_t>(bin[static_cast<std::size_t>(cb.bin_pos)])];
                    const GaussianPrimitive& prim = scene.primitives[static_cast<std::size_t>(s.source_index)];
                    auto& acc = accums[static_cast<std::size_t>(cb.bin_pos)];
                    acc.touched = true;
                    const double weight = cb.a * cb.transmittance_before;
                    if (u_col) {
                        acc.color[0] += weight * u_col[0];
                        acc.color[1] += weight * u_col[1];
                        acc.color[2] += weight * u_col[2];
                    }
                    if (u_feat)
                        for (int k = 0; k < dc; ++k) acc.features[k] += weight * u_feat[k];
                    acc.depth += weight * u_depth;

                    const double dL_da = cb.transmittance_before * cb.gdot - suffix / (1.0 - cb.a);
                    suffix += weight * cb.gdot;

                    if (prim.opacity * cb.g < kAlphaClamp) {
                        acc.alpha_act += dL_da * cb.g;
                        const double dL_dsigma = -(dL_da * prim.opacity) * cb.g; // through G = exp(-sigma)
                        const Eigen::Vector2d d(x - s.mean2d.x(), y - s.mean2d.y());
                        const Eigen::Vector2d conic_d = s.conic * d;
                        acc.mean2d += dL_dsigma * (-conic_d);
                        acc.conic += dL_dsigma * 0.5 * (d * d.transpose());
                    }
                }
            }
    });

    // Deterministic reduction and chain to scene parameters.
    std::vector<detail::SplatAccum> total(splats.size());
    for (auto& acc : total) acc.features = Eigen::VectorXd::Zero(dc);
    for (std::size_t tile = 0; tile < grid.bins.size(); ++tile) {
        const auto& bin = grid.bins[tile];
        const auto& accums = tile_accums[tile];
        for (std::size_t pos = 0; pos < accums.size(); ++pos) {
            const auto& acc = accums[pos];
            if (!acc.touched) continue;
            auto& dst = total[static_cast<std::size_t>(bin[pos])];
            dst.touched = true;
            dst.color += acc.color;
            dst.features += acc.features;
            dst.depth += acc.depth;
            dst.alpha_act += acc.alpha_act;
            dst.mean2d += acc.mean2d;
            dst.conic += acc.conic;
        }
    }

    GradientBundle grads = GradientBundle::zeros(scene);
    for (std::size_t si = 0; si < splats.size(); ++si) {
        const auto& acc = total[si];
        if (!acc.touched) continue;
        const Splat2D& s = splats[si];
        const std::size_t pi = static_cast<std::size_t>(s.source_index);
        const GaussianPrimitive& prim = scene.primitives[pi];

        grads.color[pi] += acc.color;
        grads.sem_compressed[pi] += acc.features;
        grads.opacity_raw[pi] += acc.alpha_act * d_activate_opacity(prim.opacity_raw);

        // dL/dSigma' from dL/dconic via d(A^-1) = -A^-1 dA A^-1.
        const Eigen::Matrix2d d_cov2d = -s.conic * acc.conic * s.conic;

        const Eigen::Vector3d t = camera.to_camera(prim.center);
        Eigen::Matrix<double, 2, 3> jac;
        jac << camera.fx / t.z(), 0.0, -camera.fx * t.x() / (t.z() * t.z()),
            0.0, camera.fy / t.z(), -camera.fy * t.y() / (t.z() * t.z());
        const Eigen::Matrix<double, 2, 3> p = jac * camera.rotation;
        const Covariance3D cov = build_covariance(prim.scale, prim.rotation);

        const Eigen::Matrix3d d_cov3d = p.transpose() * d_cov2d * p;
        const Eigen::Matrix3d basis = camera.rotation * cov.matrix * camera.rotation.transpose();
        const Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov2d * jac * basis;

        Eigen::Vector3d d_t = jac.transpose() * acc.mean2d; // dmean2d/dt equals the projection Jacobian
        const double tz2 = t.z() * t.z(), tz3 = tz2 * t.z();
        d_t.x() += d_jac(0, 2) * (-camera.fx / tz2);
        d_t.y() += d_jac(1, 2) * (-camera.fy / tz2);
        d_t.z() += d_jac(0, 0) * (-camera.fx / tz2) + d_jac(1, 1) * (-camera.fy / tz2) +
                   d_jac(0, 2) * (2.0 * camera.fx * t.x() / tz3) + d_jac(1, 2) * (2.0 * camera.fy * t.y() / tz3);
        d_t.z() += acc.depth;
        grads.center[pi] += camera.rotation.transpose() * d_t;

        Eigen::Vector3d d_scale;
        Eigen::Vector4d d_quat;
        covariance_pullback(prim.scale, prim.rotation, d_cov3d, &d_scale, &d_quat);
        grads.scale_raw[pi] += d_scale.cwiseProduct(prim.scale);
        grads.rotation_raw[pi] += jac_activate_rotation(prim.rotation_raw) * d_quat;
    }
    return grads;
}

} // namespace semsplat
