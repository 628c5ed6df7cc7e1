// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "semsplat/core/image.hpp"
#include "semsplat/core/pointmap.hpp"
#include "semsplat/grad.hpp"

namespace semsplat {

/// Loss balancing constants. lambda_lpips is kept even though the
/// perceptual hook defaults to absent, so a hook implementation slots in
/// without touching call sites.
struct LossWeights {
    double lambda_lpips = 0.05;
    double lambda_sem = 0.02;
    double lambda_geo = 0.005;
    double conf_ratio = 0.90;
};

inline void validate_weights(const LossWeights& w) {
    if (w.lambda_lpips < 0 || w.lambda_sem < 0 || w.lambda_geo < 0)
        throw std::invalid_argument("loss weights must be non-negative");
    if (!(w.conf_ratio > 0.0 && w.conf_ratio <= 1.0))
        throw std::invalid_argument("conf_ratio must lie in (0, 1]");
}

struct SimilarityTransform {
    double scale = 1.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

struct LossBreakdown {
    double total = 0.0;
    std::vector<double> per_view;
};

/// Optional perceptual term: returns the loss value for one view and, when
/// grad is non-null, adds its own gradient (unweighted) into grad.
using PerceptualHook = std::function<double(const ImageBuffer& pred, const ImageBuffer& target, ImageBuffer* grad)>;

/// Sum over views of mean-per-element L1 plus the optional perceptual term
/// weighted by lambda_lpips. Subgradient of |x| at zero is zero.
inline LossBreakdown loss_rgb(const std::vector<ImageBuffer>& rendered, const std::vector<ImageBuffer>& targets,
                              const LossWeights& w, const PerceptualHook& hook = nullptr,
                              std::vector<ImageBuffer>* grads = nullptr) {
    if (rendered.empty() || rendered.size() != targets.size())
        throw std::invalid_argument("loss_rgb: need at least one matched view pair");
    LossBreakdown out;
    if (grads) grads->clear();
    for (std::size_t v = 0; v < rendered.size(); ++v) {
        const ImageBuffer& pred = rendered[v];
        const ImageBuffer& gt = targets[v];
        require_same_shape(pred, gt, "loss_rgb");
        const double inv_count = 1.0 / static_cast<double>(pred.data.size());
        ImageBuffer grad;
        if (grads) grad = ImageBuffer(pred.width, pred.height, pred.channels);
        double l1 = 0.0;
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const double diff = pred.data[i] - gt.data[i];
            l1 += std::abs(diff);
            if (grads) grad.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv_count;
        }
        double view_loss = l1 * inv_count;
        if (hook) {
            ImageBuffer hook_grad;
            if (grads) hook_grad = ImageBuffer(pred.width, pred.height, pred.channels);
            const double h = hook(pred, gt, grads ? &hook_grad : nullptr);
            view_loss += w.lambda_lpips * h;
            if (grads)
                for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += w.lambda_lpips * hook_grad.data[i];
        }
        out.per_view.push_back(view_loss);
        out.total += view_loss;
        if (grads) grads->push_back(std::move(grad));
    }
    return out;
}

/// Sum over views of (1 - mean pixel-wise cosine similarity) between the
/// decoded rendered features and the teacher features. Pixels where either
/// vector is numerically zero contribute similarity zero.
inline LossBreakdown loss_sem(const std::vector<ImageBuffer>& decoded, const std::vector<ImageBuffer>& teacher,
                              std::vector<ImageBuffer>* grads = nullptr) {
    if (decoded.empty() || decoded.size() != teacher.size())
        throw std::invalid_argument("loss_sem: need at least one matched view pair");
    LossBreakdown out;
    if (grads) grads->clear();
    for (std::size_t v = 0; v < decoded.size(); ++v) {
        const ImageBuffer& pred = decoded[v];
        const ImageBuffer& gt = teacher[v];
        require_same_shape(pred, gt, "loss_sem");
        const int d = pred.channels;
        const double inv_px = 1.0 / static_cast<double>(pred.pixel_count());
        ImageBuffer grad;
        if (grads) grad = ImageBuffer(pred.width, pred.height, d);
        double mean_cos = 0.0;
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x) {
                const double* f = pred.pixel(x, y);
                const double* t = gt.pixel(x, y);
                double ff = 0.0, tt = 0.0, ft = 0.0;
                for (int k = 0; k < d; ++k) {
                    ff += f[k] * f[k];
                    tt += t[k] * t[k];
                    ft += f[k] * t[k];
                }
                const double fn = std::sqrt(ff), tn = std::sqrt(tt);
                if (fn < 1e-12 || tn < 1e-12) continue; // similarity 0, gradient 0
                const double cosv = ft / (fn * tn);
                mean_cos += cosv * inv_px;
                if (grads) {
                    // Factored so the gradient cancels exactly at f == t.
                    double* g = grad.pixel(x, y);
                    const double denom = inv_px / (fn * tn * ff);
                    for (int k = 0; k < d; ++k) g[k] = -(t[k] * ff - f[k] * ft) * denom;
                }
            }
        const double view_loss = 1.0 - mean_cos;
        out.per_view.push_back(view_loss);
        out.total += view_loss;
        if (grads) grads->push_back(std::move(grad));
    }
    return out;
}

/// Top-k confidence mask: exactly ceil(ratio * W * H) pixels with highest
/// confidence are selected; ties go to the lower row-major index.
inline GeometryMask build_confidence_mask(const std::vector<double>& conf, int width, int height, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("build_confidence_mask: ratio outside (0, 1]");
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (conf.size() != n) throw std::invalid_argument("build_confidence_mask: confidence size mismatch");
    const std::size_t k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (conf[a] != conf[b]) return conf[a] > conf[b];
        return a < b;
    });
    GeometryMask mask;
    mask.width = width;
    mask.height = height;
    mask.ratio = ratio;
    mask.mask.assign(n, 0);
    for (std::size_t i = 0; i < k && i < n; ++i) mask.mask[order[i]] = 1;
    return mask;
}

inline GeometryMask build_confidence_mask(const ImageBuffer& conf, double ratio) {
    if (conf.channels != 1) throw std::invalid_argument("build_confidence_mask: confidence must be single-channel");
    return build_confidence_mask(conf.data, conf.width, conf.height, ratio);
}

/// Closed-form least-squares similarity (scale, rotation, translation)
/// mapping source onto target: centroids, centered cross-covariance, SVD
/// with determinant sign correction, s = trace(DS) / source variance.
inline SimilarityTransform umeyama(const std::vector<Eigen::Vector3d>& source,
                                   const std::vector<Eigen::Vector3d>& target) {
    if (source.size() < 3 || source.size() != target.size()) throw std::runtime_error("degenerate alignment");
    const double n = static_cast<double>(source.size());
    Eigen::Vector3d mean_src = Eigen::Vector3d::Zero(), mean_dst = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        mean_src += source[i];
        mean_dst += target[i];
    }
    mean_src /= n;
    mean_dst /= n;

    double var_src = 0.0;
    Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Eigen::Vector3d xs = source[i] - mean_src;
        const Eigen::Vector3d yt = target[i] - mean_dst;
        var_src += xs.squaredNorm();
        cross += yt * xs.transpose();
    }
    var_src /= n;
    cross /= n;
    if (var_src < 1e-15) throw std::runtime_error("degenerate alignment");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d sign = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign[2] = -1.0;

    SimilarityTransform t;
    t.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
    t.scale = svd.singularValues().dot(sign) / var_src;
    t.translation = mean_dst - t.scale * (t.rotation * mean_src);
    return t;
}

/// Uniform spatial hash over the target points with expanding-ring search;
/// exact nearest neighbour (same squared distances as an exhaustive scan).
class PointGrid {
public:
    explicit PointGrid(const std::vector<Eigen::Vector3d>& points) : points_(points) {
        if (points.empty()) throw std::invalid_argument("PointGrid: empty point set");
        lo_ = hi_ = points[0];
        for (const auto& p : points) {
            lo_ = lo_.cwiseMin(p);
            hi_ = hi_.cwiseMax(p);
        }
        const Eigen::Vector3d ext = hi_ - lo_;
        const double max_ext = ext.maxCoeff();
        const double volume = ext.x() * ext.y() * ext.z();
        double h = volume > 0.0 ? std::cbrt(volume / static_cast<double>(points.size())) : max_ext / 8.0;
        h = std::max(h, max_ext / 64.0);
        if (!(h > 0.0)) h = 1.0;
        cell_ = h;
        for (int a = 0; a < 3; ++a) dims_[a] = static_cast<int>(std::floor(ext[a] / cell_)) + 1;
        cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[cell_index(coord_of(points[i]))].push_back(static_cast<int>(i));
    }

    /// Index of the closest point and its exact squared distance.
    std::pair<int, double> nearest(const Eigen::Vector3d& q) const {
        std::array<int, 3> qc;
        for (int a = 0; a < 3; ++a) qc[a] = static_cast<int>(std::floor((q[a] - lo_[a]) / cell_));
        int ring_max = 0;
        for (int a = 0; a < 3; ++a)
            ring_max = std::max(ring_max, std::max(std::abs(qc[a]), std::abs(qc[a] - (dims_[a] - 1))));

        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int ring = 0; ring <= ring_max; ++ring) {
            // Cells at Chebyshev distance >= ring are at least (ring-1)*cell_
            // away from a query inside its own cell.
            if (best >= 0 && ring >= 1) {
                const double bound = static_cast<double>(ring - 1) * cell_;
                if (best_d2 <= bound * bound) break;
            }
            scan_ring(q, qc, ring, &best, &best_d2);
        }
        return {best, best_d2};
    }

private:
    std::array<int, 3> coord_of(const Eigen::Vector3d& p) const {
        std::array<int, 3> c;
        for (int a = 0; a < 3; ++a) {
            int i = static_cast<int>(std::floor((p[a] - lo_[a]) / cell_));
            c[a] = std::clamp(i, 0, dims_[a] - 1);
        }
        return c;
    }
    std::size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
    }

    void scan_cell(const Eigen::Vector3d& q, int cx, int cy, int cz, int* best, double* best_d2) const {
        if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] || cz >= dims_[2]) return;
        for (int i : cells_[cell_index({cx, cy, cz})]) {
            const Eigen::Vector3d& p = points_[static_cast<std::size_t>(i)];
            const double dx = q.x() - p.x(), dy = q.y() - p.y(), dz = q.z() - p.z();
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < *best_d2) {
                *best_d2 = d2;
                *best = i;
            }
        }
    }

    void scan_ring(const Eigen::Vector3d& q, const std::array<int, 3>& qc, int ring, int* best,
                   double* best_d2) const {
        if (ring == 0) {
            scan_cell(q, qc[0], qc[1], qc[2], best, best_d2);
            return;
        }
        for (int dz = -ring; dz <= ring; ++dz)
            for (int dy = -ring; dy <= ring; ++dy)
                for (int dx = -ring; dx <= ring; ++dx) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                    scan_cell(q, qc[0] + dx, qc[1] + dy, qc[2] + dz, best, best_d2);
                }
    }

    const std::vector<Eigen::Vector3d>& points_;
    Eigen::Vector3d lo_, hi_;
    double cell_ = 1.0;
    std::array<int, 3> dims_{1, 1, 1};
    std::vector<std::vector<int>> cells_;
};

/// Single-directional Chamfer distance: mean over source points of the
/// squared distance to the nearest target point. The gradient holds each
/// nearest neighbour fixed: 2 (x - nn(x)) / N. Matches at the f64 noise
/// floor (distance below 1e-12) contribute no gradient, which keeps an
/// exact fixed point stationary under Adam.
inline double chamfer_single(const std::vector<Eigen::Vector3d>& source, const std::vector<Eigen::Vector3d>& target,
                             std::vector<Eigen::Vector3d>* grad_source = nullptr) {
    if (source.empty() || target.empty()) throw std::runtime_error("chamfer_single: empty point set");
    const PointGrid grid(target);
    const double inv_n = 1.0 / static_cast<double>(source.size());
    if (grad_source) grad_source->assign(source.size(), Eigen::Vector3d::Zero());
    double sum = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const auto [idx, d2] = grid.nearest(source[i]);
        sum += d2;
        if (grad_source && d2 > 1e-24)
            (*grad_source)[i] = 2.0 * inv_n * (source[i] - target[static_cast<std::size_t>(idx)]);
    }
    return sum / static_cast<double>(source.size());
}

/// Full geometry-loss pipeline per view: confidence mask, masked gather,
/// Umeyama alignment of predictions onto the reference, single-directional
/// Chamfer. The fitted transform is a constant in the backward pass.
inline LossBreakdown loss_geo(const std::vector<PredictedPointMap>& pred,
                              const std::vector<ReferencePointMap>& ref, const LossWeights& w,
                              std::vector<std::vector<Eigen::Vector3d>>* grad_points = nullptr) {
    if (pred.empty() || pred.size() != ref.size())
        throw std::invalid_argument("loss_geo: need at least one matched view pair");
    LossBreakdown out;
    if (grad_points) grad_points->clear();
    for (std::size_t v = 0; v < pred.size(); ++v) {
        const PredictedPointMap& pm = pred[v];
        const ReferencePointMap& rm = ref[v];
        if (pm.width != rm.width || pm.height != rm.height)
            throw std::invalid_argument("loss_geo: view dimensions differ");

        const GeometryMask mask = build_confidence_mask(rm.confidence, rm.width, rm.height, w.conf_ratio);
        std::vector<Eigen::Vector3d> src, dst;
        std::vector<std::size_t> pixel_of;
        for (std::size_t i = 0; i < mask.mask.size(); ++i) {
            if (!mask.mask[i]) continue;
            src.push_back(pm.points[i]);
            dst.push_back(rm.points[i]);
            pixel_of.push_back(i);
        }

        const SimilarityTransform t = umeyama(src, dst);
        std::vector<Eigen::Vector3d> aligned(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) aligned[i] = t.apply(src[i]);

        std::vector<Eigen::Vector3d> grad_aligned;
        const double view_loss = chamfer_single(aligned, dst, grad_points ? &grad_aligned : nullptr);
        out.per_view.push_back(view_loss);
        out.total += view_loss;

        if (grad_points) {
            std::vector<Eigen::Vector3d> gp(pm.points.size(), Eigen::Vector3d::Zero());
            const Eigen::Matrix3d pullback = t.scale * t.rotation.transpose();
            for (std::size_t i = 0; i < src.size(); ++i) gp[pixel_of[i]] = pullback * grad_aligned[i];
            grad_points->push_back(std::move(gp));
        }
    }
    return out;
}

inline double loss_total(double l_rgb, double l_sem, double l_geo, const LossWeights& w) {
    return l_rgb + w.lambda_sem * l_sem + w.lambda_geo * l_geo;
}

/// Parameter-wise weighted sum of per-loss gradient bundles.
inline GradientBundle merge_bundles(const GaussianScene& scene, const GradientBundle& g_rgb,
                                    const GradientBundle& g_sem, const GradientBundle& g_geo,
                                    const LossWeights& w) {
    GradientBundle merged = GradientBundle::zeros(scene);
    merged.axpy(1.0, g_rgb);
    merged.axpy(w.lambda_sem, g_sem);
    merged.axpy(w.lambda_geo, g_geo);
    return merged;
}

} // namespace semsplat
