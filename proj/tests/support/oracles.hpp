// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used to cross-check the library.
// These deliberately avoid the library's accelerated code paths: the
// renderer oracle iterates every splat at every pixel, the Chamfer oracle
// is the exhaustive O(N^2) scan, the SSIM oracle evaluates the Wang
// formula per window with two-pass statistics.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "semsplat/core/image.hpp"
#include "semsplat/fusion.hpp"
#include "semsplat/losses.hpp"
#include "semsplat/rasterizer.hpp"

namespace oracles {

inline double central_difference(const std::function<double(double)>& f, double x, double step) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Relative agreement check with an absolute floor for near-zero values.
inline bool grads_close(double analytic, double numeric, double rel_tol, double abs_floor = 1e-8) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    return std::abs(analytic - numeric) <= rel_tol * scale + abs_floor;
}

/// Brute-force renderer: every splat considered at every pixel, in global
/// depth order, compositing written out longhand. Must match the tiled
/// renderer bit for bit.
inline semsplat::RenderOutput render_reference(const semsplat::GaussianScene& scene,
                                               const semsplat::Camera& camera) {
    using namespace semsplat;
    const int w = camera.width, h = camera.height, dc = scene.compressed_dim;
    RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, dc), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};

    std::vector<Splat2D> splats;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto& prim = scene.primitives[i];
        const Covariance3D cov = build_covariance(prim.scale, prim.rotation);
        if (auto s = project_gaussian(prim, cov, camera, static_cast<int>(i))) splats.push_back(*s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source_index < b.source_index;
    });

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double transmittance = 1.0;
            for (const Splat2D& s : splats) {
                if (!splat_covers_pixel(s, x, y)) continue;
                const GaussianPrimitive& prim = scene.primitives[static_cast<std::size_t>(s.source_index)];
                const double g = gaussian_weight(s, x, y);
                const double a = std::min(kAlphaClamp, prim.opacity * g);
                if (a < kMinSplatAlpha) continue;
                const double weight = a * transmittance;
                for (int c = 0; c < 3; ++c) out.color.at(x, y, c) += weight * prim.color[c];
                for (int k = 0; k < dc; ++k) out.features.at(x, y, k) += weight * prim.sem_compressed[k];
                out.depth.at(x, y, 0) += weight * s.depth;
                out.alpha.at(x, y, 0) += weight;
                transmittance *= 1.0 - a;
                if (transmittance < kTransmittanceStop) break;
            }
        }
    return out;
}

/// Exhaustive nearest-neighbour Chamfer with the same distance expression
/// as the accelerated index.
inline double chamfer_reference(const std::vector<Eigen::Vector3d>& source,
                                const std::vector<Eigen::Vector3d>& target) {
    double sum = 0.0;
    for (const auto& s : source) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : target) {
            const double dx = s.x() - t.x(), dy = s.y() - t.y(), dz = s.z() - t.z();
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        sum += best;
    }
    return sum / static_cast<double>(source.size());
}

/// Direct-formula SSIM: per window, Gaussian-weighted means first, then
/// two-pass variances/covariance, then the Wang et al. ratio.
inline double ssim_reference(const semsplat::ImageBuffer& a, const semsplat::ImageBuffer& b) {
    std::vector<double> win(121);
    double wsum = 0.0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            const double dx = x - 5.0, dy = y - 5.0;
            win[static_cast<std::size_t>(y) * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += win[static_cast<std::size_t>(y) * 11 + x];
        }
    for (auto& v : win) v /= wsum;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y + 11 <= a.height; ++y)
            for (int x = 0; x + 11 <= a.width; ++x) {
                double mx = 0.0, my = 0.0;
                for (int wy = 0; wy < 11; ++wy)
                    for (int wx = 0; wx < 11; ++wx) {
                        const double wgt = win[static_cast<std::size_t>(wy) * 11 + wx];
                        mx += wgt * a.at(x + wx, y + wy, c);
                        my += wgt * b.at(x + wx, y + wy, c);
                    }
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int wy = 0; wy < 11; ++wy)
                    for (int wx = 0; wx < 11; ++wx) {
                        const double wgt = win[static_cast<std::size_t>(wy) * 11 + wx];
                        const double da = a.at(x + wx, y + wy, c) - mx;
                        const double db = b.at(x + wx, y + wy, c) - my;
                        vx += wgt * da * da;
                        vy += wgt * db * db;
                        cov += wgt * da * db;
                    }
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

/// Eigen's closed-form similarity estimate, as an independent check of the
/// alignment solver.
inline semsplat::SimilarityTransform umeyama_reference(const std::vector<Eigen::Vector3d>& src,
                                                       const std::vector<Eigen::Vector3d>& dst) {
    Eigen::Matrix3Xd s(3, static_cast<Eigen::Index>(src.size())), d(3, static_cast<Eigen::Index>(dst.size()));
    for (std::size_t i = 0; i < src.size(); ++i) {
        s.col(static_cast<Eigen::Index>(i)) = src[i];
        d.col(static_cast<Eigen::Index>(i)) = dst[i];
    }
    const Eigen::Matrix4d m = Eigen::umeyama(s, d, true);
    semsplat::SimilarityTransform t;
    const Eigen::Matrix3d sr = m.topLeftCorner<3, 3>();
    t.scale = std::cbrt(sr.determinant());
    t.rotation = sr / t.scale;
    t.translation = m.topRightCorner<3, 1>();
    return t;
}

/// Pure self-attention stack over one token block, written with the same
/// elementary operation order as the fusion kernels. Used for the
/// single-view degeneracy check.
inline semsplat::fusion::Mat self_attention_stack_reference(const semsplat::fusion::Mat& tokens,
                                                            const semsplat::FusionConfig& cfg,
                                                            const semsplat::FusionParams& params) {
    using semsplat::fusion::Mat;
    Mat x = tokens;
    const int d = cfg.d_t;
    const int dh = d / cfg.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int layer = 0; layer < cfg.layers; ++layer) {
        const auto& lp = params.layers[static_cast<std::size_t>(layer)];

        Mat normed(x.rows, d), q(x.rows, d), k(x.rows, d), v(x.rows, d);
        for (int r = 0; r < x.rows; ++r) {
            // LayerNorm
            double mean = 0.0;
            for (int i = 0; i < d; ++i) mean += x.at(r, i);
            mean /= d;
            double var = 0.0;
            for (int i = 0; i < d; ++i) var += (x.at(r, i) - mean) * (x.at(r, i) - mean);
            var /= d;
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (int i = 0; i < d; ++i)
                normed.at(r, i) = lp.ln1_gain[static_cast<std::size_t>(i)] * (x.at(r, i) - mean) * inv +
                                  lp.ln1_bias[static_cast<std::size_t>(i)];
            semsplat::fusion::matvec(lp.wq, normed.row(r), q.row(r));
            semsplat::fusion::matvec(lp.wk, normed.row(r), k.row(r));
            semsplat::fusion::matvec(lp.wv, normed.row(r), v.row(r));
        }

        std::vector<double> attn(static_cast<std::size_t>(d)), proj(static_cast<std::size_t>(d));
        Mat after_attn = x;
        for (int qr = 0; qr < x.rows; ++qr) {
            for (int h = 0; h < cfg.heads; ++h) {
                const int off = h * dh;
                std::vector<double> scores(static_cast<std::size_t>(x.rows));
                double max_score = -std::numeric_limits<double>::infinity();
                for (int kr = 0; kr < x.rows; ++kr) {
                    double s = 0.0;
                    for (int c = 0; c < dh; ++c) s += q.at(qr, off + c) * k.at(kr, off + c);
                    s *= inv_sqrt_dh;
                    scores[static_cast<std::size_t>(kr)] = s;
                    max_score = std::max(max_score, s);
                }
                double den = 0.0;
                for (int kr = 0; kr < x.rows; ++kr) den += std::exp(scores[static_cast<std::size_t>(kr)] - max_score);
                for (int c = 0; c < dh; ++c) {
                    double num = 0.0;
                    for (int kr = 0; kr < x.rows; ++kr)
                        num += std::exp(scores[static_cast<std::size_t>(kr)] - max_score) * v.at(kr, off + c);
                    attn[static_cast<std::size_t>(off + c)] = num / den;
                }
            }
            semsplat::fusion::matvec(lp.wo, attn.data(), proj.data());
            for (int c = 0; c < d; ++c) after_attn.at(qr, c) += proj[static_cast<std::size_t>(c)];
        }
        x = after_attn;

        // MLP block
        const int hidden = lp.mlp_w1.rows;
        std::vector<double> n2(static_cast<std::size_t>(d)), mid(static_cast<std::size_t>(hidden)),
            outv(static_cast<std::size_t>(d));
        for (int r = 0; r < x.rows; ++r) {
            double mean = 0.0;
            for (int i = 0; i < d; ++i) mean += x.at(r, i);
            mean /= d;
            double var = 0.0;
            for (int i = 0; i < d; ++i) var += (x.at(r, i) - mean) * (x.at(r, i) - mean);
            var /= d;
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (int i = 0; i < d; ++i)
                n2[static_cast<std::size_t>(i)] = lp.ln2_gain[static_cast<std::size_t>(i)] * (x.at(r, i) - mean) * inv +
                                                  lp.ln2_bias[static_cast<std::size_t>(i)];
            semsplat::fusion::matvec(lp.mlp_w1, n2.data(), mid.data());
            for (auto& m : mid) m = 0.5 * m * (1.0 + std::erf(m / 1.4142135623730951));
            semsplat::fusion::matvec(lp.mlp_w2, mid.data(), outv.data());
            for (int c = 0; c < d; ++c) x.at(r, c) += outv[static_cast<std::size_t>(c)];
        }
    }
    return x;
}

/// Minimal scalar Adam, independent of the library's vector version.
inline double adam_scalar_reference(double x0, double lr, int steps, const std::function<double(double)>& grad) {
    double x = x0, m = 0.0, v = 0.0;
    for (int t = 1; t <= steps; ++t) {
        const double g = grad(x);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        x -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    return x;
}

} // namespace oracles
