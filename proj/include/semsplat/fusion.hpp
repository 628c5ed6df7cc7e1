// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "semsplat/core/camera.hpp"
#include "semsplat/core/image.hpp"
#include "semsplat/core/rng.hpp"

namespace semsplat {

// Full-scale settings from the reference configuration; the desk-scale
// defaults below exist so structural tests stay fast.
inline constexpr int kFullScaleFusionLayers = 24;
inline constexpr int kFullScalePatchSize = 16;

struct FusionConfig {
    int layers = 2; // full scale: kFullScaleFusionLayers
    int d_t = 32;
    int heads = 4;
    int patch = 4; // full scale: kFullScalePatchSize
};

inline void validate_fusion_config(const FusionConfig& cfg) {
    if (cfg.layers < 1) throw std::invalid_argument("fusion: layers must be >= 1");
    if (cfg.heads < 1 || cfg.d_t % cfg.heads != 0) throw std::invalid_argument("fusion: d_t must divide by heads");
    if (cfg.patch < 1) throw std::invalid_argument("fusion: patch must be >= 1");
}

namespace fusion {

/// Minimal row-major matrix. The fusion stack uses hand-written kernels
/// with a fixed summation order so its structural contracts (permutation
/// equivariance, single-view degeneracy) hold bit-exactly.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

inline void matvec(const Mat& w, const double* x, double* y) {
    for (int r = 0; r < w.rows; ++r) {
        double acc = 0.0;
        const double* wr = w.row(r);
        for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

/// Order-independent sum of a small set of partials (ascending by value).
inline double sorted_sum(std::vector<double>& vals) {
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / 1.4142135623730951)); }

} // namespace fusion

struct FusionLayerParams {
    fusion::Mat wq, wk, wv, wo; // d_t x d_t
    std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    fusion::Mat mlp_w1; // hidden x d_t
    fusion::Mat mlp_w2; // d_t x hidden
};

struct FusionParams {
    std::vector<FusionLayerParams> layers;
    fusion::Mat intrinsic_proj;        // k x 4, shared across views
    fusion::Mat patch_proj;            // d_t x (patch*patch*channels)
    fusion::Mat pos_embed;             // P x d_t, shared across views
    std::vector<double> camera_token;  // d_t, shared across views

    /// Seeded, frozen parameters (the toy is forward-only).
    static FusionParams seeded(const FusionConfig& cfg, std::uint64_t seed, int image_channels = 3,
                               int patches_per_view = 0, int embed_channels = 4) {
        validate_fusion_config(cfg);
        Rng rng(seed);
        const auto fill = [&](fusion::Mat& m, int r, int c, double scale) {
            m = fusion::Mat(r, c);
            for (auto& x : m.v) x = scale * rng.normal();
        };
        FusionParams p;
        p.layers.resize(static_cast<std::size_t>(cfg.layers));
        const double wscale = 1.0 / std::sqrt(static_cast<double>(cfg.d_t));
        const int hidden = 2 * cfg.d_t;
        for (auto& layer : p.layers) {
            fill(layer.wq, cfg.d_t, cfg.d_t, wscale);
            fill(layer.wk, cfg.d_t, cfg.d_t, wscale);
            fill(layer.wv, cfg.d_t, cfg.d_t, wscale);
            fill(layer.wo, cfg.d_t, cfg.d_t, wscale);
            layer.ln1_gain.resize(static_cast<std::size_t>(cfg.d_t));
            layer.ln1_bias.resize(static_cast<std::size_t>(cfg.d_t));
            layer.ln2_gain.resize(static_cast<std::size_t>(cfg.d_t));
            layer.ln2_bias.resize(static_cast<std::size_t>(cfg.d_t));
            for (int i = 0; i < cfg.d_t; ++i) {
                layer.ln1_gain[static_cast<std::size_t>(i)] = 1.0 + 0.05 * rng.normal();
                layer.ln1_bias[static_cast<std::size_t>(i)] = 0.05 * rng.normal();
                layer.ln2_gain[static_cast<std::size_t>(i)] = 1.0 + 0.05 * rng.normal();
                layer.ln2_bias[static_cast<std::size_t>(i)] = 0.05 * rng.normal();
            }
            fill(layer.mlp_w1, hidden, cfg.d_t, wscale);
            fill(layer.mlp_w2, cfg.d_t, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
        }
        fill(p.intrinsic_proj, embed_channels, 4, 1.0);
        const int flat = cfg.patch * cfg.patch * (image_channels + embed_channels);
        fill(p.patch_proj, cfg.d_t, flat, 1.0 / std::sqrt(static_cast<double>(flat)));
        if (patches_per_view > 0) fill(p.pos_embed, patches_per_view, cfg.d_t, 1.0);
        p.camera_token.resize(static_cast<std::size_t>(cfg.d_t));
        for (auto& x : p.camera_token) x = rng.normal();
        return p;
    }
};

/// Token sequences for N views: P patch tokens plus one trailing camera
/// token each, all d_t wide.
struct TokenSet {
    int tokens_per_view = 0; // P + 1
    int dim = 0;
    std::vector<fusion::Mat> views;
};

/// Normalized intrinsics (fx/w, fy/h, cx/w, cy/h) pushed through a linear
/// projection and broadcast over the image plane.
inline ImageBuffer intrinsic_embed(const Camera& cam, int width, int height, const fusion::Mat& proj) {
    if (proj.cols != 4) throw std::invalid_argument("intrinsic_embed: projection must have 4 columns");
    const double v[4] = {cam.fx / width, cam.fy / height, cam.cx / width, cam.cy / height};
    std::vector<double> e(static_cast<std::size_t>(proj.rows));
    fusion::matvec(proj, v, e.data());
    ImageBuffer out(width, height, proj.rows);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double* px = out.pixel(x, y);
            for (int c = 0; c < proj.rows; ++c) px[c] = e[static_cast<std::size_t>(c)];
        }
    return out;
}

/// Non-overlapping patch flattening (pixels row-major within the patch,
/// channels innermost) followed by a linear projection; patches ordered
/// row-major over the patch grid.
inline fusion::Mat tokenize(const ImageBuffer& image, int patch, const fusion::Mat& proj) {
    if (patch < 1 || image.width % patch != 0 || image.height % patch != 0)
        throw std::invalid_argument("tokenize: image dimensions must be divisible by the patch size");
    const int flat = patch * patch * image.channels;
    if (proj.cols != flat) throw std::invalid_argument("tokenize: projection width does not match patch size");
    const int px_count = image.width / patch;
    const int py_count = image.height / patch;
    fusion::Mat tokens(px_count * py_count, proj.rows);
    std::vector<double> buf(static_cast<std::size_t>(flat));
    for (int py = 0; py < py_count; ++py)
        for (int px = 0; px < px_count; ++px) {
            std::size_t k = 0;
            for (int dy = 0; dy < patch; ++dy)
                for (int dx = 0; dx < patch; ++dx) {
                    const double* p = image.pixel(px * patch + dx, py * patch + dy);
                    for (int c = 0; c < image.channels; ++c) buf[k++] = p[c];
                }
            fusion::matvec(proj, buf.data(), tokens.row(py * px_count + px));
        }
    return tokens;
}

/// Optional per-layer capture for structural assertions.
struct FuseTrace {
    // One entry per layer: every attention row sum (all heads and queries).
    std::vector<std::vector<double>> row_sums;
};

namespace fusion {

inline void layer_norm(const double* x, const std::vector<double>& gain, const std::vector<double>& bias,
                       int d, double* y) {
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += x[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int i = 0; i < d; ++i)
        y[i] = gain[static_cast<std::size_t>(i)] * (x[i] - mean) * inv + bias[static_cast<std::size_t>(i)];
}

/// Multi-head attention of every token in `blocks` against the union of
/// all blocks. Per-key partials are accumulated block-internally and the
/// cross-block reductions use sorted summation, so the result is invariant
/// under any reordering of the blocks (view-permutation equivariance holds
/// bit-exactly). Writes outputs in-place as x += Wo * attn.
inline void attend_blocks(std::vector<Mat*>& blocks, const FusionLayerParams& lp, int heads,
                          std::vector<double>* row_sums) {
    const int d = lp.wq.rows;
    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t nb = blocks.size();

    // Pre-normed projections per block.
    std::vector<Mat> normed(nb), q(nb), k(nb), v(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        const Mat& src = *blocks[b];
        normed[b] = Mat(src.rows, d);
        q[b] = Mat(src.rows, d);
        k[b] = Mat(src.rows, d);
        v[b] = Mat(src.rows, d);
        for (int r = 0; r < src.rows; ++r) {
            layer_norm(src.row(r), lp.ln1_gain, lp.ln1_bias, d, normed[b].row(r));
            matvec(lp.wq, normed[b].row(r), q[b].row(r));
            matvec(lp.wk, normed[b].row(r), k[b].row(r));
            matvec(lp.wv, normed[b].row(r), v[b].row(r));
        }
    }

    std::vector<double> attn(static_cast<std::size_t>(d));
    std::vector<double> proj(static_cast<std::size_t>(d));
    std::vector<double> den_parts, num_parts, sum_parts;
    std::vector<std::vector<double>> scores(nb);

    for (std::size_t qb = 0; qb < nb; ++qb) {
        Mat& out_block = *blocks[qb];
        for (int qr = 0; qr < q[qb].rows; ++qr) {
            const double* qrow = q[qb].row(qr);
            for (int h = 0; h < heads; ++h) {
                const int off = h * dh;
                // Scores per key block; global max is order-independent.
                double max_score = -std::numeric_limits<double>::infinity();
                for (std::size_t b = 0; b < nb; ++b) {
                    scores[b].resize(static_cast<std::size_t>(k[b].rows));
                    for (int kr = 0; kr < k[b].rows; ++kr) {
                        const double* krow = k[b].row(kr);
                        double s = 0.0;
                        for (int c = 0; c < dh; ++c) s += qrow[off + c] * krow[off + c];
                        s *= inv_sqrt_dh;
                        scores[b][static_cast<std::size_t>(kr)] = s;
                        max_score = std::max(max_score, s);
                    }
                }
                den_parts.clear();
                for (std::size_t b = 0; b < nb; ++b) {
                    double den_b = 0.0;
                    for (double s : scores[b]) den_b += std::exp(s - max_score);
                    den_parts.push_back(den_b);
                }
                std::vector<double> dp = den_parts;
                const double den = sorted_sum(dp);

                for (int c = 0; c < dh; ++c) {
                    num_parts.clear();
                    for (std::size_t b = 0; b < nb; ++b) {
                        double num_b = 0.0;
                        for (int kr = 0; kr < k[b].rows; ++kr)
                            num_b += std::exp(scores[b][static_cast<std::size_t>(kr)] - max_score) *
                                     v[b].at(kr, off + c);
                        num_parts.push_back(num_b);
                    }
                    attn[static_cast<std::size_t>(off + c)] = sorted_sum(num_parts) / den;
                }

                if (row_sums) {
                    sum_parts.clear();
                    for (std::size_t b = 0; b < nb; ++b) {
                        double part = 0.0;
                        for (double s : scores[b]) part += std::exp(s - max_score) / den;
                        sum_parts.push_back(part);
                    }
                    row_sums->push_back(sorted_sum(sum_parts));
                }
            }
            matvec(lp.wo, attn.data(), proj.data());
            double* out = out_block.row(qr);
            for (int c = 0; c < d; ++c) out[c] += proj[c];
        }
    }
}

inline void mlp_block(Mat& tokens, const FusionLayerParams& lp) {
    const int d = tokens.cols;
    const int hidden = lp.mlp_w1.rows;
    std::vector<double> normed(static_cast<std::size_t>(d));
    std::vector<double> mid(static_cast<std::size_t>(hidden));
    std::vector<double> out(static_cast<std::size_t>(d));
    for (int r = 0; r < tokens.rows; ++r) {
        layer_norm(tokens.row(r), lp.ln2_gain, lp.ln2_bias, d, normed.data());
        matvec(lp.mlp_w1, normed.data(), mid.data());
        for (auto& x : mid) x = gelu(x);
        matvec(lp.mlp_w2, mid.data(), out.data());
        double* t = tokens.row(r);
        for (int c = 0; c < d; ++c) t[c] += out[c];
    }
}

} // namespace fusion

/// Alternating intra-frame / cross-frame attention stack: odd layers
/// (1-based) attend within each view, even layers attend over the
/// concatenation of all views. Pre-norm attention and MLP, both residual.
/// Deterministic, forward-only.
inline TokenSet fuse(const TokenSet& tokens, const FusionConfig& cfg, const FusionParams& params,
                     FuseTrace* trace = nullptr) {
    validate_fusion_config(cfg);
    if (params.layers.size() != static_cast<std::size_t>(cfg.layers))
        throw std::invalid_argument("fuse: parameter layer count does not match config");
    for (const auto& v : tokens.views)
        if (v.rows != tokens.tokens_per_view || v.cols != cfg.d_t)
            throw std::invalid_argument("fuse: token set inconsistent with config");

    TokenSet out = tokens;
    if (trace) trace->row_sums.assign(static_cast<std::size_t>(cfg.layers), {});
    for (int layer = 0; layer < cfg.layers; ++layer) {
        const FusionLayerParams& lp = params.layers[static_cast<std::size_t>(layer)];
        std::vector<double>* sums = trace ? &trace->row_sums[static_cast<std::size_t>(layer)] : nullptr;
        const bool intra = (layer % 2 == 0);
        if (intra) {
            for (auto& view : out.views) {
                std::vector<fusion::Mat*> blocks{&view};
                fusion::attend_blocks(blocks, lp, cfg.heads, sums);
            }
        } else {
            std::vector<fusion::Mat*> blocks;
            for (auto& view : out.views) blocks.push_back(&view);
            fusion::attend_blocks(blocks, lp, cfg.heads, sums);
        }
        for (auto& view : out.views) fusion::mlp_block(view, lp);
    }
    return out;
}

/// Front end: intrinsic embedding, channel concat, patch tokenization,
/// positional offsets, camera token append.
inline TokenSet encode_views(const std::vector<ImageBuffer>& images, const std::vector<Camera>& cameras,
                             const FusionConfig& cfg, const FusionParams& params) {
    if (images.empty() || images.size() != cameras.size())
        throw std::invalid_argument("encode_views: need matched image/camera lists");
    TokenSet set;
    set.dim = cfg.d_t;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const ImageBuffer emb = intrinsic_embed(cameras[i], images[i].width, images[i].height, params.intrinsic_proj);
        const ImageBuffer stacked = concat_channels(images[i], emb);
        fusion::Mat patches = tokenize(stacked, cfg.patch, params.patch_proj);
        if (params.pos_embed.rows != patches.rows)
            throw std::invalid_argument("encode_views: positional embedding size mismatch");
        fusion::Mat view(patches.rows + 1, cfg.d_t);
        for (int r = 0; r < patches.rows; ++r)
            for (int c = 0; c < cfg.d_t; ++c) view.at(r, c) = patches.at(r, c) + params.pos_embed.at(r, c);
        for (int c = 0; c < cfg.d_t; ++c) view.at(patches.rows, c) = params.camera_token[static_cast<std::size_t>(c)];
        set.tokens_per_view = view.rows;
        set.views.push_back(std::move(view));
    }
    return set;
}

} // namespace semsplat
