// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "semsplat/core/image.hpp"
#include "semsplat/core/scene.hpp"
#include "semsplat/grad.hpp"

namespace semsplat {

inline constexpr double kZeroFeatureNorm = 1e-12;

/// Affine feature codec: encoder compresses d-dim semantic features to d_c
/// for rendering, decoder lifts rendered maps back to d. A single linear
/// layer each side keeps every gradient hand-derivable; depth is a config
/// knob for future extension.
struct FeatureCodec {
    Eigen::MatrixXd enc_weight; // d_c x d
    Eigen::VectorXd enc_bias;   // d_c
    Eigen::MatrixXd dec_weight; // d x d_c
    Eigen::VectorXd dec_bias;   // d

    int sem_dim() const { return static_cast<int>(enc_weight.cols()); }
    int compressed_dim() const { return static_cast<int>(enc_weight.rows()); }

    static FeatureCodec zeros(int d, int d_c) {
        FeatureCodec c;
        c.enc_weight = Eigen::MatrixXd::Zero(d_c, d);
        c.enc_bias = Eigen::VectorXd::Zero(d_c);
        c.dec_weight = Eigen::MatrixXd::Zero(d, d_c);
        c.dec_bias = Eigen::VectorXd::Zero(d);
        return c;
    }
};

/// Text-derived class prototypes, one row per category.
struct PrototypeSet {
    Eigen::MatrixXd prototypes; // N_C x d
    std::vector<std::string> labels;

    int num_classes() const { return static_cast<int>(prototypes.rows()); }
    int dim() const { return static_cast<int>(prototypes.cols()); }
};

inline void require_codec_matches(const FeatureCodec& codec, int sem_dim, int compressed_dim, const char* what) {
    if (codec.sem_dim() != sem_dim || codec.compressed_dim() != compressed_dim ||
        codec.enc_bias.size() != compressed_dim || codec.dec_weight.rows() != sem_dim ||
        codec.dec_weight.cols() != compressed_dim || codec.dec_bias.size() != sem_dim)
        throw std::invalid_argument(std::string(what) + ": codec dimensions do not match scene");
}

/// Returns a copy of the scene with sem_compressed = enc(sem_feature) for
/// every primitive.
inline GaussianScene encode_features(const GaussianScene& scene, const FeatureCodec& codec) {
    require_codec_matches(codec, scene.sem_dim, scene.compressed_dim, "encode_features");
    GaussianScene out = scene;
    for (auto& p : out.primitives) {
        if (p.sem_feature.size() != scene.sem_dim)
            throw std::invalid_argument("encode_features: primitive feature dimension mismatch");
        p.sem_compressed = codec.enc_weight * p.sem_feature + codec.enc_bias;
    }
    return out;
}

/// Per-pixel affine decode of a rendered d_c-channel map to d channels.
inline ImageBuffer decode_features(const ImageBuffer& rendered, const FeatureCodec& codec) {
    if (rendered.channels != codec.compressed_dim())
        throw std::invalid_argument("decode_features: channel count does not match codec");
    const int d = codec.sem_dim(), dc = codec.compressed_dim();
    ImageBuffer out(rendered.width, rendered.height, d);
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            const double* in = rendered.pixel(x, y);
            double* dst = out.pixel(x, y);
            for (int r = 0; r < d; ++r) {
                double acc = codec.dec_bias[r];
                for (int c = 0; c < dc; ++c) acc += codec.dec_weight(r, c) * in[c];
                dst[r] = acc;
            }
        }
    return out;
}

struct SegmentationResult {
    ImageBuffer logits; // N_C channels, softmax over classes
    ImageBuffer labels; // 1 channel, class index; num_classes marks void
};

/// Open-vocabulary segmentation: cosine similarity against every prototype,
/// softmax over classes, argmax labels. Pixels whose feature norm is below
/// kZeroFeatureNorm get the void sentinel (index N_C) and uniform logits.
inline SegmentationResult segment(const ImageBuffer& decoded, const PrototypeSet& protos) {
    if (decoded.channels != protos.dim())
        throw std::invalid_argument("segment: feature dimension does not match prototypes");
    const int nc = protos.num_classes(), d = protos.dim();
    std::vector<double> proto_norms(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) proto_norms[static_cast<std::size_t>(c)] = protos.prototypes.row(c).norm();

    SegmentationResult res{ImageBuffer(decoded.width, decoded.height, nc),
                           ImageBuffer(decoded.width, decoded.height, 1)};
    std::vector<double> sims(static_cast<std::size_t>(nc));
    for (int y = 0; y < decoded.height; ++y)
        for (int x = 0; x < decoded.width; ++x) {
            const double* f = decoded.pixel(x, y);
            double norm2 = 0.0;
            for (int k = 0; k < d; ++k) norm2 += f[k] * f[k];
            const double norm = std::sqrt(norm2);

            int best = nc; // void
            if (norm >= kZeroFeatureNorm) {
                double best_sim = -2.0;
                for (int c = 0; c < nc; ++c) {
                    double dot = 0.0;
                    for (int k = 0; k < d; ++k) dot += protos.prototypes(c, k) * f[k];
                    sims[static_cast<std::size_t>(c)] = dot / (proto_norms[static_cast<std::size_t>(c)] * norm);
                    if (sims[static_cast<std::size_t>(c)] > best_sim) {
                        best_sim = sims[static_cast<std::size_t>(c)];
                        best = c;
                    }
                }
            } else {
                for (int c = 0; c < nc; ++c) sims[static_cast<std::size_t>(c)] = 0.0;
            }

            double max_sim = sims[0];
            for (int c = 1; c < nc; ++c) max_sim = std::max(max_sim, sims[static_cast<std::size_t>(c)]);
            double denom = 0.0;
            double* logit = res.logits.pixel(x, y);
            for (int c = 0; c < nc; ++c) {
                logit[c] = std::exp(sims[static_cast<std::size_t>(c)] - max_sim);
                denom += logit[c];
            }
            for (int c = 0; c < nc; ++c) logit[c] /= denom;
            res.labels.at(x, y, 0) = static_cast<double>(best);
        }
    return res;
}

/// Adjoint of decode_features: returns the gradient on the rendered
/// d_c-channel map and accumulates decoder parameter gradients.
inline ImageBuffer decode_backward(const ImageBuffer& rendered, const FeatureCodec& codec,
                                   const ImageBuffer& upstream, CodecGrads* codec_grads) {
    if (rendered.channels != codec.compressed_dim())
        throw std::invalid_argument("decode_backward: channel count does not match codec");
    if (upstream.width != rendered.width || upstream.height != rendered.height ||
        upstream.channels != codec.sem_dim())
        throw std::invalid_argument("decode_backward: upstream shape mismatch");
    const int d = codec.sem_dim(), dc = codec.compressed_dim();
    ImageBuffer grad_in(rendered.width, rendered.height, dc);
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            const double* in = rendered.pixel(x, y);
            const double* up = upstream.pixel(x, y);
            double* gi = grad_in.pixel(x, y);
            for (int c = 0; c < dc; ++c) {
                double acc = 0.0;
                for (int r = 0; r < d; ++r) acc += codec.dec_weight(r, c) * up[r];
                gi[c] = acc;
            }
            if (codec_grads) {
                for (int r = 0; r < d; ++r) {
                    codec_grads->dec_bias[r] += up[r];
                    for (int c = 0; c < dc; ++c) codec_grads->dec_weight(r, c) += up[r] * in[c];
                }
            }
        }
    return grad_in;
}

/// Adjoint of encode_features: per-primitive upstream on sem_compressed is
/// pulled back to sem_feature and the encoder parameters.
inline void encode_backward(const GaussianScene& scene, const FeatureCodec& codec,
                            const std::vector<Eigen::VectorXd>& upstream_compressed,
                            std::vector<Eigen::VectorXd>* grad_features, CodecGrads* codec_grads) {
    require_codec_matches(codec, scene.sem_dim, scene.compressed_dim, "encode_backward");
    if (upstream_compressed.size() != scene.primitives.size())
        throw std::invalid_argument("encode_backward: upstream count mismatch");
    if (grad_features) grad_features->assign(scene.primitives.size(), Eigen::VectorXd::Zero(scene.sem_dim));
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const Eigen::VectorXd& up = upstream_compressed[i];
        if (up.size() != scene.compressed_dim)
            throw std::invalid_argument("encode_backward: upstream dimension mismatch");
        if (grad_features) (*grad_features)[i] = codec.enc_weight.transpose() * up;
        if (codec_grads) {
            codec_grads->enc_weight += up * scene.primitives[i].sem_feature.transpose();
            codec_grads->enc_bias += up;
        }
    }
}

} // namespace semsplat
