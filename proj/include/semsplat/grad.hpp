// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "semsplat/core/scene.hpp"

namespace semsplat {

struct CodecGrads {
    Eigen::MatrixXd enc_weight; // d_c x d
    Eigen::VectorXd enc_bias;   // d_c
    Eigen::MatrixXd dec_weight; // d x d_c
    Eigen::VectorXd dec_bias;   // d

    static CodecGrads zeros(int sem_dim, int compressed_dim) {
        CodecGrads g;
        g.enc_weight = Eigen::MatrixXd::Zero(compressed_dim, sem_dim);
        g.enc_bias = Eigen::VectorXd::Zero(compressed_dim);
        g.dec_weight = Eigen::MatrixXd::Zero(sem_dim, compressed_dim);
        g.dec_bias = Eigen::VectorXd::Zero(sem_dim);
        return g;
    }

    void axpy(double w, const CodecGrads& other) {
        enc_weight += w * other.enc_weight;
        enc_bias += w * other.enc_bias;
        dec_weight += w * other.dec_weight;
        dec_bias += w * other.dec_bias;
    }
};

/// Gradients of one scalar loss with respect to every Gaussian latent and
/// the feature-codec parameters. Laid out parallel to the scene's
/// primitive list.
struct GradientBundle {
    std::vector<Eigen::Vector3d> center;
    std::vector<double> opacity_raw;
    std::vector<Eigen::Vector3d> color;
    std::vector<Eigen::Vector3d> scale_raw;
    std::vector<Eigen::Vector4d> rotation_raw;
    std::vector<Eigen::VectorXd> sem_compressed;
    std::vector<Eigen::VectorXd> sem_feature;
    CodecGrads codec;

    static GradientBundle zeros(const GaussianScene& scene) {
        GradientBundle g;
        const std::size_t n = scene.primitives.size();
        g.center.assign(n, Eigen::Vector3d::Zero());
        g.opacity_raw.assign(n, 0.0);
        g.color.assign(n, Eigen::Vector3d::Zero());
        g.scale_raw.assign(n, Eigen::Vector3d::Zero());
        g.rotation_raw.assign(n, Eigen::Vector4d::Zero());
        g.sem_compressed.assign(n, Eigen::VectorXd::Zero(scene.compressed_dim));
        g.sem_feature.assign(n, Eigen::VectorXd::Zero(scene.sem_dim));
        g.codec = CodecGrads::zeros(scene.sem_dim, scene.compressed_dim);
        return g;
    }

    /// this += w * other, parameter-wise.
    void axpy(double w, const GradientBundle& other) {
        if (center.size() != other.center.size()) throw std::invalid_argument("GradientBundle: size mismatch");
        for (std::size_t i = 0; i < center.size(); ++i) {
            center[i] += w * other.center[i];
            opacity_raw[i] += w * other.opacity_raw[i];
            color[i] += w * other.color[i];
            scale_raw[i] += w * other.scale_raw[i];
            rotation_raw[i] += w * other.rotation_raw[i];
            sem_compressed[i] += w * other.sem_compressed[i];
            sem_feature[i] += w * other.sem_feature[i];
        }
        codec.axpy(w, other.codec);
    }

    bool all_finite() const {
        const auto ok = [](double v) { return std::isfinite(v); };
        for (std::size_t i = 0; i < center.size(); ++i) {
            if (!center[i].allFinite() || !ok(opacity_raw[i]) || !color[i].allFinite() ||
                !scale_raw[i].allFinite() || !rotation_raw[i].allFinite() || !sem_compressed[i].allFinite() ||
                !sem_feature[i].allFinite())
                return false;
        }
        return codec.enc_weight.allFinite() && codec.enc_bias.allFinite() && codec.dec_weight.allFinite() &&
               codec.dec_bias.allFinite();
    }
};

} // namespace semsplat
