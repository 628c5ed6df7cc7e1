// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "semsplat/core/image.hpp"
#include "semsplat/io/image_io.hpp"
#include "semsplat/semantic.hpp"

namespace semsplat {

namespace detail {

inline ImageBuffer matrix_to_fmap(const Eigen::MatrixXd& m) {
    ImageBuffer buf(static_cast<int>(m.cols()), static_cast<int>(m.rows()), 1);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) buf.at(c, r, 0) = m(r, c);
    return buf;
}

inline Eigen::MatrixXd fmap_to_matrix(const ImageBuffer& buf) {
    if (buf.channels != 1) throw std::runtime_error("matrix FMAP must be single-channel");
    Eigen::MatrixXd m(buf.height, buf.width);
    for (int r = 0; r < buf.height; ++r)
        for (int c = 0; c < buf.width; ++c) m(r, c) = buf.at(c, r, 0);
    return m;
}

} // namespace detail

/// Prototype file pair: <path>.json holds {labels, dim} and names the FMAP
/// holding the N_C x d matrix (rows = classes).
inline void write_prototypes(const std::string& json_path, const PrototypeSet& protos) {
    const std::filesystem::path base(json_path);
    const std::string fmap_name = base.stem().string() + ".fmap";
    nlohmann::json j;
    j["labels"] = protos.labels;
    j["dim"] = protos.dim();
    j["matrix"] = fmap_name;
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error(json_path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    write_fmap((base.parent_path() / fmap_name).string(), detail::matrix_to_fmap(protos.prototypes));
}

inline PrototypeSet read_prototypes(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error(json_path + ": cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(json_path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }
    PrototypeSet protos;
    protos.labels = j.at("labels").get<std::vector<std::string>>();
    const std::filesystem::path base(json_path);
    protos.prototypes =
        detail::fmap_to_matrix(read_fmap((base.parent_path() / j.at("matrix").get<std::string>()).string()));
    if (protos.prototypes.cols() != j.at("dim").get<int>())
        throw std::runtime_error(json_path + ": prototype matrix width does not match dim");
    if (protos.prototypes.rows() != static_cast<Eigen::Index>(protos.labels.size()))
        throw std::runtime_error(json_path + ": label count does not match matrix rows");
    return protos;
}

/// Codec manifest: <path>.json names four FMAP parameter blocks.
inline void write_codec(const std::string& json_path, const FeatureCodec& codec) {
    const std::filesystem::path base(json_path);
    const std::string stem = base.stem().string();
    nlohmann::json j;
    j["sem_dim"] = codec.sem_dim();
    j["compressed_dim"] = codec.compressed_dim();
    j["enc_weight"] = stem + "_enc_w.fmap";
    j["enc_bias"] = stem + "_enc_b.fmap";
    j["dec_weight"] = stem + "_dec_w.fmap";
    j["dec_bias"] = stem + "_dec_b.fmap";
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error(json_path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    const auto dir = base.parent_path();
    write_fmap((dir / (stem + "_enc_w.fmap")).string(), detail::matrix_to_fmap(codec.enc_weight));
    write_fmap((dir / (stem + "_enc_b.fmap")).string(), detail::matrix_to_fmap(codec.enc_bias.transpose()));
    write_fmap((dir / (stem + "_dec_w.fmap")).string(), detail::matrix_to_fmap(codec.dec_weight));
    write_fmap((dir / (stem + "_dec_b.fmap")).string(), detail::matrix_to_fmap(codec.dec_bias.transpose()));
}

inline FeatureCodec read_codec(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error(json_path + ": cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(json_path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }
    const std::filesystem::path dir = std::filesystem::path(json_path).parent_path();
    FeatureCodec codec;
    codec.enc_weight = detail::fmap_to_matrix(read_fmap((dir / j.at("enc_weight").get<std::string>()).string()));
    codec.enc_bias = detail::fmap_to_matrix(read_fmap((dir / j.at("enc_bias").get<std::string>()).string())).row(0);
    codec.dec_weight = detail::fmap_to_matrix(read_fmap((dir / j.at("dec_weight").get<std::string>()).string()));
    codec.dec_bias = detail::fmap_to_matrix(read_fmap((dir / j.at("dec_bias").get<std::string>()).string())).row(0);
    if (codec.sem_dim() != j.at("sem_dim").get<int>() || codec.compressed_dim() != j.at("compressed_dim").get<int>())
        throw std::runtime_error(json_path + ": codec block dimensions disagree with manifest");
    return codec;
}

} // namespace semsplat
