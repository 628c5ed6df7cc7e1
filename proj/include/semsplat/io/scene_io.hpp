// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "semsplat/core/scene.hpp"
#include "semsplat/io/binary.hpp"

namespace semsplat {

// Scene container "SGS1": header (u32 count, u32 d, u32 d_c, f64
// median_depth) followed by per-primitive f64 records in field declaration
// order: center, opacity_raw, opacity, color, scale_raw, scale,
// rotation_raw, rotation, sem_feature, sem_compressed. The compressed slot
// always holds d_c values (zeros when the codec has not run).

inline void write_scene(const std::string& path, const GaussianScene& scene) {
    BinaryWriter w(path);
    w.write_magic("SGS1");
    w.write_u32(static_cast<std::uint32_t>(scene.primitives.size()));
    w.write_u32(static_cast<std::uint32_t>(scene.sem_dim));
    w.write_u32(static_cast<std::uint32_t>(scene.compressed_dim));
    w.write_f64(scene.median_depth);
    for (const auto& p : scene.primitives) {
        for (int i = 0; i < 3; ++i) w.write_f64(p.center[i]);
        w.write_f64(p.opacity_raw);
        w.write_f64(p.opacity);
        for (int i = 0; i < 3; ++i) w.write_f64(p.color[i]);
        for (int i = 0; i < 3; ++i) w.write_f64(p.scale_raw[i]);
        for (int i = 0; i < 3; ++i) w.write_f64(p.scale[i]);
        for (int i = 0; i < 4; ++i) w.write_f64(p.rotation_raw[i]);
        for (int i = 0; i < 4; ++i) w.write_f64(p.rotation[i]);
        for (int i = 0; i < scene.sem_dim; ++i) w.write_f64(i < p.sem_feature.size() ? p.sem_feature[i] : 0.0);
        for (int i = 0; i < scene.compressed_dim; ++i)
            w.write_f64(i < p.sem_compressed.size() ? p.sem_compressed[i] : 0.0);
    }
}

inline GaussianScene read_scene(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("SGS1", "scene");
    GaussianScene scene;
    const std::uint32_t count = r.read_u32();
    scene.sem_dim = static_cast<int>(r.read_u32());
    scene.compressed_dim = static_cast<int>(r.read_u32());
    scene.median_depth = r.read_f64();
    if (count > (1u << 24) || scene.sem_dim > (1 << 16) || scene.compressed_dim > (1 << 16))
        throw std::runtime_error(path + ": implausible scene header at byte offset 4");
    scene.primitives.resize(count);
    for (auto& p : scene.primitives) {
        for (int i = 0; i < 3; ++i) p.center[i] = r.read_f64();
        p.opacity_raw = r.read_f64();
        p.opacity = r.read_f64();
        for (int i = 0; i < 3; ++i) p.color[i] = r.read_f64();
        for (int i = 0; i < 3; ++i) p.scale_raw[i] = r.read_f64();
        for (int i = 0; i < 3; ++i) p.scale[i] = r.read_f64();
        for (int i = 0; i < 4; ++i) p.rotation_raw[i] = r.read_f64();
        for (int i = 0; i < 4; ++i) p.rotation[i] = r.read_f64();
        p.sem_feature.resize(scene.sem_dim);
        for (int i = 0; i < scene.sem_dim; ++i) p.sem_feature[i] = r.read_f64();
        p.sem_compressed.resize(scene.compressed_dim);
        for (int i = 0; i < scene.compressed_dim; ++i) p.sem_compressed[i] = r.read_f64();
    }
    return scene;
}

// JSON twin with the same field names, for hand-authored test scenes.

inline nlohmann::json scene_to_json(const GaussianScene& scene) {
    nlohmann::json j;
    j["sem_dim"] = scene.sem_dim;
    j["compressed_dim"] = scene.compressed_dim;
    j["median_depth"] = scene.median_depth;
    j["primitives"] = nlohmann::json::array();
    for (const auto& p : scene.primitives) {
        nlohmann::json jp;
        jp["center"] = {p.center[0], p.center[1], p.center[2]};
        jp["opacity_raw"] = p.opacity_raw;
        jp["opacity"] = p.opacity;
        jp["color"] = {p.color[0], p.color[1], p.color[2]};
        jp["scale_raw"] = {p.scale_raw[0], p.scale_raw[1], p.scale_raw[2]};
        jp["scale"] = {p.scale[0], p.scale[1], p.scale[2]};
        jp["rotation_raw"] = {p.rotation_raw[0], p.rotation_raw[1], p.rotation_raw[2], p.rotation_raw[3]};
        jp["rotation"] = {p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3]};
        jp["sem_feature"] = std::vector<double>(p.sem_feature.data(), p.sem_feature.data() + p.sem_feature.size());
        jp["sem_compressed"] =
            std::vector<double>(p.sem_compressed.data(), p.sem_compressed.data() + p.sem_compressed.size());
        j["primitives"].push_back(std::move(jp));
    }
    return j;
}

inline GaussianScene scene_from_json(const nlohmann::json& j) {
    GaussianScene scene;
    scene.sem_dim = j.at("sem_dim").get<int>();
    scene.compressed_dim = j.at("compressed_dim").get<int>();
    scene.median_depth = j.at("median_depth").get<double>();
    for (const auto& jp : j.at("primitives")) {
        GaussianPrimitive p;
        for (int i = 0; i < 3; ++i) p.center[i] = jp.at("center").at(i).get<double>();
        p.opacity_raw = jp.at("opacity_raw").get<double>();
        p.opacity = jp.at("opacity").get<double>();
        for (int i = 0; i < 3; ++i) p.color[i] = jp.at("color").at(i).get<double>();
        for (int i = 0; i < 3; ++i) p.scale_raw[i] = jp.at("scale_raw").at(i).get<double>();
        for (int i = 0; i < 3; ++i) p.scale[i] = jp.at("scale").at(i).get<double>();
        for (int i = 0; i < 4; ++i) p.rotation_raw[i] = jp.at("rotation_raw").at(i).get<double>();
        for (int i = 0; i < 4; ++i) p.rotation[i] = jp.at("rotation").at(i).get<double>();
        const auto& feat = jp.at("sem_feature");
        p.sem_feature.resize(static_cast<Eigen::Index>(feat.size()));
        for (std::size_t i = 0; i < feat.size(); ++i) p.sem_feature[static_cast<Eigen::Index>(i)] = feat.at(i).get<double>();
        const auto& comp = jp.at("sem_compressed");
        p.sem_compressed.resize(static_cast<Eigen::Index>(comp.size()));
        for (std::size_t i = 0; i < comp.size(); ++i)
            p.sem_compressed[static_cast<Eigen::Index>(i)] = comp.at(i).get<double>();
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

inline void write_scene_json(const std::string& path, const GaussianScene& scene) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << scene_to_json(scene).dump(2) << "\n";
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline GaussianScene read_scene_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }
    return scene_from_json(j);
}

} // namespace semsplat
