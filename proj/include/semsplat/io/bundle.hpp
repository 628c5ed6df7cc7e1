// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "semsplat/io/camera_io.hpp"
#include "semsplat/io/image_io.hpp"
#include "semsplat/io/scene_io.hpp"
#include "semsplat/io/semantic_io.hpp"
#include "semsplat/synth.hpp"

namespace semsplat {

namespace detail {

inline std::string view_tag(std::size_t v) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03zu", v);
    return buf;
}

} // namespace detail

/// Writes a fixture bundle directory: manifest, scene, codec, prototypes
/// and per-view FMAP products (plus a PPM preview of each color image).
inline void write_bundle(const std::string& dir, const Bundle& bundle) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base(dir);

    write_scene((base / "scene.sgs").string(), bundle.scene);
    write_codec((base / "codec.json").string(), bundle.codec);
    write_prototypes((base / "prototypes.json").string(), bundle.prototypes);

    nlohmann::json manifest;
    manifest["seed"] = bundle.seed;
    manifest["resolution"] = bundle.resolution;
    manifest["sem_dim"] = bundle.scene.sem_dim;
    manifest["compressed_dim"] = bundle.scene.compressed_dim;
    manifest["scene"] = "scene.sgs";
    manifest["codec"] = "codec.json";
    manifest["prototypes"] = "prototypes.json";
    manifest["views"] = nlohmann::json::array();

    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        const BundleView& view = bundle.views[v];
        const std::string tag = detail::view_tag(v);
        nlohmann::json jv;
        jv["camera"] = "cam_" + tag + ".json";
        jv["color"] = "color_" + tag + ".fmap";
        jv["preview"] = "color_" + tag + ".ppm";
        jv["teacher"] = "teacher_" + tag + ".fmap";
        jv["depth"] = "depth_" + tag + ".fmap";
        jv["alpha"] = "alpha_" + tag + ".fmap";
        jv["confidence"] = "conf_" + tag + ".fmap";
        jv["points"] = "points_" + tag + ".fmap";
        jv["labels"] = "labels_" + tag + ".fmap";
        manifest["views"].push_back(jv);

        write_camera((base / jv["camera"].get<std::string>()).string(), view.camera);
        write_fmap((base / jv["color"].get<std::string>()).string(), view.color);
        write_ppm((base / jv["preview"].get<std::string>()).string(), view.color);
        write_fmap((base / jv["teacher"].get<std::string>()).string(), view.teacher);
        write_fmap((base / jv["depth"].get<std::string>()).string(), view.depth);
        write_fmap((base / jv["alpha"].get<std::string>()).string(), view.alpha);
        write_fmap((base / jv["confidence"].get<std::string>()).string(), view.confidence);
        write_fmap((base / jv["points"].get<std::string>()).string(), view.points);
        write_fmap((base / jv["labels"].get<std::string>()).string(), view.labels);
    }

    std::ofstream out(base / "bundle.json");
    if (!out) throw std::runtime_error((base / "bundle.json").string() + ": cannot open for writing");
    out << manifest.dump(2) << "\n";
}

inline Bundle read_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    const std::string manifest_path = (base / "bundle.json").string();
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error(manifest_path + ": cannot open for reading");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(manifest_path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }

    Bundle bundle;
    bundle.seed = manifest.at("seed").get<std::uint64_t>();
    bundle.resolution = manifest.at("resolution").get<int>();
    bundle.scene = read_scene((base / manifest.at("scene").get<std::string>()).string());
    bundle.codec = read_codec((base / manifest.at("codec").get<std::string>()).string());
    bundle.prototypes = read_prototypes((base / manifest.at("prototypes").get<std::string>()).string());

    for (const auto& jv : manifest.at("views")) {
        BundleView view;
        view.camera = read_camera((base / jv.at("camera").get<std::string>()).string());
        view.color = read_fmap((base / jv.at("color").get<std::string>()).string());
        view.teacher = read_fmap((base / jv.at("teacher").get<std::string>()).string());
        view.depth = read_fmap((base / jv.at("depth").get<std::string>()).string());
        view.alpha = read_fmap((base / jv.at("alpha").get<std::string>()).string());
        view.confidence = read_fmap((base / jv.at("confidence").get<std::string>()).string());
        view.points = read_fmap((base / jv.at("points").get<std::string>()).string());
        view.labels = read_fmap((base / jv.at("labels").get<std::string>()).string());
        bundle.views.push_back(std::move(view));
    }
    return bundle;
}

} // namespace semsplat
