// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "semsplat/core/camera.hpp"

namespace semsplat {

inline nlohmann::json camera_to_json(const Camera& cam) {
    nlohmann::json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<double> rot;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
    j["rotation"] = rot;
    j["translation"] = {cam.translation[0], cam.translation[1], cam.translation[2]};
    return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto& rot = j.at("rotation");
    if (rot.size() != 9) throw std::runtime_error("camera: rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot.at(static_cast<std::size_t>(r * 3 + c)).get<double>();
    for (int i = 0; i < 3; ++i) cam.translation[i] = j.at("translation").at(i).get<double>();
    return cam;
}

inline void write_camera(const std::string& path, const Camera& cam) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << camera_to_json(cam).dump(2) << "\n";
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline Camera read_camera(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }
    Camera cam = camera_from_json(j);
    const auto violations = validate_camera(cam);
    if (!violations.empty()) throw std::runtime_error(path + ": " + violations.front());
    return cam;
}

} // namespace semsplat
