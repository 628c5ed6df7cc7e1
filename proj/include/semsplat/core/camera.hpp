// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <string>
#include <vector>

namespace semsplat {

/// Pinhole camera: intrinsics in pixels plus a rigid world-to-camera pose.
/// A world point p maps to camera space as R * p + t.
struct Camera {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
    Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const { return rotation.transpose() * (cam - translation); }
};

inline std::vector<std::string> validate_camera(const Camera& cam) {
    std::vector<std::string> v;
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) v.push_back("camera: focal lengths must be positive");
    if (cam.width <= 0 || cam.height <= 0) v.push_back("camera: image dimensions must be positive");
    if (!(cam.cx >= 0.0 && cam.cx < cam.width)) v.push_back("camera: principal point cx outside [0, width)");
    if (!(cam.cy >= 0.0 && cam.cy < cam.height)) v.push_back("camera: principal point cy outside [0, height)");
    const Eigen::Matrix3d gram = cam.rotation.transpose() * cam.rotation - Eigen::Matrix3d::Identity();
    if (gram.cwiseAbs().maxCoeff() >= 1e-9) v.push_back("camera: pose rotation not orthonormal");
    if (std::abs(cam.rotation.determinant() - 1.0) >= 1e-9) v.push_back("camera: pose rotation determinant != 1");
    return v;
}

/// Camera at `position` looking toward `target` with the given up hint.
inline Camera look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                             const Eigen::Vector3d& up, double fx, double fy, int width, int height) {
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    const Eigen::Vector3d forward = (target - position).normalized();
    Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    // Rows of R are the camera axes: +x right, +y down, +z forward.
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * position;
    return cam;
}

} // namespace semsplat
