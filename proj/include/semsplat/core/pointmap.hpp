// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "semsplat/core/camera.hpp"
#include "semsplat/core/image.hpp"

namespace semsplat {

/// Dense per-pixel reference geometry: a 3D point and a confidence score
/// per pixel, standing in for a frozen geometry model's prediction.
struct ReferencePointMap {
    int width = 0;
    int height = 0;
    std::vector<Eigen::Vector3d> points;  // row-major, width*height
    std::vector<double> confidence;       // row-major, width*height
};

struct PredictedPointMap {
    int width = 0;
    int height = 0;
    std::vector<Eigen::Vector3d> points;
};

/// Binary pixel mask selecting the geometry-supervision subset.
struct GeometryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;
    double ratio = 1.0;

    std::size_t count() const {
        std::size_t n = 0;
        for (auto m : mask) n += (m != 0);
        return n;
    }
};

/// Lifts a rendered depth buffer back to world-space points. Pixel (x, y)
/// samples the ray through the integer pixel coordinate, matching the
/// renderer's sampling convention.
inline PredictedPointMap unproject_depth(const ImageBuffer& depth, const Camera& cam) {
    if (depth.channels != 1) throw std::invalid_argument("unproject_depth: depth must be single-channel");
    PredictedPointMap out;
    out.width = depth.width;
    out.height = depth.height;
    out.points.resize(depth.pixel_count());
    const Eigen::Matrix3d rt = cam.rotation.transpose();
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            const double z = depth.at(x, y, 0);
            const Eigen::Vector3d dir((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
            out.points[static_cast<std::size_t>(y) * depth.width + x] = rt * (dir * z - cam.translation);
        }
    return out;
}

/// Chain rule for unproject_depth: folds per-point gradients back onto the
/// depth buffer they came from.
inline ImageBuffer unproject_depth_backward(const std::vector<Eigen::Vector3d>& point_grads, int width, int height,
                                            const Camera& cam) {
    if (point_grads.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw std::invalid_argument("unproject_depth_backward: gradient count mismatch");
    ImageBuffer grad(width, height, 1);
    const Eigen::Matrix3d rt = cam.rotation.transpose();
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const Eigen::Vector3d dir((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
            grad.at(x, y, 0) = (rt * dir).dot(point_grads[static_cast<std::size_t>(y) * width + x]);
        }
    return grad;
}

} // namespace semsplat
