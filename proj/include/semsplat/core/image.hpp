// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace semsplat {

/// Dense per-pixel tensor, row-major with interleaved channels.
/// Element (x, y, c) lives at data[(y * width + x) * channels + c].
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
        if (w < 0 || h < 0 || c < 0) throw std::invalid_argument("ImageBuffer: negative dimension");
    }

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(channels) +
                    static_cast<std::size_t>(c)];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                        static_cast<std::size_t>(channels) +
                    static_cast<std::size_t>(c)];
    }

    const double* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                                 static_cast<std::size_t>(channels);
    }
    double* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                                 static_cast<std::size_t>(channels);
    }

    bool same_shape(const ImageBuffer& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const std::string& what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(what + ": shape mismatch (" + std::to_string(a.width) + "x" +
                                    std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                                    std::to_string(b.channels) + ")");
}

/// Channel-wise concatenation (same spatial dims).
inline ImageBuffer concat_channels(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("concat_channels: spatial dims differ");
    ImageBuffer out(a.width, a.height, a.channels + b.channels);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            double* dst = out.pixel(x, y);
            const double* pa = a.pixel(x, y);
            const double* pb = b.pixel(x, y);
            for (int c = 0; c < a.channels; ++c) dst[c] = pa[c];
            for (int c = 0; c < b.channels; ++c) dst[a.channels + c] = pb[c];
        }
    return out;
}

} // namespace semsplat
