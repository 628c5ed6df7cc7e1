// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semsplat/core/image.hpp"

namespace semsplat {

inline constexpr double kTauThreshold = 1.03;

struct MetricReport {
    double psnr = 0.0; // dB; +inf for identical images
    double ssim = 0.0;
    double rel = 0.0; // percent
    double tau = 0.0; // percent
    double miou = 0.0;
    double acc = 0.0;
    std::map<std::string, double> per_class_iou;
};

/// 10 log10(1 / MSE) for values in [0, 1]; identical inputs give +inf.
inline double psnr(const ImageBuffer& pred, const ImageBuffer& gt) {
    require_same_shape(pred, gt, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> ssim_window() {
    // 11x11 Gaussian, sigma 1.5, normalized.
    std::vector<double> w(121);
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            const double dx = x - 5.0, dy = y - 5.0;
            w[static_cast<std::size_t>(y) * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            sum += w[static_cast<std::size_t>(y) * 11 + x];
        }
    for (auto& v : w) v /= sum;
    return w;
}

} // namespace detail

/// Mean SSIM over all fully-interior 11x11 windows (Gaussian weighted,
/// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2), averaged over channels.
inline double ssim(const ImageBuffer& pred, const ImageBuffer& gt) {
    require_same_shape(pred, gt, "ssim");
    if (pred.width < 11 || pred.height < 11) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    static const std::vector<double> window = detail::ssim_window();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < pred.channels; ++c)
        for (int y = 0; y + 11 <= pred.height; ++y)
            for (int x = 0; x + 11 <= pred.width; ++x) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int wy = 0; wy < 11; ++wy)
                    for (int wx = 0; wx < 11; ++wx) {
                        const double wgt = window[static_cast<std::size_t>(wy) * 11 + wx];
                        const double a = pred.at(x + wx, y + wy, c);
                        const double b = gt.at(x + wx, y + wy, c);
                        mx += wgt * a;
                        my += wgt * b;
                        xx += wgt * a * a;
                        yy += wgt * b * b;
                        xy += wgt * a * b;
                    }
                const double vx = xx - mx * mx;
                const double vy = yy - my * my;
                const double cov = xy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

/// Absolute relative error (percent) and inlier ratio tau (percent,
/// max(pred/gt, gt/pred) < 1.03) over valid pixels. A pixel is valid when
/// the mask (if given) exceeds 0.5 and gt is finite and positive;
/// non-positive predictions are never inliers.
inline std::pair<double, double> depth_metrics(const ImageBuffer& pred_depth, const ImageBuffer& gt_depth,
                                               const ImageBuffer* valid_mask = nullptr) {
    require_same_shape(pred_depth, gt_depth, "depth_metrics");
    if (pred_depth.channels != 1) throw std::invalid_argument("depth_metrics: depth must be single-channel");
    if (valid_mask && (valid_mask->width != pred_depth.width || valid_mask->height != pred_depth.height))
        throw std::invalid_argument("depth_metrics: mask shape mismatch");

    double rel_sum = 0.0;
    std::size_t inliers = 0, valid = 0;
    for (int y = 0; y < pred_depth.height; ++y)
        for (int x = 0; x < pred_depth.width; ++x) {
            const double g = gt_depth.at(x, y, 0);
            if (!std::isfinite(g) || g <= 0.0) continue;
            if (valid_mask && valid_mask->at(x, y, 0) <= 0.5) continue;
            const double p = pred_depth.at(x, y, 0);
            ++valid;
            rel_sum += std::abs(p - g) / g;
            if (p > 0.0 && std::max(p / g, g / p) < kTauThreshold) ++inliers;
        }
    if (valid == 0) throw std::runtime_error("depth_metrics: no valid pixels");
    return {100.0 * rel_sum / static_cast<double>(valid),
            100.0 * static_cast<double>(inliers) / static_cast<double>(valid)};
}

struct SegMetrics {
    double miou = 0.0;
    double acc = 0.0;
    std::vector<double> per_class_iou; // NaN for classes absent from gt
};

/// Confusion-matrix segmentation metrics. Labels equal to num_classes mark
/// void; pixels whose ground truth is void are excluded entirely, and the
/// mIoU mean runs over classes present in the ground truth.
inline SegMetrics seg_metrics(const ImageBuffer& pred_labels, const ImageBuffer& gt_labels, int num_classes) {
    require_same_shape(pred_labels, gt_labels, "seg_metrics");
    if (pred_labels.channels != 1) throw std::invalid_argument("seg_metrics: labels must be single-channel");
    std::vector<std::size_t> tp(static_cast<std::size_t>(num_classes), 0), fp(static_cast<std::size_t>(num_classes), 0),
        fn(static_cast<std::size_t>(num_classes), 0);
    std::size_t correct = 0, valid = 0;
    for (std::size_t i = 0; i < pred_labels.data.size(); ++i) {
        const int g = static_cast<int>(std::lround(gt_labels.data[i]));
        if (g < 0 || g >= num_classes) continue; // gt void
        const int p = static_cast<int>(std::lround(pred_labels.data[i]));
        ++valid;
        if (p == g) {
            ++correct;
            ++tp[static_cast<std::size_t>(g)];
        } else {
            ++fn[static_cast<std::size_t>(g)];
            if (p >= 0 && p < num_classes) ++fp[static_cast<std::size_t>(p)];
        }
    }
    if (valid == 0) throw std::runtime_error("seg_metrics: no valid pixels");

    SegMetrics out;
    out.acc = static_cast<double>(correct) / static_cast<double>(valid);
    out.per_class_iou.assign(static_cast<std::size_t>(num_classes), std::numeric_limits<double>::quiet_NaN());
    double iou_sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        if (tp[ci] + fn[ci] == 0) continue; // class absent from gt
        const double iou = static_cast<double>(tp[ci]) / static_cast<double>(tp[ci] + fp[ci] + fn[ci]);
        out.per_class_iou[ci] = iou;
        iou_sum += iou;
        ++present;
    }
    out.miou = present > 0 ? iou_sum / present : 0.0;
    return out;
}

} // namespace semsplat
