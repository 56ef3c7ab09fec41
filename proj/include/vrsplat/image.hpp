// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrsplat/error.hpp"

namespace vrsplat {

// Row-major H x W x 3 image, values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int height, int width, double fill = 0.0)
        : height_(height), width_(width), data_(static_cast<size_t>(height) * width * 3, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }

    double& at(int y, int x, int c) { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

// Single-channel H x W grid of doubles (depth maps, masks, weights).
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, double fill = 0.0)
        : height_(height), width_(width), data_(static_cast<size_t>(height) * width, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }

    double& at(int y, int x) { return data_[static_cast<size_t>(y) * width_ + x]; }
    double at(int y, int x) const { return data_[static_cast<size_t>(y) * width_ + x]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

// Per-camera positive depth grid; one Grid per camera of a rig.
struct DepthMap {
    std::vector<Grid> views;

    int num_views() const { return static_cast<int>(views.size()); }
};

// N x C x H x W feature tensor with consistent (C, H, W) across views.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int num_views, int channels, int height, int width)
        : n_(num_views), c_(channels), h_(height), w_(width),
          data_(static_cast<size_t>(num_views) * channels * height * width, 0.0) {}

    int num_views() const { return n_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }

    double& at(int n, int c, int y, int x) {
        return data_[((static_cast<size_t>(n) * c_ + c) * h_ + y) * w_ + x];
    }
    double at(int n, int c, int y, int x) const {
        return data_[((static_cast<size_t>(n) * c_ + c) * h_ + y) * w_ + x];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

// Mean squared error over all pixels and channels. Shapes must match.
double image_mse(const Image& a, const Image& b);

// Peak signal-to-noise ratio in dB, peak 1.0. Returns +infinity for identical images.
double psnr(const Image& a, const Image& b);

// 8-bit PNG export (values clamped to [0,1] then quantized).
void write_png(const std::string& path, const Image& image);

// Raw float32 image dump: magic "VRIM", u32 height, u32 width, u32 channels,
// then little-endian float32 data in H x W x C order. Exact format for tests.
void write_raw(const std::string& path, const Image& image);
Image read_raw(const std::string& path);

}  // namespace vrsplat
