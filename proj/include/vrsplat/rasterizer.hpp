// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "vrsplat/gaussians.hpp"
#include "vrsplat/geometry.hpp"
#include "vrsplat/image.hpp"

namespace vrsplat {

struct RenderOptions {
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    double far_depth = 100.0;  // depth assigned to leftover transmittance
    // Transmittance below this ends per-pixel compositing in the tile path;
    // the reference path always uses 0. The leftover transmittance bounds the
    // deviation from the reference, so this sits well under the 1e-5 oracle
    // tolerance.
    double termination_threshold = 1e-6;
    int tile_size = 16;
    double lowpass = 0.3;  // pixel^2 floor added to the 2D covariance
};

// A Gaussian's contribution is alpha * exp(power) and is exactly zero beyond
// the 3-sigma ellipse (power < kPowerCutoff). Both rasterization paths share
// this kernel, so they differ only by early termination.
constexpr double kPowerCutoff = -4.5;

struct RenderTarget {
    Image color;               // H x W x 3 in [0, 1]
    Grid alpha;                // accumulated opacity in [0, 1]
    Grid depth;                // alpha-weighted expected depth, meters
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

struct Splat2D {
    Eigen::Vector2d mean2d;    // pixels
    Eigen::Matrix2d cov2d;     // pixels^2, includes the low-pass floor
    double depth = 0.0;        // camera-frame z, meters
    double opacity = 0.0;
    Eigen::Vector3d rgb;       // SH-evaluated, clamped
};

// EWA projection of one primitive. Returns nullopt when the primitive is
// behind the near plane or its 3-sigma ellipse misses the image.
std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam,
                                        const RenderOptions& opts = {});

// Opaque forward state consumed by rasterize_backward. Single-use per render;
// do not share across threads.
struct ForwardCache {
    struct SplatRecord {
        int prim_index = -1;
        Eigen::Vector2d mean2d;
        Eigen::Matrix2d conic;
        Eigen::Vector3d cam_point;
        Eigen::Matrix<double, 2, 3> jacobian;
        Eigen::Matrix3d sigma_world;
        Eigen::Vector3d rgb;      // clamped
        Eigen::Vector3d rgb_raw;  // before clamping
        Eigen::Vector3d view_dir;
        double view_dist = 0.0;
        double opacity = 0.0;
        double depth = 0.0;
        int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
    };

    bool valid = false;
    size_t set_size = 0;
    Camera camera;
    RenderOptions opts;
    std::vector<SplatRecord> splats;  // composite order
};

// Tile-based alpha-composited renderer. Splats composite front to back in
// (depth, primitive index) order; compositing ends when transmittance drops
// below opts.termination_threshold; leftover transmittance takes the
// background color and far depth. Pass a cache to enable rasterize_backward.
RenderTarget rasterize(const GaussianSet& set, const Camera& cam, const RenderOptions& opts = {},
                       ForwardCache* cache = nullptr);

// Brute-force oracle: every splat evaluated at every pixel, exact global depth
// sort, no tiling, no early termination. Same contract as rasterize.
RenderTarget rasterize_reference(const GaussianSet& set, const Camera& cam,
                                 const RenderOptions& opts = {});

struct GaussianGradients {
    std::vector<Eigen::Vector3d> d_mu;
    std::vector<Eigen::Vector3d> d_scale;
    std::vector<Eigen::Vector4d> d_rot;
    std::vector<double> d_opacity;
    std::vector<std::vector<double>> d_sh;

    void resize(size_t count, int sh_degree);
};

// Analytic gradients of sum_pixels <upstream, color> with respect to every
// primitive parameter. Gradients through the depth sort are zero (sort order
// is locally constant almost everywhere). Throws UsageError when the cache is
// missing or does not match the set.
GaussianGradients rasterize_backward(const GaussianSet& set, const Camera& cam,
                                     const Image& upstream, const ForwardCache& cache);

}  // namespace vrsplat
