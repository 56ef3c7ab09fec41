// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/rasterizer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace vrsplat {

namespace {

// Hot-path splat record; both rasterization paths composite from the same
// array so their per-pixel arithmetic is identical.
struct CompactSplat {
    double mx, my;          // 2D mean
    double ca, cb, cc;      // conic (inverse 2D covariance): [[ca, cb], [cb, cc]]
    double opacity;
    double r, g, b;
    double depth;
    int x0, x1, y0, y1;     // inclusive pixel bbox of the 3-sigma ellipse
    int prim_index;
};

struct Projection {
    bool culled = true;
    CompactSplat compact{};
    ForwardCache::SplatRecord record{};
};

Projection project_one(const GaussianPrimitive& g, const Camera& cam, const RenderOptions& opts,
                       bool want_record) {
    Projection out;
    const CameraIntrinsics& in = cam.intrinsics;
    const Eigen::Matrix3d& w_rot = cam.extrinsics.rotation;

    const Eigen::Vector3d q = w_rot * g.mu + cam.extrinsics.translation;
    if (q.z() <= kNearPlaneEpsilon) {
        return out;
    }
    const double inv_z = 1.0 / q.z();
    const Eigen::Vector2d mean2d(in.fx * q.x() * inv_z + in.cx, in.fy * q.y() * inv_z + in.cy);

    Eigen::Matrix<double, 2, 3> jac;
    jac << in.fx * inv_z, 0.0, -in.fx * q.x() * inv_z * inv_z,
           0.0, in.fy * inv_z, -in.fy * q.y() * inv_z * inv_z;

    const Eigen::Matrix3d sigma = covariance_from(g.scale, g.rot);
    const Eigen::Matrix<double, 2, 3> t = jac * w_rot;
    Eigen::Matrix2d cov2d = t * sigma * t.transpose();
    cov2d(0, 0) += opts.lowpass;
    cov2d(1, 1) += opts.lowpass;

    // Exact axis-aligned bounds of the 3-sigma ellipse.
    const double rx = 3.0 * std::sqrt(cov2d(0, 0));
    const double ry = 3.0 * std::sqrt(cov2d(1, 1));
    const int x0 = std::max(0, static_cast<int>(std::ceil(mean2d.x() - rx)));
    const int x1 = std::min(in.width - 1, static_cast<int>(std::floor(mean2d.x() + rx)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(mean2d.y() - ry)));
    const int y1 = std::min(in.height - 1, static_cast<int>(std::floor(mean2d.y() + ry)));
    if (x0 > x1 || y0 > y1) {
        return out;
    }

    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    assert(det > 0.0 && "2D covariance must be PD after the low-pass floor");
    const double inv_det = 1.0 / det;
    const Eigen::Vector3d view = g.mu - cam.extrinsics.center();
    const double view_dist = view.norm();
    const Eigen::Vector3d dir = view / view_dist;

    std::vector<double> basis;
    const Eigen::Vector3d rgb_raw = eval_sh_with_basis(g.sh, dir, basis);
    const Eigen::Vector3d rgb = rgb_raw.cwiseMax(0.0).cwiseMin(1.0);

    out.culled = false;
    out.compact = CompactSplat{mean2d.x(),
                               mean2d.y(),
                               cov2d(1, 1) * inv_det,
                               -cov2d(0, 1) * inv_det,
                               cov2d(0, 0) * inv_det,
                               g.opacity,
                               rgb.x(),
                               rgb.y(),
                               rgb.z(),
                               q.z(),
                               x0,
                               x1,
                               y0,
                               y1,
                               -1};
    if (want_record) {
        ForwardCache::SplatRecord& rec = out.record;
        rec.mean2d = mean2d;
        rec.conic << out.compact.ca, out.compact.cb, out.compact.cb, out.compact.cc;
        rec.cam_point = q;
        rec.jacobian = jac;
        rec.sigma_world = sigma;
        rec.rgb = rgb;
        rec.rgb_raw = rgb_raw;
        rec.view_dir = dir;
        rec.view_dist = view_dist;
        rec.opacity = g.opacity;
        rec.depth = q.z();
        rec.x0 = x0;
        rec.x1 = x1;
        rec.y0 = y0;
        rec.y1 = y1;
    }
    return out;
}

// Projects and depth-sorts the whole set. Sorted order is (depth, primitive
// index) ascending; lower index composites first on equal depths.
std::vector<CompactSplat> project_sorted(const GaussianSet& set, const Camera& cam,
                                         const RenderOptions& opts, ForwardCache* cache) {
    std::vector<CompactSplat> splats;
    splats.reserve(set.primitives.size());
    std::vector<ForwardCache::SplatRecord> records;
    if (cache) {
        records.reserve(set.primitives.size());
    }
    for (size_t i = 0; i < set.primitives.size(); ++i) {
        Projection p = project_one(set.primitives[i], cam, opts, cache != nullptr);
        if (p.culled) {
            continue;
        }
        p.compact.prim_index = static_cast<int>(i);
        splats.push_back(p.compact);
        if (cache) {
            p.record.prim_index = static_cast<int>(i);
            records.push_back(std::move(p.record));
        }
    }
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (splats[a].depth != splats[b].depth) {
            return splats[a].depth < splats[b].depth;
        }
        return splats[a].prim_index < splats[b].prim_index;
    });
    std::vector<CompactSplat> sorted;
    sorted.reserve(splats.size());
    for (int idx : order) {
        sorted.push_back(splats[idx]);
    }
    if (cache) {
        cache->valid = true;
        cache->set_size = set.primitives.size();
        cache->camera = cam;
        cache->opts = opts;
        cache->splats.clear();
        cache->splats.reserve(records.size());
        for (int idx : order) {
            cache->splats.push_back(std::move(records[idx]));
        }
    }
    return sorted;
}

RenderTarget make_target(const Camera& cam, const RenderOptions& opts) {
    RenderTarget rt;
    rt.color = Image(cam.intrinsics.height, cam.intrinsics.width);
    rt.alpha = Grid(cam.intrinsics.height, cam.intrinsics.width);
    rt.depth = Grid(cam.intrinsics.height, cam.intrinsics.width);
    rt.background = opts.background;
    return rt;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam,
                                        const RenderOptions& opts) {
    const Projection p = project_one(g, cam, opts, true);
    if (p.culled) {
        return std::nullopt;
    }
    Splat2D s;
    s.mean2d = p.record.mean2d;
    s.cov2d = p.record.conic.inverse();
    s.depth = p.record.depth;
    s.opacity = p.record.opacity;
    s.rgb = p.record.rgb;
    return s;
}

// Shared per-pixel compositing kernel. `begin`/`count` select the splat
// subsequence (already in composite order); `threshold` is the transmittance
// early-out (0 disables it). Splats beyond their 3-sigma ellipse contribute
// exactly zero and are skipped, which keeps the two paths bit-identical up to
// early termination.
namespace {

inline void composite_pixel(const CompactSplat* splats, const int* subset, int count, double px,
                            double py, double threshold, const RenderOptions& opts, double* rgb,
                            double* alpha, double* depth) {
    double cr = 0.0, cg = 0.0, cb = 0.0, cd = 0.0;
    double trans = 1.0;
    for (int k = 0; k < count; ++k) {
        const CompactSplat& s = subset ? splats[subset[k]] : splats[k];
        const double dx = px - s.mx;
        const double dy = py - s.my;
        const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
        if (power < kPowerCutoff) {
            continue;
        }
        const double alpha_prime = s.opacity * std::exp(power);
        const double weight = trans * alpha_prime;
        cr += weight * s.r;
        cg += weight * s.g;
        cb += weight * s.b;
        cd += weight * s.depth;
        trans *= 1.0 - alpha_prime;
        if (trans < threshold) {
            break;
        }
    }
    rgb[0] = cr + trans * opts.background.x();
    rgb[1] = cg + trans * opts.background.y();
    rgb[2] = cb + trans * opts.background.z();
    *alpha = 1.0 - trans;
    *depth = cd + trans * opts.far_depth;
}

}  // namespace

RenderTarget rasterize(const GaussianSet& set, const Camera& cam, const RenderOptions& opts,
                       ForwardCache* cache) {
    cam.intrinsics.validate();
    cam.extrinsics.validate();
    const std::vector<CompactSplat> splats = project_sorted(set, cam, opts, cache);
    RenderTarget rt = make_target(cam, opts);
    const int width = cam.intrinsics.width;
    const int height = cam.intrinsics.height;
    const int ts = opts.tile_size;
    const int tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;

    // Conservative splat-to-tile assignment from the 3-sigma bbox; iterating
    // splats in composite order keeps every tile list sorted.
    std::vector<std::vector<int>> tile_lists(static_cast<size_t>(tiles_x) * tiles_y);
    for (size_t i = 0; i < splats.size(); ++i) {
        const CompactSplat& s = splats[i];
        for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty) {
            for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) {
                tile_lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(i));
            }
        }
    }

    double rgb[3];
    double alpha_v, depth_v;
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const std::vector<int>& list = tile_lists[static_cast<size_t>(ty) * tiles_x + tx];
            const int y_end = std::min(height, (ty + 1) * ts);
            const int x_end = std::min(width, (tx + 1) * ts);
            for (int y = ty * ts; y < y_end; ++y) {
                for (int x = tx * ts; x < x_end; ++x) {
                    composite_pixel(splats.data(), list.data(), static_cast<int>(list.size()),
                                    static_cast<double>(x), static_cast<double>(y),
                                    opts.termination_threshold, opts, rgb, &alpha_v, &depth_v);
                    rt.color.at(y, x, 0) = rgb[0];
                    rt.color.at(y, x, 1) = rgb[1];
                    rt.color.at(y, x, 2) = rgb[2];
                    rt.alpha.at(y, x) = alpha_v;
                    rt.depth.at(y, x) = depth_v;
                }
            }
        }
    }
    return rt;
}

RenderTarget rasterize_reference(const GaussianSet& set, const Camera& cam,
                                 const RenderOptions& opts) {
    cam.intrinsics.validate();
    cam.extrinsics.validate();
    const std::vector<CompactSplat> splats = project_sorted(set, cam, opts, nullptr);
    RenderTarget rt = make_target(cam, opts);

    double rgb[3];
    double alpha_v, depth_v;
    for (int y = 0; y < cam.intrinsics.height; ++y) {
        for (int x = 0; x < cam.intrinsics.width; ++x) {
            composite_pixel(splats.data(), nullptr, static_cast<int>(splats.size()),
                            static_cast<double>(x), static_cast<double>(y), 0.0, opts, rgb,
                            &alpha_v, &depth_v);
            rt.color.at(y, x, 0) = rgb[0];
            rt.color.at(y, x, 1) = rgb[1];
            rt.color.at(y, x, 2) = rgb[2];
            rt.alpha.at(y, x) = alpha_v;
            rt.depth.at(y, x) = depth_v;
        }
    }
    return rt;
}

void GaussianGradients::resize(size_t count, int sh_degree) {
    d_mu.assign(count, Eigen::Vector3d::Zero());
    d_scale.assign(count, Eigen::Vector3d::Zero());
    d_rot.assign(count, Eigen::Vector4d::Zero());
    d_opacity.assign(count, 0.0);
    d_sh.assign(count, std::vector<double>(sh_coeff_count(sh_degree), 0.0));
}

}  // namespace vrsplat
