// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "vrsplat/rasterizer.hpp"

namespace vrsplat {

namespace {

// One recorded compositing event for the reverse sweep.
struct Contribution {
    int splat;           // index into cache.splats
    double trans;        // transmittance before this splat
    double alpha_prime;  // opacity * exp(power)
    double gauss;        // exp(power)
    double dx, dy;
};

// d(rotation matrix)/d(unit quaternion component), rows x cols layout.
void quat_matrix_partials(const Eigen::Vector4d& r, Eigen::Matrix3d out[4]) {
    const double w = r[0], x = r[1], y = r[2], z = r[3];
    out[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    out[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    out[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    out[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (int i = 0; i < 4; ++i) {
        out[i] *= 2.0;
    }
}

}  // namespace

GaussianGradients rasterize_backward(const GaussianSet& set, const Camera& cam,
                                     const Image& upstream, const ForwardCache& cache) {
    if (!cache.valid) {
        throw UsageError("rasterize_backward: forward cache missing (render with a cache first)");
    }
    if (cache.set_size != set.primitives.size()) {
        throw UsageError("rasterize_backward: cache does not match the Gaussian set");
    }
    const int width = cam.intrinsics.width;
    const int height = cam.intrinsics.height;
    if (upstream.height() != height || upstream.width() != width) {
        throw ShapeError("rasterize_backward: upstream gradient shape mismatch");
    }

    GaussianGradients grads;
    grads.resize(set.primitives.size(), set.sh_degree);

    const size_t m = cache.splats.size();
    std::vector<Eigen::Vector2d> d_mean2d(m, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> d_conic(m, Eigen::Matrix2d::Zero());
    std::vector<Eigen::Vector3d> d_rgb(m, Eigen::Vector3d::Zero());
    std::vector<double> d_opacity(m, 0.0);

    // Tile lists identical to the forward pass (cache.splats is already in
    // composite order).
    const int ts = cache.opts.tile_size;
    const int tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;
    std::vector<std::vector<int>> tile_lists(static_cast<size_t>(tiles_x) * tiles_y);
    for (size_t i = 0; i < m; ++i) {
        const auto& s = cache.splats[i];
        for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty) {
            for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx) {
                tile_lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(i));
            }
        }
    }

    const double threshold = cache.opts.termination_threshold;
    std::vector<Contribution> events;
    events.reserve(64);

    for (int y = 0; y < height; ++y) {
        const int ty = y / ts;
        for (int x = 0; x < width; ++x) {
            const Eigen::Vector3d u(upstream.at(y, x, 0), upstream.at(y, x, 1),
                                    upstream.at(y, x, 2));
            const std::vector<int>& list = tile_lists[static_cast<size_t>(ty) * tiles_x + x / ts];
            if (list.empty() || u.isZero()) {
                continue;
            }
            // Replay the forward compositing for this pixel.
            events.clear();
            double trans = 1.0;
            for (int k : list) {
                const auto& s = cache.splats[k];
                const double dx = x - s.mean2d.x();
                const double dy = y - s.mean2d.y();
                const double power = -0.5 * (s.conic(0, 0) * dx * dx + s.conic(1, 1) * dy * dy) -
                                     s.conic(0, 1) * dx * dy;
                if (power < kPowerCutoff) {
                    continue;
                }
                const double gauss = std::exp(power);
                const double alpha_prime = s.opacity * gauss;
                events.push_back({k, trans, alpha_prime, gauss, dx, dy});
                trans *= 1.0 - alpha_prime;
                if (trans < threshold) {
                    break;
                }
            }
            // Reverse sweep: rear holds the composited color behind the
            // current splat, excluding the transmittance factors in front.
            Eigen::Vector3d rear = cache.opts.background;
            for (auto it = events.rbegin(); it != events.rend(); ++it) {
                const auto& s = cache.splats[it->splat];
                const double d_alpha_prime = it->trans * u.dot(s.rgb - rear);
                d_rgb[it->splat] += (it->trans * it->alpha_prime) * u;
                d_opacity[it->splat] += it->gauss * d_alpha_prime;
                const double d_power = it->alpha_prime * d_alpha_prime;  // dG = alpha*dalpha'; dpower = G*dG
                const Eigen::Vector2d d(it->dx, it->dy);
                const Eigen::Vector2d conic_d = s.conic * d;
                d_mean2d[it->splat] += d_power * conic_d;
                d_conic[it->splat] += -0.5 * d_power * (d * d.transpose());
                rear = it->alpha_prime * s.rgb + (1.0 - it->alpha_prime) * rear;
            }
        }
    }

    // Chain per-splat image-space gradients back to the primitive parameters.
    const Eigen::Matrix3d& w_rot = cam.extrinsics.rotation;
    const double fx = cam.intrinsics.fx;
    const double fy = cam.intrinsics.fy;
    std::vector<double> basis;
    Eigen::Matrix<double, Eigen::Dynamic, 3> dbasis;

    for (size_t i = 0; i < m; ++i) {
        const auto& s = cache.splats[i];
        const int pi = s.prim_index;
        const GaussianPrimitive& prim = set.primitives[pi];

        grads.d_opacity[pi] += d_opacity[i];

        // Color: clamp passes gradient only strictly inside [0, 1].
        Eigen::Vector3d d_rgb_raw = Eigen::Vector3d::Zero();
        for (int c = 0; c < 3; ++c) {
            if (s.rgb_raw[c] > 0.0 && s.rgb_raw[c] < 1.0) {
                d_rgb_raw[c] = d_rgb[i][c];
            }
        }
        if (!d_rgb_raw.isZero()) {
            eval_sh_with_basis(prim.sh, s.view_dir, basis);
            for (size_t b = 0; b < basis.size(); ++b) {
                for (int c = 0; c < 3; ++c) {
                    grads.d_sh[pi][b * 3 + c] += basis[b] * d_rgb_raw[c];
                }
            }
            if (set.sh_degree >= 1) {
                sh_basis_gradient(set.sh_degree, s.view_dir, dbasis);
                Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
                for (size_t b = 0; b < basis.size(); ++b) {
                    double coeff_dot = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        coeff_dot += prim.sh[b * 3 + c] * d_rgb_raw[c];
                    }
                    d_dir += coeff_dot * dbasis.row(b).transpose();
                }
                // dir = v / |v| with v = mu - camera center
                const Eigen::Vector3d d_v =
                    (d_dir - s.view_dir * s.view_dir.dot(d_dir)) / s.view_dist;
                grads.d_mu[pi] += d_v;
            }
        }

        const bool geom_zero = d_mean2d[i].isZero() && d_conic[i].isZero();
        if (geom_zero) {
            continue;
        }

        // conic = cov2d^-1
        const Eigen::Matrix2d d_cov2d = -s.conic * d_conic[i] * s.conic;

        // cov2d = T sigma T^T + lowpass I, T = J W
        const Eigen::Matrix<double, 2, 3> t = s.jacobian * w_rot;
        const Eigen::Matrix<double, 2, 3> d_t = (d_cov2d + d_cov2d.transpose()) * t * s.sigma_world;
        const Eigen::Matrix3d d_sigma = t.transpose() * d_cov2d * t;
        const Eigen::Matrix<double, 2, 3> d_jac = d_t * w_rot.transpose();

        // J entries as functions of the camera-frame point q.
        const double qx = s.cam_point.x(), qy = s.cam_point.y(), qz = s.cam_point.z();
        const double inv_z = 1.0 / qz;
        const double inv_z2 = inv_z * inv_z;
        Eigen::Vector3d d_q = Eigen::Vector3d::Zero();
        d_q.x() += d_jac(0, 2) * (-fx * inv_z2);
        d_q.y() += d_jac(1, 2) * (-fy * inv_z2);
        d_q.z() += d_jac(0, 0) * (-fx * inv_z2) + d_jac(1, 1) * (-fy * inv_z2) +
                   d_jac(0, 2) * (2.0 * fx * qx * inv_z2 * inv_z) +
                   d_jac(1, 2) * (2.0 * fy * qy * inv_z2 * inv_z);

        // mean2d = pinhole(q); its Jacobian is exactly s.jacobian.
        d_q += s.jacobian.transpose() * d_mean2d[i];

        grads.d_mu[pi] += w_rot.transpose() * d_q;

        // sigma = M M^T with M = R diag(scale)
        const Eigen::Vector4d q_raw = prim.rot;
        const double norm = q_raw.norm();
        const Eigen::Vector4d r_unit = q_raw / norm;
        const Eigen::Matrix3d rot = quat_to_matrix(prim.rot);
        const Eigen::Matrix3d mat_m = rot * prim.scale.asDiagonal();
        const Eigen::Matrix3d d_m = (d_sigma + d_sigma.transpose()) * mat_m;
        for (int k = 0; k < 3; ++k) {
            grads.d_scale[pi][k] += d_m.col(k).dot(rot.col(k));
        }
        const Eigen::Matrix3d d_rot_mat = d_m * prim.scale.asDiagonal();

        Eigen::Matrix3d partials[4];
        quat_matrix_partials(r_unit, partials);
        Eigen::Vector4d d_r_unit;
        for (int k = 0; k < 4; ++k) {
            d_r_unit[k] = (d_rot_mat.array() * partials[k].array()).sum();
        }
        grads.d_rot[pi] += (d_r_unit - r_unit * r_unit.dot(d_r_unit)) / norm;
    }
    return grads;
}

}  // namespace vrsplat
