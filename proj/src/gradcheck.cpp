// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "vrsplat/harness.hpp"

namespace vrsplat {

namespace {

struct CheckScene {
    GaussianSet set;
    Camera camera;
    RenderOptions opts;
    Image upstream;
};

// Every splat spans the whole 16x16 image well inside its 3-sigma ellipse, so
// finite differences never straddle the contribution cutoff or the depth
// sort, colors stay strictly inside [0, 1], and all parameter groups keep
// smooth gradients.
CheckScene make_check_scene(uint64_t seed, int n_gaussians) {
    CheckScene s;
    s.camera.intrinsics = {40.0, 40.0, 7.5, 7.5, 16, 16};
    s.opts.background = {0.45, 0.5, 0.55};

    Rng rng(seed);
    s.set.sh_degree = 1;
    for (int i = 0; i < n_gaussians; ++i) {
        GaussianPrimitive p;
        const double depth = 3.0 + 0.35 * i + rng.uniform(0.0, 0.1);
        const double px = rng.uniform(5.5, 9.5);
        const double py = rng.uniform(5.5, 9.5);
        p.mu = {(px - s.camera.intrinsics.cx) / s.camera.intrinsics.fx * depth,
                (py - s.camera.intrinsics.cy) / s.camera.intrinsics.fy * depth, depth};
        const double sigma_px = rng.uniform(6.5, 9.0);
        const double base = sigma_px * depth / s.camera.intrinsics.fx;
        p.scale = {base * rng.uniform(0.85, 1.2), base * rng.uniform(0.85, 1.2),
                   base * rng.uniform(0.85, 1.2)};
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        while (q.norm() < 0.3) {
            q = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        }
        p.rot = q / q.norm();
        p.opacity = rng.uniform(0.25, 0.55);
        p.sh.assign(12, 0.0);
        for (int c = 0; c < 3; ++c) {
            p.sh[c] = rng.uniform(0.35, 0.65) / kSh0;          // band 0
            for (int b = 1; b < 4; ++b) {
                p.sh[b * 3 + c] = rng.uniform(-0.08, 0.08);    // degree-1 bands
            }
        }
        s.set.primitives.push_back(std::move(p));
    }

    s.upstream = Image(16, 16);
    for (double& v : s.upstream.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return s;
}

double objective(const CheckScene& s, ForwardCache* cache = nullptr) {
    const RenderTarget rt = rasterize(s.set, s.camera, s.opts, cache);
    double acc = 0.0;
    for (size_t i = 0; i < rt.color.data().size(); ++i) {
        acc += s.upstream.data()[i] * rt.color.data()[i];
    }
    return acc;
}

double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_check(uint64_t seed, int n_gaussians,
                                             double analytic_perturb, double tolerance) {
    CheckScene scene = make_check_scene(seed, n_gaussians);
    ForwardCache cache;
    objective(scene, &cache);
    const GaussianGradients grads =
        rasterize_backward(scene.set, scene.camera, scene.upstream, cache);

    auto perturbed = [&](double g) {
        return analytic_perturb == 0.0 ? g : g + analytic_perturb * std::max(std::abs(g), 1.0);
    };

    auto fd = [&](double* value) {
        const double v0 = *value;
        const double h = 1e-4 * std::max(std::abs(v0), 1.0);
        *value = v0 + h;
        const double hi = objective(scene);
        *value = v0 - h;
        const double lo = objective(scene);
        *value = v0;
        return (hi - lo) / (2.0 * h);
    };

    std::vector<GradCheckRow> rows;
    auto check_group = [&](const std::string& name, auto&& for_each_param) {
        GradCheckRow row;
        row.group = name;
        for_each_param([&](double* value, double analytic) {
            const double a = perturbed(analytic);
            const double numeric = fd(value);
            const double rel = relative_error(a, numeric);
            if (rel >= row.max_rel_err) {
                row.max_rel_err = rel;
                row.analytic = a;
                row.numeric = numeric;
            }
        });
        row.pass = row.max_rel_err <= tolerance;
        rows.push_back(row);
    };

    const size_t n = scene.set.primitives.size();
    check_group("mu", [&](auto&& visit) {
        for (size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) {
                visit(&scene.set.primitives[i].mu[k], grads.d_mu[i][k]);
            }
        }
    });
    check_group("scale", [&](auto&& visit) {
        for (size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 3; ++k) {
                visit(&scene.set.primitives[i].scale[k], grads.d_scale[i][k]);
            }
        }
    });
    check_group("rot", [&](auto&& visit) {
        for (size_t i = 0; i < n; ++i) {
            for (int k = 0; k < 4; ++k) {
                visit(&scene.set.primitives[i].rot[k], grads.d_rot[i][k]);
            }
        }
    });
    check_group("opacity", [&](auto&& visit) {
        for (size_t i = 0; i < n; ++i) {
            visit(&scene.set.primitives[i].opacity, grads.d_opacity[i]);
        }
    });
    check_group("sh", [&](auto&& visit) {
        for (size_t i = 0; i < n; ++i) {
            for (size_t k = 0; k < scene.set.primitives[i].sh.size(); ++k) {
                visit(&scene.set.primitives[i].sh[k], grads.d_sh[i][k]);
            }
        }
    });
    return rows;
}

OptimizationResult optimize_linear_head(uint64_t seed, int steps, double learning_rate,
                                        const std::string& loss_csv) {
    SceneParams params;
    params.plane_forward_max = 28.0;
    params.plane_side = 12.0;
    params.plane_spacing = 0.9;
    const SyntheticScene scene = build_scene(seed, 2, 2, params);

    RigParams rig_params;
    rig_params.n_cameras = 1;
    rig_params.width = 32;
    rig_params.height = 32;
    rig_params.focal = 30.0;
    const CameraRig mounted = make_mounted_rig(rig_params);
    const CameraRig world_rig = rig_at_pose(mounted, scene.ego_pose(0));

    RenderOptions opts;
    opts.background = params.background;

    // Ground truth through the reference path.
    std::vector<Image> gt_images;
    DepthMap gt_depth;
    const GaussianSet gt_set = scene.gaussians_at(0);
    for (const Camera& cam : world_rig.cameras) {
        RenderTarget rt = rasterize_reference(gt_set, cam, opts);
        gt_images.push_back(rt.color);
        gt_depth.views.push_back(rt.depth);
    }
    const FeatureMap gt_features = extract_features(gt_images);

    const RigDelta novel_delta{2.0, 0.3, 0.0};
    const CameraRig novel_world = rig_at_pose(perturb_rig(mounted, novel_delta),
                                              scene.ego_pose(0));

    LinearHead head(kFeatureChannels, seed);
    LinearHeadGrad grad(head);

    auto features_of = [&](const FeatureMap& feats, const PixelProvenance& prov) {
        Eigen::VectorXd f(feats.channels());
        for (int c = 0; c < feats.channels(); ++c) {
            f[c] = feats.at(prov.camera, c, prov.row, prov.col);
        }
        return f;
    };

    auto backprop_into_head = [&](const GaussianSet& set, const FeatureMap& feats,
                                  const DepthMap& depth, const GaussianGradients& g) {
        for (size_t i = 0; i < set.primitives.size(); ++i) {
            const PixelProvenance& prov = set.provenance[i];
            const Eigen::VectorXd f = features_of(feats, prov);
            const double d = depth.views[prov.camera].at(prov.row, prov.col);
            accumulate_head_gradient(head, f, d, g.d_scale[i], g.d_rot[i], g.d_opacity[i],
                                     g.d_sh[i], grad);
        }
    };

    OptimizationResult result;
    for (int step = 0; step <= steps; ++step) {
        grad.setZero();
        double objective = 0.0;
        double render_term = 0.0;
        double cyclic_term = 0.0;

        // Direct reconstruction of the original view.
        const GaussianSet lifted = lift_pixels(gt_depth, gt_features, world_rig, head);
        {
            ForwardCache cache;
            for (size_t c = 0; c < world_rig.cameras.size(); ++c) {
                const RenderTarget rt = rasterize(lifted, world_rig.cameras[c], opts, &cache);
                render_term += render_l2(rt.color, gt_images[c]);
                Image upstream(rt.color.height(), rt.color.width());
                const double scale = 2.0 / static_cast<double>(upstream.data().size());
                for (size_t i = 0; i < upstream.data().size(); ++i) {
                    upstream.data()[i] =
                        scale * (rt.color.data()[i] - gt_images[c].data()[i]);
                }
                const GaussianGradients g =
                    rasterize_backward(lifted, world_rig.cameras[c], upstream, cache);
                backprop_into_head(lifted, gt_features, gt_depth, g);
            }
            render_term /= static_cast<double>(world_rig.cameras.size());
        }

        // Cyclic branch: render a novel view, re-lift it with the same head,
        // render back to the original view. The rendered inputs of the
        // re-lift are constants for the gradient.
        std::vector<Image> novel_images;
        DepthMap novel_depth;
        for (const Camera& cam : novel_world.cameras) {
            RenderTarget rt = rasterize(lifted, cam, opts);
            novel_images.push_back(rt.color);
            novel_depth.views.push_back(rt.depth);
        }
        const FeatureMap novel_features = extract_features(novel_images);
        const GaussianSet relifted = lift_pixels(novel_depth, novel_features, novel_world, head);
        {
            ForwardCache cache;
            for (size_t c = 0; c < world_rig.cameras.size(); ++c) {
                RenderTarget rt = rasterize(relifted, world_rig.cameras[c], opts, &cache);
                cyclic_term += render_l2(rt.color, gt_images[c]);
                Image upstream(rt.color.height(), rt.color.width());
                const double scale = 2.0 / static_cast<double>(upstream.data().size());
                for (size_t i = 0; i < upstream.data().size(); ++i) {
                    upstream.data()[i] =
                        scale * (rt.color.data()[i] - gt_images[c].data()[i]);
                }
                const GaussianGradients g =
                    rasterize_backward(relifted, world_rig.cameras[c], upstream, cache);
                backprop_into_head(relifted, novel_features, novel_depth, g);
            }
            cyclic_term /= static_cast<double>(world_rig.cameras.size());
        }

        objective = render_term + cyclic_term;
        result.objective.push_back(objective);
        if (!loss_csv.empty()) {
            LossReport report = total_loss(
                {{"render_l2", render_term}, {"recon_cyclic", cyclic_term}}, {});
            append_loss_csv(loss_csv, step, report);
        }
        if (step == steps) {
            break;  // final evaluation only
        }
        apply_head_gradient(head, grad, learning_rate);
    }
    result.initial = result.objective.front();
    result.final = result.objective.back();
    return result;
}

}  // namespace vrsplat
