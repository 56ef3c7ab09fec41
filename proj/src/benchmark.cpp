// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "vrsplat/harness.hpp"

namespace vrsplat {

RigDeltaRange BenchmarkConfig::delta_range() const {
    if (range_mode == "default") return default_delta_range();
    if (range_mode == "superset") return superset_delta_range();
    if (range_mode == "subset") return subset_delta_range();
    throw ConfigError("ranges.mode: unknown value \"" + range_mode +
                      "\" (expected default, superset or subset)");
}

RenderOptions BenchmarkConfig::render_options() const {
    RenderOptions opts;
    opts.background = scene.background;
    return opts;
}

namespace {

struct FrameContext {
    CameraRig world_rig;                // camera-from-world at this timestep
    std::vector<RenderTarget> targets;  // ground-truth reference renders
    std::vector<Image> images;
    FeatureMap features;
    DepthMap depth;
};

FrameContext ground_truth_frame(const SyntheticScene& scene, const CameraRig& mounted,
                                const RigDelta& delta, int t, const RenderOptions& opts) {
    FrameContext ctx;
    const CameraRig perturbed = delta.is_zero() ? mounted : perturb_rig(mounted, delta);
    ctx.world_rig = rig_at_pose(perturbed, scene.ego_pose(t));
    const GaussianSet set = scene.gaussians_at(t);
    for (const Camera& cam : ctx.world_rig.cameras) {
        ctx.targets.push_back(rasterize_reference(set, cam, opts));
        ctx.images.push_back(ctx.targets.back().color);
        ctx.depth.views.push_back(ctx.targets.back().depth);
    }
    ctx.features = extract_features(ctx.images);
    return ctx;
}

// Ego-frame instance records for every scene box at timestep t. Confidence is
// a deterministic visibility score: how many cameras see the box center.
std::vector<InstanceRecord> make_instances(const SyntheticScene& scene, const CameraRig& mounted,
                                           const FeatureMap& features, int t, int view_id) {
    const double now = scene.time_of(t);
    const Eigen::Isometry3d& ego_pose = scene.ego_pose(t);
    const Eigen::Isometry3d ego_from_world = ego_pose.inverse();
    std::vector<InstanceRecord> records;
    for (const ObjectBox& box : scene.boxes_at_time(now)) {
        InstanceRecord rec;
        rec.anchor.center = ego_from_world * box.center;
        rec.anchor.size = box.size;
        const Eigen::Vector3d heading =
            ego_from_world.rotation() * Eigen::Vector3d(std::cos(box.yaw), std::sin(box.yaw), 0.0);
        rec.anchor.yaw = std::atan2(heading.y(), heading.x());
        const Eigen::Vector3d v_ego =
            ego_from_world.rotation() * Eigen::Vector3d(box.velocity.x(), box.velocity.y(), 0.0);
        rec.anchor.velocity = {v_ego.x(), v_ego.y()};
        rec.timestamp = now;
        rec.ego_pose = ego_pose;
        rec.view_id = view_id;

        Eigen::VectorXd descriptor = Eigen::VectorXd::Zero(features.channels());
        int visible = 0;
        for (int c = 0; c < mounted.num_cameras(); ++c) {
            try {
                const Eigen::Vector2d pixel =
                    project(rec.anchor.center, mounted.cameras[c]).first;
                bool in_view = false;
                const Eigen::VectorXd f = bilinear_sample(features, c, pixel, &in_view);
                if (in_view) {
                    descriptor += f;
                    ++visible;
                }
            } catch (const BehindCameraError&) {
            }
        }
        if (visible > 0) {
            descriptor /= static_cast<double>(visible);
            rec.confidence = 0.6 + 0.35 * static_cast<double>(visible) /
                                       static_cast<double>(mounted.num_cameras());
        } else {
            rec.confidence = 0.1;
        }
        rec.feature = descriptor;
        records.push_back(std::move(rec));
    }
    return records;
}

Trajectory ego_future(const SyntheticScene& scene, int t_eval) {
    const Eigen::Isometry3d ego_from_world = scene.ego_pose(t_eval).inverse();
    Trajectory traj;
    for (int k = 1; k <= 6; ++k) {
        const Eigen::Vector3d p = ego_from_world * scene.ego_pose(t_eval + k).translation();
        traj.waypoints[k - 1] = {p.x(), p.y()};
    }
    return traj;
}

// Constant-velocity baseline extrapolated from the last ego step.
Trajectory constant_velocity_plan(const SyntheticScene& scene, int t_eval) {
    const int prev = std::max(0, t_eval - 1);
    const Eigen::Vector3d v =
        (scene.ego_pose(t_eval).translation() - scene.ego_pose(prev).translation()) /
        (SyntheticScene::kStepSeconds * std::max(1, t_eval - prev));
    const Eigen::Isometry3d ego_from_world = scene.ego_pose(t_eval).inverse();
    Trajectory traj;
    for (int k = 1; k <= 6; ++k) {
        const Eigen::Vector3d p = ego_from_world * Eigen::Vector3d(scene.ego_pose(t_eval).translation() +
                                                                   v * (0.5 * k));
        traj.waypoints[k - 1] = {p.x(), p.y()};
    }
    return traj;
}

std::vector<std::vector<OrientedBox2D>> obstacles_in_ego(const SyntheticScene& scene, int t_eval) {
    const Eigen::Isometry3d ego_from_world = scene.ego_pose(t_eval).inverse();
    std::vector<std::vector<OrientedBox2D>> out(6);
    for (int k = 1; k <= 6; ++k) {
        const double t = scene.time_of(t_eval) + 0.5 * k;
        for (const ObjectBox& box : scene.boxes_at_time(t)) {
            const Eigen::Vector3d c = ego_from_world * box.center;
            const Eigen::Vector3d heading =
                ego_from_world.rotation() *
                Eigen::Vector3d(std::cos(box.yaw), std::sin(box.yaw), 0.0);
            out[k - 1].push_back(
                {{c.x(), c.y()}, box.size.x(), box.size.y(), std::atan2(heading.y(), heading.x())});
        }
    }
    return out;
}

std::string format_metric(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string benchmark_csv_header() {
    return "scene_seed,setting,psnr_db,recon_cyclic,distill,feat_consistency,"
           "l2_1s,l2_2s,l2_3s,l2_avg,col_1s,col_2s,col_3s,col_avg";
}

void write_benchmark_csv(const std::string& path, const BenchmarkReport& report) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("write_benchmark_csv: cannot open " + path);
    }
    out << benchmark_csv_header() << "\n";
    for (const BenchmarkRow& row : report.rows) {
        out << row.scene_seed << "," << row.setting << "," << format_metric(row.psnr_db) << ","
            << format_metric(row.recon_cyclic) << "," << format_metric(row.distill) << ","
            << format_metric(row.feat_consistency);
        if (row.has_trajectories) {
            out << "," << format_metric(row.l2.at_1s) << "," << format_metric(row.l2.at_2s) << ","
                << format_metric(row.l2.at_3s) << "," << format_metric(row.l2.avg) << ","
                << format_metric(row.collision.at_1s) << "," << format_metric(row.collision.at_2s)
                << "," << format_metric(row.collision.at_3s) << ","
                << format_metric(row.collision.avg);
        } else {
            out << ",,,,,,,,";
        }
        out << "\n";
    }
}

void write_benchmark_summary(const std::string& path, const BenchmarkReport& report) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("write_benchmark_summary: cannot open " + path);
    }
    out << "rig setting            psnr_db    recon_cyclic  distill      feat_consistency\n";
    for (const RigSetting& setting : benchmark_rig_settings()) {
        double psnr_acc = 0.0, cyc = 0.0, dis = 0.0, feat = 0.0;
        int n = 0;
        bool inf_psnr = false;
        for (const BenchmarkRow& row : report.rows) {
            if (row.setting != setting.name) {
                continue;
            }
            if (std::isinf(row.psnr_db)) {
                inf_psnr = true;
            } else {
                psnr_acc += row.psnr_db;
            }
            cyc += row.recon_cyclic;
            dis += row.distill;
            feat += row.feat_consistency;
            ++n;
        }
        if (n == 0) {
            continue;
        }
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-22s %-10s %-13s %-12s %s\n", setting.name.c_str(),
                      inf_psnr ? "inf" : format_metric(psnr_acc / n).c_str(),
                      format_metric(cyc / n).c_str(), format_metric(dis / n).c_str(),
                      format_metric(feat / n).c_str());
        out << buf;
    }
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config, const std::string& out_dir) {
    if (config.scene_seeds.empty()) {
        throw ConfigError("benchmark: empty scene seed list");
    }
    const int needed = config.eval_timestep + (config.with_trajectories ? 7 : 1);
    if (config.eval_timestep < 0 || config.n_timesteps < needed) {
        throw ConfigError("benchmark: eval_timestep " + std::to_string(config.eval_timestep) +
                          " needs at least " + std::to_string(needed) + " timesteps");
    }
    config.delta_range();  // validates the range mode early
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
    }

    const RenderOptions opts = config.render_options();
    const CameraRig mounted = make_mounted_rig(config.rig);
    const AnalyticHead head(config.analytic_scale_gain, config.analytic_opacity);
    const AttentionParams attn =
        AttentionParams::random(config.feature_dim, config.attention_heads, config.head_seed);
    const KeypointHeads kheads = KeypointHeads::random(config.feature_dim, config.n_samples,
                                                       config.rig.n_cameras, config.head_seed + 1);

    ReconPipeline pipeline;
    pipeline.head = &head;
    pipeline.extract = [](const std::vector<Image>& imgs) { return extract_features(imgs); };
    pipeline.render_opts = opts;
    pipeline.lambda_p = config.lambda_p;

    BenchmarkReport report;
    for (uint64_t seed : config.scene_seeds) {
        const SyntheticScene scene =
            build_scene(seed, config.n_objects, config.n_timesteps, config.scene);
        const int te = config.eval_timestep;

        // Memory-bank warmup over preceding frames: one original pass and one
        // novel pass per frame, interleaved (the viewpoint-mixed semantics).
        MemoryBank bank(config.bank_capacity);
        Rng aug_rng(seed ^ 0x5eedULL);
        const RigDeltaRange range = config.delta_range();
        for (int t = 0; t < te; ++t) {
            const FrameContext frame = ground_truth_frame(scene, mounted, RigDelta{}, t, opts);
            bank.update(make_instances(scene, mounted, frame.features, t, 0), config.bank_top_k);

            const RigDelta aug = sample_rig_delta(aug_rng, range);
            const GaussianSet lifted_t =
                lift_pixels(frame.depth, frame.features, frame.world_rig, head);
            const CameraRig novel_world =
                rig_at_pose(perturb_rig(mounted, aug), scene.ego_pose(t));
            std::vector<Image> novel_images;
            for (const Camera& cam : novel_world.cameras) {
                novel_images.push_back(rasterize(lifted_t, cam, opts).color);
            }
            const FeatureMap novel_feats = extract_features(novel_images);
            bank.update(
                make_instances(scene, perturb_rig(mounted, aug), novel_feats, t, 1),
                config.bank_top_k);
        }

        // Evaluation frame: ground truth, lifted primitives, refined features.
        const FrameContext eval_frame = ground_truth_frame(scene, mounted, RigDelta{}, te, opts);
        const GaussianSet lifted =
            lift_pixels(eval_frame.depth, eval_frame.features, eval_frame.world_rig, head);
        const std::vector<InstanceRecord> instances =
            make_instances(scene, mounted, eval_frame.features, te, 0);

        Eigen::MatrixXd refined;
        std::vector<double> confidences;
        if (!instances.empty()) {
            Eigen::MatrixXd f(instances.size(), config.feature_dim);
            for (size_t i = 0; i < instances.size(); ++i) {
                f.row(i) = instances[i].feature.transpose();
                confidences.push_back(instances[i].confidence);
            }
            const std::vector<InstanceRecord> aligned =
                align_to_current(bank.records(), scene.ego_pose(te), scene.time_of(te));
            const Eigen::MatrixXd mixed = cross_attend(f, bank_feature_matrix(aligned), attn);
            refined = self_attend(mixed, attn);
        }

        // Trajectory metrics are setting-independent at desk scale (the
        // baseline planner does not consume images); computed once per scene.
        Trajectory gt_traj, pred_traj;
        std::vector<std::vector<OrientedBox2D>> obstacles;
        if (config.with_trajectories) {
            gt_traj = ego_future(scene, te);
            pred_traj = constant_velocity_plan(scene, te);
            obstacles = obstacles_in_ego(scene, te);
        }

        for (const RigSetting& setting : benchmark_rig_settings()) {
            BenchmarkRow row;
            row.scene_seed = seed;
            row.setting = setting.name;

            const CameraRig perturbed_mounted = setting.delta.is_zero()
                                                    ? mounted
                                                    : perturb_rig(mounted, setting.delta);
            const CameraRig novel_world = rig_at_pose(perturbed_mounted, scene.ego_pose(te));

            // Ground truth at the perturbed rig through the reference path.
            std::vector<RenderTarget> gt_targets;
            const GaussianSet gt_set = scene.gaussians_at(te);
            for (const Camera& cam : novel_world.cameras) {
                gt_targets.push_back(rasterize_reference(gt_set, cam, opts));
            }

            // Synthesized views from the original-view primitives. The
            // original setting needs no synthesis: the requested view is the
            // input itself (exact self-render through the reference path).
            std::vector<RenderTarget> synth_targets;
            if (setting.delta.is_zero()) {
                synth_targets = eval_frame.targets;
            } else {
                for (const Camera& cam : novel_world.cameras) {
                    synth_targets.push_back(rasterize(lifted, cam, opts));
                }
            }

            double psnr_acc = 0.0;
            bool any_inf = false;
            for (size_t c = 0; c < synth_targets.size(); ++c) {
                const double p = psnr(synth_targets[c].color, gt_targets[c].color);
                if (std::isinf(p)) {
                    any_inf = true;
                } else {
                    psnr_acc += p;
                }
            }
            row.psnr_db = any_inf ? std::numeric_limits<double>::infinity()
                                  : psnr_acc / static_cast<double>(synth_targets.size());

            row.recon_cyclic = cyclic_recon_loss(synth_targets, novel_world,
                                                 eval_frame.world_rig, eval_frame.images,
                                                 pipeline);

            if (!instances.empty()) {
                std::vector<Image> novel_images;
                for (const RenderTarget& rt : synth_targets) {
                    novel_images.push_back(rt.color);
                }
                const FeatureMap novel_feats = extract_features(novel_images);
                std::vector<Eigen::VectorXd> s_orig, s_novel;
                for (size_t i = 0; i < instances.size(); ++i) {
                    const Eigen::VectorXd fi = refined.row(i).transpose();
                    s_orig.push_back(sampled_feature(instances[i], fi, kheads,
                                                     eval_frame.features, mounted,
                                                     static_cast<int>(i), false)
                                         .value);
                    s_novel.push_back(sampled_feature(instances[i], fi, kheads, novel_feats,
                                                      perturbed_mounted, static_cast<int>(i),
                                                      true)
                                          .value);
                }
                row.distill = distill_loss(s_novel, s_orig, confidences, config.tau).value;
                row.feat_consistency =
                    distill_loss(s_novel, s_orig, confidences,
                                 -std::numeric_limits<double>::infinity())
                        .value;
            }

            if (config.with_trajectories) {
                row.has_trajectories = true;
                row.l2 = l2_displacement(pred_traj, gt_traj);
                row.collision = collision_rate(pred_traj, 4.0, 2.0, obstacles);
            }

            if (!out_dir.empty() && config.write_pngs) {
                for (size_t c = 0; c < synth_targets.size(); ++c) {
                    write_png(out_dir + "/scene" + std::to_string(seed) + "_" + setting.name +
                                  "_cam" + std::to_string(c) + ".png",
                              synth_targets[c].color);
                }
            }
            report.rows.push_back(std::move(row));
        }
    }

    if (!out_dir.empty()) {
        write_benchmark_csv(out_dir + "/report.csv", report);
        write_benchmark_summary(out_dir + "/summary.txt", report);
    }
    return report;
}

}  // namespace vrsplat
