// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <string>
#include <vector>

#include "vrsplat/distill.hpp"
#include "vrsplat/gaussians.hpp"
#include "vrsplat/geometry.hpp"
#include "vrsplat/image.hpp"
#include "vrsplat/losses.hpp"
#include "vrsplat/membank.hpp"
#include "vrsplat/rasterizer.hpp"

namespace vrsplat {

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

struct SceneParams {
    double arena_half = 50.0;          // object centers stay inside this square
    double plane_forward_min = -5.0;   // ground coverage, vehicle frame at t=0
    double plane_forward_max = 45.0;
    double plane_side = 22.0;
    double plane_spacing = 0.7;        // meters between ground splats
    double texture_frequency = 0.12;   // ground texture spatial frequency
    int moving_fraction_pct = 50;      // share of objects that move
    double ego_speed = 6.0;            // m/s, < 10 keeps steps under 5 m at 2 Hz
    Eigen::Vector3d background = {0.62, 0.66, 0.72};  // sky color behind the splats
};

struct ObjectBox {
    Eigen::Vector3d center;    // world frame at t = 0
    Eigen::Vector3d size;      // l, w, h meters
    double yaw = 0.0;
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // world m/s
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

    Eigen::Vector3d center_at(double t) const {
        return center + t * Eigen::Vector3d(velocity.x(), velocity.y(), 0.0);
    }
};

// Deterministic desk-scale stand-in for a driving sequence: a textured ground
// plane and colored boxes as Gaussian clusters, moving agents with constant
// velocities, and a smooth 2 Hz ego trajectory.
struct SyntheticScene {
    uint64_t seed = 0;
    int n_timesteps = 0;
    SceneParams params;
    GaussianSet gaussians;  // world frame at t = 0
    std::vector<ObjectBox> boxes;
    std::vector<std::pair<size_t, size_t>> box_primitive_ranges;  // [begin, end)
    std::vector<Eigen::Isometry3d> ego_trajectory;                // world-from-ego per step

    static constexpr double kStepSeconds = 0.5;  // 2 Hz

    double time_of(int t) const { return kStepSeconds * t; }
    const Eigen::Isometry3d& ego_pose(int t) const { return ego_trajectory.at(t); }

    // Scene gaussians with moving boxes advanced to timestep t.
    GaussianSet gaussians_at(int t) const;
    // Oriented boxes advanced to an absolute time in seconds.
    std::vector<ObjectBox> boxes_at_time(double t) const;
};

SyntheticScene build_scene(uint64_t seed, int n_objects, int n_timesteps,
                           const SceneParams& params = {});

// ---------------------------------------------------------------------------
// Rigs
// ---------------------------------------------------------------------------

struct RigParams {
    int n_cameras = 3;  // front, front-left, front-right
    int width = 64;
    int height = 64;
    double focal = 60.0;
    double mount_height = 1.6;   // meters above ground
    double mount_forward = 1.5;  // meters ahead of the ego origin
    double side_yaw_deg = 50.0;  // yaw of the side cameras
};

// Camera-from-ego extrinsics for each mounted camera ("the mounted rig").
CameraRig make_mounted_rig(const RigParams& params = {});

// Composes mounted (camera-from-ego) extrinsics with a world-from-ego pose
// into world-frame cameras.
CameraRig rig_at_pose(const CameraRig& mounted, const Eigen::Isometry3d& ego_pose);

// The six evaluation settings of the rig protocol, in order:
// original, pitch +5 deg, pitch -10 deg, height +1.0 m, height -0.7 m,
// depth +1.0 m.
struct RigSetting {
    std::string name;
    RigDelta delta;
};
const std::vector<RigSetting>& benchmark_rig_settings();

// ---------------------------------------------------------------------------
// Ground-truth dataset rendering
// ---------------------------------------------------------------------------

struct ViewRecord {
    int delta_index = 0;
    int camera = 0;
    int timestep = 0;
    RigDelta delta;
    RenderTarget target;  // reference-path render with depth channel
};

// Ground-truth renders of the scene through the exact reference rasterizer
// for every (delta, camera, timestep) combination.
std::vector<ViewRecord> render_dataset(const SyntheticScene& scene, const CameraRig& mounted,
                                       const std::vector<RigDelta>& deltas,
                                       const std::vector<int>& timesteps,
                                       const RenderOptions& opts);

// ---------------------------------------------------------------------------
// Fixed synthetic feature extractor (stands in for a learned encoder)
// ---------------------------------------------------------------------------

constexpr int kFeatureChannels = 8;

// Channels: r, g, b, blur3(luma), sobel_x(luma), sobel_y(luma),
// laplacian(luma), luma. All convolutions use replicate padding. Frozen and
// deterministic: identical images give identical features.
FeatureMap extract_features(const Image& image);
FeatureMap extract_features(const std::vector<Image>& images);

// ---------------------------------------------------------------------------
// Open-loop metric suite
// ---------------------------------------------------------------------------

// 2D waypoints in the ego frame at t0, 0.5 s apart over a 3 s horizon.
struct Trajectory {
    std::array<Eigen::Vector2d, 6> waypoints{};
};

struct HorizonMetrics {
    double at_1s = 0.0;
    double at_2s = 0.0;
    double at_3s = 0.0;
    double avg = 0.0;
};

// Euclidean displacement at the waypoint of each horizon (indices 1, 3, 5).
HorizonMetrics l2_displacement(const Trajectory& pred, const Trajectory& gt);

struct OrientedBox2D {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double length = 1.0;  // extent along the heading
    double width = 1.0;
    double yaw = 0.0;
};

// Separating-axis overlap test; touching boxes (zero gap) do not collide.
bool boxes_overlap(const OrientedBox2D& a, const OrientedBox2D& b);

// Places the ego box at each waypoint (heading from consecutive waypoints,
// starting at the origin) and tests oriented overlap against the obstacles of
// that step. rate@h is 1 when any waypoint at or before h collides, else 0,
// so rates are monotone in the horizon. obstacles_per_step needs one entry
// per waypoint.
HorizonMetrics collision_rate(const Trajectory& pred, double ego_length, double ego_width,
                              const std::vector<std::vector<OrientedBox2D>>& obstacles_per_step);

// ---------------------------------------------------------------------------
// Benchmark protocol
// ---------------------------------------------------------------------------

struct BenchmarkConfig {
    SceneParams scene;
    int n_objects = 5;
    int n_timesteps = 10;
    std::vector<uint64_t> scene_seeds = {1, 2, 3};
    RigParams rig;
    std::string range_mode = "default";  // default | superset | subset
    double lambda_p = 0.2;
    double tau = 0.3;
    std::map<std::string, double> loss_weights;  // empty -> all ones
    size_t bank_capacity = 600;
    int bank_top_k = 32;
    int attention_heads = 1;
    int feature_dim = kFeatureChannels;  // N_i of the instance features
    int n_samples = 8;                   // distillation keypoints per anchor
    uint64_t head_seed = 7;
    double analytic_scale_gain = 0.9;
    double analytic_opacity = 0.9;
    int eval_timestep = 3;
    bool with_trajectories = true;
    bool write_pngs = false;

    RigDeltaRange delta_range() const;
    RenderOptions render_options() const;
};

struct BenchmarkRow {
    uint64_t scene_seed = 0;
    std::string setting;
    double psnr_db = 0.0;  // +inf for the exact self-render of the original setting
    double recon_cyclic = 0.0;
    double distill = 0.0;
    double feat_consistency = 0.0;  // unfiltered mean distill error over anchors
    HorizonMetrics l2;
    HorizonMetrics collision;
    bool has_trajectories = false;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;
};

// Runs the full protocol: per scene and rig setting, synthesize novel views
// from the original view, compare against ground-truth renders, run the
// memory-bank + distillation pipeline, and collect the metric columns.
// Writes report.csv and summary.txt under out_dir (plus PNG renders when
// configured); out_dir empty skips file output.
BenchmarkReport run_benchmark(const BenchmarkConfig& config, const std::string& out_dir);

// Frozen CSV column order.
std::string benchmark_csv_header();
void write_benchmark_csv(const std::string& path, const BenchmarkReport& report);
void write_benchmark_summary(const std::string& path, const BenchmarkReport& report);

// ---------------------------------------------------------------------------
// Gradient checking and the optimization smoke test
// ---------------------------------------------------------------------------

struct GradCheckRow {
    std::string group;       // mu, scale, rot, opacity, sh
    double max_rel_err = 0.0;
    double analytic = 0.0;   // entries at the worst parameter
    double numeric = 0.0;
    bool pass = false;
};

// Central finite differences (h = 1e-4 relative) against rasterize_backward
// on a deterministic scene framed so every pixel stays inside the splats'
// smooth region. analytic_perturb injects a fault into the analytic gradients
// (negative control).
std::vector<GradCheckRow> run_gradient_check(uint64_t seed, int n_gaussians,
                                             double analytic_perturb = 0.0,
                                             double tolerance = 1e-3);

struct OptimizationResult {
    std::vector<double> objective;  // per step, entry 0 = initialization
    double initial = 0.0;
    double final = 0.0;
};

// 200-step SGD on a LinearHead against render_l2 + cyclic reconstruction for
// a fixed toy scene; appends a LossReport row per step when loss_csv is
// nonempty. The cyclic gradient flows through the re-lift head application;
// the rendered inputs of the re-lift are treated as constants.
OptimizationResult optimize_linear_head(uint64_t seed, int steps, double learning_rate,
                                        const std::string& loss_csv = "");

}  // namespace vrsplat
