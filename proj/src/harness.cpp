// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/harness.hpp"

#include <algorithm>
#include <cmath>

namespace vrsplat {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

GaussianSet SyntheticScene::gaussians_at(int t) const {
    GaussianSet out = gaussians;
    const double dt = time_of(t);
    for (size_t b = 0; b < boxes.size(); ++b) {
        const Eigen::Vector2d& v = boxes[b].velocity;
        if (v.isZero()) {
            continue;
        }
        const Eigen::Vector3d shift(v.x() * dt, v.y() * dt, 0.0);
        for (size_t i = box_primitive_ranges[b].first; i < box_primitive_ranges[b].second; ++i) {
            out.primitives[i].mu += shift;
        }
    }
    return out;
}

std::vector<ObjectBox> SyntheticScene::boxes_at_time(double t) const {
    std::vector<ObjectBox> out = boxes;
    for (ObjectBox& b : out) {
        b.center = b.center_at(t);
    }
    return out;
}

namespace {

Eigen::Vector3d ground_texture(double x, double y, double freq, const std::array<double, 4>& phase) {
    const double r = 0.5 + 0.22 * std::sin(2.0 * kPi * freq * x + phase[0]) *
                               std::cos(2.0 * kPi * freq * y + phase[1]);
    const double g = 0.5 + 0.22 * std::sin(2.0 * kPi * freq * (x + y) * 0.7 + phase[2]);
    const double b = 0.5 + 0.18 * std::cos(2.0 * kPi * freq * (x - y) * 0.8 + phase[3]);
    return {r, g, b};
}

GaussianPrimitive make_splat(const Eigen::Vector3d& mu, const Eigen::Vector3d& scale,
                             double opacity, const Eigen::Vector3d& rgb) {
    GaussianPrimitive p;
    p.mu = mu;
    p.scale = scale;
    p.rot = Eigen::Vector4d(1, 0, 0, 0);
    p.opacity = opacity;
    p.sh = {rgb.x() / kSh0, rgb.y() / kSh0, rgb.z() / kSh0};
    return p;
}

}  // namespace

SyntheticScene build_scene(uint64_t seed, int n_objects, int n_timesteps,
                           const SceneParams& params) {
    if (n_objects < 0) {
        throw ConfigError("build_scene: n_objects must be nonnegative");
    }
    SyntheticScene scene;
    scene.seed = seed;
    scene.n_timesteps = std::max(1, n_timesteps);
    scene.params = params;
    scene.gaussians.sh_degree = 0;

    Rng rng(seed);
    Rng rng_tex = rng.fork(11);
    Rng rng_obj = rng.fork(22);
    Rng rng_ego = rng.fork(33);

    // Textured ground plane.
    const std::array<double, 4> phase = {rng_tex.uniform(0.0, 2.0 * kPi),
                                         rng_tex.uniform(0.0, 2.0 * kPi),
                                         rng_tex.uniform(0.0, 2.0 * kPi),
                                         rng_tex.uniform(0.0, 2.0 * kPi)};
    const double s = params.plane_spacing;
    for (double x = params.plane_forward_min; x <= params.plane_forward_max; x += s) {
        for (double y = -params.plane_side; y <= params.plane_side; y += s) {
            scene.gaussians.primitives.push_back(
                make_splat({x, y, 0.0}, {0.62 * s, 0.62 * s, 0.01}, 0.95,
                           ground_texture(x, y, params.texture_frequency, phase)));
        }
    }

    // Colored boxes as symmetric Gaussian clusters (centroid == box center).
    for (int obj = 0; obj < n_objects; ++obj) {
        ObjectBox box;
        box.center = {rng_obj.uniform(8.0, 40.0), rng_obj.uniform(-14.0, 14.0), 0.0};
        box.center.x() = std::clamp(box.center.x(), -params.arena_half, params.arena_half);
        box.center.y() = std::clamp(box.center.y(), -params.arena_half, params.arena_half);
        box.size = {rng_obj.uniform(3.2, 5.0), rng_obj.uniform(1.8, 2.4),
                    rng_obj.uniform(1.4, 1.9)};
        box.center.z() = 0.5 * box.size.z();
        box.yaw = rng_obj.uniform(-kPi, kPi);
        const bool moving = rng_obj.uniform() * 100.0 < params.moving_fraction_pct;
        if (moving) {
            const double speed = rng_obj.uniform(1.0, 4.0);
            box.velocity = speed * Eigen::Vector2d(std::cos(box.yaw), std::sin(box.yaw));
        }
        box.color = {rng_obj.uniform(0.2, 0.85), rng_obj.uniform(0.2, 0.85),
                     rng_obj.uniform(0.2, 0.85)};

        const size_t begin = scene.gaussians.primitives.size();
        const Eigen::Matrix3d rot =
            Eigen::AngleAxisd(box.yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const int nl = std::max(2, static_cast<int>(std::lround(box.size.x() / 0.45)));
        const int nw = std::max(2, static_cast<int>(std::lround(box.size.y() / 0.45)));
        const int nh = std::max(2, static_cast<int>(std::lround(box.size.z() / 0.45)));
        const double sigma = 0.26 * box.size.maxCoeff() / std::max({nl, nw, nh});
        int count = 0;
        for (int i = 0; i < nl; ++i) {
            for (int j = 0; j < nw; ++j) {
                for (int k = 0; k < nh; ++k) {
                    const Eigen::Vector3d u(
                        (i / double(nl - 1) - 0.5) * 0.9 * box.size.x(),
                        (j / double(nw - 1) - 0.5) * 0.9 * box.size.y(),
                        (k / double(nh - 1) - 0.5) * 0.9 * box.size.z());
                    Eigen::Vector3d rgb =
                        box.color +
                        Eigen::Vector3d::Constant(0.06 * std::sin(1.7 * (count + phase[0])));
                    rgb = rgb.cwiseMax(0.05).cwiseMin(0.95);
                    scene.gaussians.primitives.push_back(make_splat(
                        box.center + rot * u, Eigen::Vector3d::Constant(sigma * 3.0), 0.95, rgb));
                    ++count;
                }
            }
        }
        scene.box_primitive_ranges.emplace_back(begin, scene.gaussians.primitives.size());
        scene.boxes.push_back(box);
    }

    // Smooth ego trajectory, 2 Hz, gentle seeded curvature.
    const double speed = params.ego_speed + rng_ego.uniform(-1.0, 1.0);
    const double curvature = rng_ego.uniform(-0.05, 0.05);  // rad/s
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    for (int t = 0; t < scene.n_timesteps; ++t) {
        const double heading = curvature * scene.time_of(t);
        Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
        pose.linear() = Eigen::AngleAxisd(heading, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        pose.translation() = pos;
        scene.ego_trajectory.push_back(pose);
        pos += speed * SyntheticScene::kStepSeconds *
               Eigen::Vector3d(std::cos(heading), std::sin(heading), 0.0);
    }
    return scene;
}

CameraRig make_mounted_rig(const RigParams& params) {
    if (params.n_cameras < 1) {
        throw ConfigError("make_mounted_rig: need at least one camera");
    }
    CameraRig rig;
    std::vector<double> yaws;
    yaws.push_back(0.0);
    if (params.n_cameras > 1) yaws.push_back(params.side_yaw_deg * kPi / 180.0);
    if (params.n_cameras > 2) yaws.push_back(-params.side_yaw_deg * kPi / 180.0);
    for (int i = 3; i < params.n_cameras; ++i) {
        yaws.push_back(kPi * (i - 1.0) / params.n_cameras);  // fill around
    }
    for (int i = 0; i < params.n_cameras; ++i) {
        const double yaw = yaws[i];
        Camera cam;
        cam.intrinsics.fx = cam.intrinsics.fy = params.focal;
        cam.intrinsics.cx = 0.5 * (params.width - 1);
        cam.intrinsics.cy = 0.5 * (params.height - 1);
        cam.intrinsics.width = params.width;
        cam.intrinsics.height = params.height;

        // Optical axis along (cos yaw, sin yaw, 0); image x right, image y
        // down; columns of the world-from-camera rotation are the camera axes.
        const Eigen::Vector3d z_cam(std::cos(yaw), std::sin(yaw), 0.0);
        const Eigen::Vector3d x_cam(std::sin(yaw), -std::cos(yaw), 0.0);  // right
        const Eigen::Vector3d y_cam = z_cam.cross(x_cam);                 // down
        Eigen::Matrix3d world_from_cam;
        world_from_cam.col(0) = x_cam;
        world_from_cam.col(1) = y_cam;
        world_from_cam.col(2) = z_cam;
        const Eigen::Vector3d center(params.mount_forward, 0.0, params.mount_height);
        cam.extrinsics.rotation = world_from_cam.transpose();
        cam.extrinsics.translation = -cam.extrinsics.rotation * center;
        rig.cameras.push_back(cam);
    }
    return rig;
}

CameraRig rig_at_pose(const CameraRig& mounted, const Eigen::Isometry3d& ego_pose) {
    const Eigen::Isometry3d ego_from_world = ego_pose.inverse();
    CameraRig out = mounted;
    for (Camera& cam : out.cameras) {
        const Eigen::Matrix3d r = cam.extrinsics.rotation * ego_from_world.rotation();
        const Eigen::Vector3d t =
            cam.extrinsics.rotation * ego_from_world.translation() + cam.extrinsics.translation;
        cam.extrinsics.rotation = r;
        cam.extrinsics.translation = t;
    }
    return out;
}

const std::vector<RigSetting>& benchmark_rig_settings() {
    static const std::vector<RigSetting> settings = {
        {"original", {0.0, 0.0, 0.0}},      {"pitch+5deg", {5.0, 0.0, 0.0}},
        {"pitch-10deg", {-10.0, 0.0, 0.0}}, {"height+1.0m", {0.0, 1.0, 0.0}},
        {"height-0.7m", {0.0, -0.7, 0.0}},  {"depth+1.0m", {0.0, 0.0, 1.0}},
    };
    return settings;
}

std::vector<ViewRecord> render_dataset(const SyntheticScene& scene, const CameraRig& mounted,
                                       const std::vector<RigDelta>& deltas,
                                       const std::vector<int>& timesteps,
                                       const RenderOptions& opts) {
    std::vector<ViewRecord> out;
    for (size_t di = 0; di < deltas.size(); ++di) {
        const CameraRig perturbed = perturb_rig(mounted, deltas[di]);
        for (int t : timesteps) {
            const GaussianSet set = scene.gaussians_at(t);
            const CameraRig world_rig = rig_at_pose(perturbed, scene.ego_pose(t));
            for (int c = 0; c < world_rig.num_cameras(); ++c) {
                ViewRecord rec;
                rec.delta_index = static_cast<int>(di);
                rec.camera = c;
                rec.timestep = t;
                rec.delta = deltas[di];
                rec.target = rasterize_reference(set, world_rig.cameras[c], opts);
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

namespace {

double conv3(const Grid& g, int y, int x, const double k[9]) {
    const int h = g.height(), w = g.width();
    double acc = 0.0;
    int i = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, h - 1);
            const int xx = std::clamp(x + dx, 0, w - 1);
            acc += k[i++] * g.at(yy, xx);
        }
    }
    return acc;
}

}  // namespace

FeatureMap extract_features(const Image& image) {
    const int h = image.height(), w = image.width();
    FeatureMap out(1, kFeatureChannels, h, w);
    Grid luma(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(0, 0, y, x) = image.at(y, x, 0);
            out.at(0, 1, y, x) = image.at(y, x, 1);
            out.at(0, 2, y, x) = image.at(y, x, 2);
            luma.at(y, x) = (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0;
        }
    }
    static const double kBlur[9] = {1 / 16.0, 2 / 16.0, 1 / 16.0, 2 / 16.0, 4 / 16.0,
                                    2 / 16.0, 1 / 16.0, 2 / 16.0, 1 / 16.0};
    static const double kSobelX[9] = {-0.25, 0.0, 0.25, -0.5, 0.0, 0.5, -0.25, 0.0, 0.25};
    static const double kSobelY[9] = {-0.25, -0.5, -0.25, 0.0, 0.0, 0.0, 0.25, 0.5, 0.25};
    static const double kLaplace[9] = {0.0, 0.25, 0.0, 0.25, -1.0, 0.25, 0.0, 0.25, 0.0};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(0, 3, y, x) = conv3(luma, y, x, kBlur);
            out.at(0, 4, y, x) = conv3(luma, y, x, kSobelX);
            out.at(0, 5, y, x) = conv3(luma, y, x, kSobelY);
            out.at(0, 6, y, x) = conv3(luma, y, x, kLaplace);
            out.at(0, 7, y, x) = luma.at(y, x);
        }
    }
    return out;
}

FeatureMap extract_features(const std::vector<Image>& images) {
    if (images.empty()) {
        throw ShapeError("extract_features: no images");
    }
    FeatureMap out(static_cast<int>(images.size()), kFeatureChannels, images[0].height(),
                   images[0].width());
    for (size_t n = 0; n < images.size(); ++n) {
        if (!images[n].same_shape(images[0])) {
            throw ShapeError("extract_features: inconsistent image sizes across views");
        }
        const FeatureMap one = extract_features(images[n]);
        std::copy(one.data().begin(), one.data().end(),
                  out.data().begin() + static_cast<long>(n) * one.data().size());
    }
    return out;
}

HorizonMetrics l2_displacement(const Trajectory& pred, const Trajectory& gt) {
    HorizonMetrics m;
    m.at_1s = (pred.waypoints[1] - gt.waypoints[1]).norm();
    m.at_2s = (pred.waypoints[3] - gt.waypoints[3]).norm();
    m.at_3s = (pred.waypoints[5] - gt.waypoints[5]).norm();
    m.avg = (m.at_1s + m.at_2s + m.at_3s) / 3.0;
    return m;
}

bool boxes_overlap(const OrientedBox2D& a, const OrientedBox2D& b) {
    const Eigen::Vector2d a_len(std::cos(a.yaw), std::sin(a.yaw));
    const Eigen::Vector2d a_wid(-std::sin(a.yaw), std::cos(a.yaw));
    const Eigen::Vector2d b_len(std::cos(b.yaw), std::sin(b.yaw));
    const Eigen::Vector2d b_wid(-std::sin(b.yaw), std::cos(b.yaw));
    const Eigen::Vector2d axes[4] = {a_len, a_wid, b_len, b_wid};
    const Eigen::Vector2d d = b.center - a.center;
    for (const Eigen::Vector2d& u : axes) {
        const double ha =
            0.5 * a.length * std::abs(u.dot(a_len)) + 0.5 * a.width * std::abs(u.dot(a_wid));
        const double hb =
            0.5 * b.length * std::abs(u.dot(b_len)) + 0.5 * b.width * std::abs(u.dot(b_wid));
        if (std::abs(d.dot(u)) >= ha + hb) {
            return false;  // separated or exactly touching
        }
    }
    return true;
}

HorizonMetrics collision_rate(const Trajectory& pred, double ego_length, double ego_width,
                              const std::vector<std::vector<OrientedBox2D>>& obstacles_per_step) {
    if (obstacles_per_step.size() != pred.waypoints.size()) {
        throw ShapeError("collision_rate: need obstacle boxes for each of the 6 waypoints");
    }
    std::array<bool, 6> collided{};
    Eigen::Vector2d prev = Eigen::Vector2d::Zero();
    double heading = 0.0;
    for (size_t i = 0; i < pred.waypoints.size(); ++i) {
        const Eigen::Vector2d step = pred.waypoints[i] - prev;
        if (step.norm() > 1e-12) {
            heading = std::atan2(step.y(), step.x());
        }
        OrientedBox2D ego{pred.waypoints[i], ego_length, ego_width, heading};
        for (const OrientedBox2D& obstacle : obstacles_per_step[i]) {
            if (boxes_overlap(ego, obstacle)) {
                collided[i] = true;
                break;
            }
        }
        prev = pred.waypoints[i];
    }
    bool any = false;
    std::array<double, 6> cumulative{};
    for (size_t i = 0; i < collided.size(); ++i) {
        any = any || collided[i];
        cumulative[i] = any ? 1.0 : 0.0;
    }
    HorizonMetrics m;
    m.at_1s = cumulative[1];
    m.at_2s = cumulative[3];
    m.at_3s = cumulative[5];
    m.avg = (m.at_1s + m.at_2s + m.at_3s) / 3.0;
    return m;
}

}  // namespace vrsplat
