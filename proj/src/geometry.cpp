// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace vrsplat {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kPoseTol = 1e-9;
}  // namespace

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ConfigError("intrinsics: focal lengths must be positive");
    }
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
        throw ConfigError("intrinsics: principal point outside image");
    }
}

void CameraExtrinsics::validate() const {
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kPoseTol) {
        throw InvalidPoseError("extrinsics: rotation is not orthonormal");
    }
    if (rotation.determinant() < 0.0) {
        throw InvalidPoseError("extrinsics: rotation has negative determinant");
    }
}

void RigDeltaRange::validate() const {
    if (pitch.lo > pitch.hi || height.lo > height.hi || depth.lo > depth.hi) {
        throw ConfigError("rig delta range: interval low exceeds high");
    }
}

RigDeltaRange default_delta_range() {
    return {{-10.0, 5.0}, {-0.7, 1.0}, {-0.2, 1.0}};
}

RigDeltaRange superset_delta_range() {
    return {{-15.0, 10.0}, {-1.0, 1.5}, {-0.5, 1.5}};
}

RigDeltaRange subset_delta_range() {
    return {{-5.0, 2.0}, {-0.3, 0.5}, {-0.1, 0.5}};
}

// splitmix64; fixed algorithm, identical sequences on every platform.
Rng::Rng(uint64_t seed) : state_(seed) {}

uint64_t Rng::next_raw() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + uniform() * (hi - lo);
}

uint64_t Rng::next_below(uint64_t n) {
    return n == 0 ? 0 : next_raw() % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * kPi * u2);
}

Rng Rng::fork(uint64_t salt) {
    return Rng(next_raw() ^ (salt * 0x9e3779b97f4a7c15ULL));
}

CameraExtrinsics perturb_extrinsic(const CameraExtrinsics& ext, const RigDelta& delta,
                                   const Eigen::Vector3d& forward_axis,
                                   const Eigen::Vector3d& up_axis) {
    ext.validate();
    if (delta.is_zero()) {
        return ext;
    }
    if (!std::isfinite(delta.pitch_deg) || !std::isfinite(delta.height_m) ||
        !std::isfinite(delta.depth_m)) {
        throw ConfigError("perturb_extrinsic: non-finite rig delta");
    }

    const Eigen::Vector3d lateral = forward_axis.cross(up_axis).normalized();
    const Eigen::Vector3d center =
        ext.center() + delta.height_m * up_axis + delta.depth_m * forward_axis;

    const double pitch_rad = delta.pitch_deg * kPi / 180.0;
    const Eigen::Matrix3d tilt = Eigen::AngleAxisd(pitch_rad, lateral).toRotationMatrix();
    const Eigen::Matrix3d world_from_cam = tilt * ext.world_rotation();

    CameraExtrinsics out;
    out.rotation = world_from_cam.transpose();
    out.translation = -out.rotation * center;
    return out;
}

CameraRig perturb_rig(const CameraRig& rig, const RigDelta& delta) {
    CameraRig out;
    out.cameras.reserve(rig.cameras.size());
    for (const Camera& cam : rig.cameras) {
        Camera c = cam;
        c.extrinsics = perturb_extrinsic(cam.extrinsics, delta, Eigen::Vector3d::UnitX(),
                                         Eigen::Vector3d::UnitZ());
        out.cameras.push_back(c);
    }
    return out;
}

RigDelta sample_rig_delta(Rng& rng, const RigDeltaRange& range) {
    range.validate();
    RigDelta d;
    d.pitch_deg = rng.uniform(range.pitch.lo, range.pitch.hi);
    d.height_m = rng.uniform(range.height.lo, range.height.hi);
    d.depth_m = rng.uniform(range.depth.lo, range.depth.hi);
    return d;
}

std::pair<Eigen::Vector2d, double> project(const Eigen::Vector3d& point_world, const Camera& cam) {
    const Eigen::Vector3d q = cam.extrinsics.rotation * point_world + cam.extrinsics.translation;
    if (q.z() <= kNearPlaneEpsilon) {
        throw BehindCameraError("project: point behind camera (z=" + std::to_string(q.z()) + ")");
    }
    const Eigen::Vector2d pixel(cam.intrinsics.fx * q.x() / q.z() + cam.intrinsics.cx,
                                cam.intrinsics.fy * q.y() / q.z() + cam.intrinsics.cy);
    return {pixel, q.z()};
}

Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth, const Camera& cam) {
    if (!(depth > 0.0)) {
        throw InvalidDepthError("unproject: depth must be positive, got " + std::to_string(depth));
    }
    const Eigen::Vector3d q((pixel.x() - cam.intrinsics.cx) / cam.intrinsics.fx * depth,
                            (pixel.y() - cam.intrinsics.cy) / cam.intrinsics.fy * depth, depth);
    return cam.extrinsics.rotation.transpose() * (q - cam.extrinsics.translation);
}

CameraRig load_rig(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("load_rig: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_rig: parse failure in " + path + ": " + e.what());
    }
    if (!j.contains("cameras") || !j["cameras"].is_array()) {
        throw IoError("load_rig: missing \"cameras\" array in " + path);
    }
    CameraRig rig;
    for (const auto& jc : j["cameras"]) {
        Camera cam;
        cam.intrinsics.fx = jc.at("fx").get<double>();
        cam.intrinsics.fy = jc.at("fy").get<double>();
        cam.intrinsics.cx = jc.at("cx").get<double>();
        cam.intrinsics.cy = jc.at("cy").get<double>();
        cam.intrinsics.width = jc.at("width").get<int>();
        cam.intrinsics.height = jc.at("height").get<int>();
        cam.intrinsics.validate();
        const auto m = jc.at("extrinsic").get<std::vector<double>>();
        if (m.size() != 16) {
            throw IoError("load_rig: extrinsic must hold 16 row-major values");
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                cam.extrinsics.rotation(r, c) = m[r * 4 + c];
            }
            cam.extrinsics.translation(r) = m[r * 4 + 3];
        }
        cam.extrinsics.validate();
        rig.cameras.push_back(cam);
    }
    return rig;
}

void save_rig(const std::string& path, const CameraRig& rig) {
    nlohmann::json j;
    j["cameras"] = nlohmann::json::array();
    for (const Camera& cam : rig.cameras) {
        nlohmann::json jc;
        jc["fx"] = cam.intrinsics.fx;
        jc["fy"] = cam.intrinsics.fy;
        jc["cx"] = cam.intrinsics.cx;
        jc["cy"] = cam.intrinsics.cy;
        jc["width"] = cam.intrinsics.width;
        jc["height"] = cam.intrinsics.height;
        std::vector<double> m(16, 0.0);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                m[r * 4 + c] = cam.extrinsics.rotation(r, c);
            }
            m[r * 4 + 3] = cam.extrinsics.translation(r);
        }
        m[15] = 1.0;
        jc["extrinsic"] = m;
        j["cameras"].push_back(jc);
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("save_rig: cannot open " + path);
    }
    out << j.dump(2) << "\n";
}

}  // namespace vrsplat
