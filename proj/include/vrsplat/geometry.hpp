// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vrsplat/error.hpp"

namespace vrsplat {

// Coordinate conventions used across the project (documented in the README):
//   - World and vehicle frames are right-handed, z up; the vehicle looks +x,
//     y points left.
//   - The camera frame is right-handed, looks +z, image x right, image y down.
//   - Extrinsics are camera-from-world: q_cam = R * p_world + t.
//   - Continuous pixel coordinates: integer coordinates are pixel centers, so
//     the image spans [-0.5, width-0.5] x [-0.5, height-0.5].

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;
};

struct CameraExtrinsics {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera-from-world
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // meters

    // Throws InvalidPoseError unless rotation is orthonormal with det +1
    // (tolerance 1e-9).
    void validate() const;

    // World position of the camera center, -R^T t.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    // World-from-camera rotation (columns are the camera axes in world coords).
    Eigen::Matrix3d world_rotation() const { return rotation.transpose(); }
};

struct Camera {
    CameraIntrinsics intrinsics;
    CameraExtrinsics extrinsics;
};

// All cameras of one vehicle; a rig delta perturbs every camera jointly.
struct CameraRig {
    std::vector<Camera> cameras;

    int num_cameras() const { return static_cast<int>(cameras.size()); }
};

// Pitch/height/depth perturbation of a camera mount, in the vehicle frame.
struct RigDelta {
    double pitch_deg = 0.0;
    double height_m = 0.0;
    double depth_m = 0.0;

    bool is_zero() const { return pitch_deg == 0.0 && height_m == 0.0 && depth_m == 0.0; }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double midpoint() const { return 0.5 * (lo + hi); }
};

struct RigDeltaRange {
    Interval pitch;   // degrees
    Interval height;  // meters
    Interval depth;   // meters

    void validate() const;

    bool contains(const RigDelta& d) const {
        return pitch.contains(d.pitch_deg) && height.contains(d.height_m) &&
               depth.contains(d.depth_m);
    }
};

// The training ranges exercised by the benchmark protocol.
RigDeltaRange default_delta_range();   // pitch [-10, 5] deg, height [-0.7, 1.0] m, depth [-0.2, 1.0] m
RigDeltaRange superset_delta_range();  // pitch [-15, 10] deg, height [-1.0, 1.5] m, depth [-0.5, 1.5] m
RigDeltaRange subset_delta_range();    // pitch [-5, 2] deg, height [-0.3, 0.5] m, depth [-0.1, 0.5] m

// Splittable deterministic RNG. Wraps a fixed-algorithm 64-bit generator and
// maps outputs to doubles explicitly so sequences are identical across
// platforms for a given seed.
class Rng {
public:
    explicit Rng(uint64_t seed);

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi]; degenerate intervals return lo exactly.
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n);
    // Standard normal via Box-Muller.
    double normal();
    // Derive an independent stream (seed mixing).
    Rng fork(uint64_t salt);

private:
    uint64_t next_raw();
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

constexpr double kNearPlaneEpsilon = 1e-4;  // meters; points closer are rejected

// Applies a rig delta to one camera: the camera center translates by
// height_m * up + depth_m * forward, then the orientation tilts by pitch_deg
// about the lateral axis (forward x up) through the camera center. Positive
// pitch tilts the optical axis toward up. A zero delta returns the input
// unchanged (bitwise).
CameraExtrinsics perturb_extrinsic(const CameraExtrinsics& ext, const RigDelta& delta,
                                   const Eigen::Vector3d& forward_axis,
                                   const Eigen::Vector3d& up_axis);

// Perturbs every camera of the rig with the same delta (vehicle axes +x
// forward, +z up).
CameraRig perturb_rig(const CameraRig& rig, const RigDelta& delta);

// Uniform sample in the box given by the range; deterministic for a fixed rng
// state.
RigDelta sample_rig_delta(Rng& rng, const RigDeltaRange& range);

// Pinhole projection. Returns (pixel, depth); throws BehindCameraError when
// the camera-frame z is <= kNearPlaneEpsilon.
std::pair<Eigen::Vector2d, double> project(const Eigen::Vector3d& point_world, const Camera& cam);

// Inverse of project for depth > 0; throws InvalidDepthError otherwise.
Eigen::Vector3d unproject(const Eigen::Vector2d& pixel, double depth, const Camera& cam);

// Rig file I/O. JSON with documented field names:
//   {"cameras": [{"fx","fy","cx","cy","width","height",
//                 "extrinsic": [16 row-major doubles of the 4x4
//                               camera-from-world matrix]}]}
CameraRig load_rig(const std::string& path);
void save_rig(const std::string& path, const CameraRig& rig);

}  // namespace vrsplat
