// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "vrsplat/geometry.hpp"
#include "vrsplat/image.hpp"

namespace vrsplat {

// Real spherical harmonics basis, 3DGS coefficient ordering, degrees 0..3.
// Band layout per primitive: sh[band * 3 + channel] (rgb interleaved per
// basis function).
int sh_coeff_count(int degree);                 // 3 * (degree+1)^2
constexpr double kSh0 = 0.28209479177387814;    // Y00

// Evaluates the SH color for a unit view direction and clamps to [0, 1].
// sh must hold 3*(degree+1)^2 values for some degree in 0..3; a mismatched
// count throws ShapeError.
Eigen::Vector3d eval_sh(const std::vector<double>& sh, const Eigen::Vector3d& direction);

// Unclamped evaluation plus the basis values; used by the renderer backward.
// basis receives (degree+1)^2 entries.
Eigen::Vector3d eval_sh_with_basis(const std::vector<double>& sh, const Eigen::Vector3d& direction,
                                   std::vector<double>& basis);

// d(basis_b)/d(direction) for every band; rows are bands, columns x,y,z.
// direction need not be normalized here; callers handle the normalization
// Jacobian themselves.
void sh_basis_gradient(int degree, const Eigen::Vector3d& direction,
                       Eigen::Matrix<double, Eigen::Dynamic, 3>& dbasis);

struct GaussianPrimitive {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();      // world position, meters
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();   // per-axis stddev, meters, > 0
    Eigen::Vector4d rot = Eigen::Vector4d(1, 0, 0, 0); // unit quaternion (w, x, y, z)
    double opacity = 1.0;                              // [0, 1]
    std::vector<double> sh;                            // 3*(k+1)^2 coefficients
};

struct PixelProvenance {
    int camera = -1;
    int row = -1;
    int col = -1;
};

// Ordered list of primitives plus per-primitive provenance when produced by
// lift_pixels ((camera, row, column) raster order). Immutable by convention
// after construction.
struct GaussianSet {
    int sh_degree = 0;
    std::vector<GaussianPrimitive> primitives;
    std::vector<PixelProvenance> provenance;  // empty when not lifted

    size_t size() const { return primitives.size(); }
};

// Sigma = R diag(s^2) R^T. Throws InvalidRotationError on a zero-norm
// quaternion; non-unit quaternions are normalized.
Eigen::Matrix3d covariance_from(const Eigen::Vector3d& scale, const Eigen::Vector4d& rot);

// Rotation matrix of a (w, x, y, z) quaternion, normalized internally.
Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q);

// Raw per-pixel network heads before activation.
struct RawHeads {
    Eigen::Vector3d h_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d h_rot = Eigen::Vector4d::Zero();
    double h_alpha = 0.0;
    std::vector<double> h_color;  // passed through as SH coefficients
};

struct ActivatedParams {
    Eigen::Vector3d scale;
    Eigen::Vector4d rot;
    double opacity;
    std::vector<double> sh;
};

struct ActivationDiagnostics {
    size_t zero_quaternion_fallbacks = 0;
};

double softplus(double x);
double softplus_inverse(double y);  // y > 0
double logistic(double x);
double logit(double p);  // p in (0, 1)

// s = softplus(h_scale), r = normalize(h_rot), alpha = logistic(h_alpha),
// sh = h_color unchanged. An all-zero quaternion head falls back to the
// identity quaternion and bumps the diagnostics counter.
ActivatedParams activate_params(const RawHeads& raw, ActivationDiagnostics* diag = nullptr);

// Per-pixel parameter head: feature vector + depth + camera context in, raw
// heads out.
class ParamHead {
public:
    virtual ~ParamHead() = default;
    virtual int sh_degree() const = 0;
    virtual RawHeads evaluate(const Eigen::VectorXd& feature, double depth,
                              const CameraIntrinsics& cam) const = 0;
};

// Fixed closed-form head used by all deterministic tests: isotropic scale
// scale_gain * depth / fx, opacity 0.9, identity rotation, degree-0 color
// taken from the first three feature channels.
class AnalyticHead : public ParamHead {
public:
    explicit AnalyticHead(double scale_gain = 0.9, double opacity = 0.9);

    int sh_degree() const override { return 0; }
    RawHeads evaluate(const Eigen::VectorXd& feature, double depth,
                      const CameraIntrinsics& cam) const override;

    double scale_gain() const { return scale_gain_; }

private:
    double scale_gain_;
    double h_alpha_;
};

// One learnable affine map per parameter group, degree-0 color. Gradients are
// hand-derived (see LinearHeadGrad); used by the optimization smoke tests.
class LinearHead : public ParamHead {
public:
    LinearHead(int feature_dim, uint64_t seed);

    int sh_degree() const override { return 0; }
    RawHeads evaluate(const Eigen::VectorXd& feature, double depth,
                      const CameraIntrinsics& cam) const override;

    int feature_dim() const { return feature_dim_; }

    // Parameter groups. Rows are outputs, columns are feature inputs; the
    // depth enters as one extra pseudo-input appended to the feature.
    Eigen::MatrixXd w_scale, w_rot, w_alpha, w_color;
    Eigen::VectorXd b_scale, b_rot, b_alpha, b_color;

private:
    int feature_dim_;
};

struct LinearHeadGrad {
    Eigen::MatrixXd w_scale, w_rot, w_alpha, w_color;
    Eigen::VectorXd b_scale, b_rot, b_alpha, b_color;

    explicit LinearHeadGrad(const LinearHead& head);
    void setZero();
};

// Accumulates d(loss)/d(head parameters) for one lifted primitive given
// gradients with respect to its activated parameters.
void accumulate_head_gradient(const LinearHead& head, const Eigen::VectorXd& feature, double depth,
                              const Eigen::Vector3d& d_scale, const Eigen::Vector4d& d_rot,
                              double d_opacity, const std::vector<double>& d_sh,
                              LinearHeadGrad& grad);

// SGD step: head -= lr * grad.
void apply_head_gradient(LinearHead& head, const LinearHeadGrad& grad, double lr);

// Feed-forward pixel-wise lifting: one primitive per (camera, row, column) in
// raster order, mu from unprojection of the per-pixel depth, remaining
// parameters from the head. Throws InvalidDepthError naming the first
// offending pixel, ShapeError on mismatched inputs.
GaussianSet lift_pixels(const DepthMap& depth, const FeatureMap& feats, const CameraRig& rig,
                        const ParamHead& head, ActivationDiagnostics* diag = nullptr);

// Flat binary format, little-endian float32:
//   16-byte header: magic "VRGS", u32 version (1), u32 count, u32 sh degree k;
//   then per primitive [mu(3), s(3), r(4) as (w,x,y,z), alpha(1), c(3*(k+1)^2)].
// Provenance is not serialized.
void save_gaussians(const std::string& path, const GaussianSet& set);
GaussianSet load_gaussians(const std::string& path);

}  // namespace vrsplat
