// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/gaussians.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace vrsplat {

namespace {

constexpr double kSh1 = 0.4886025119029199;
constexpr double kSh2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSh3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

int degree_from_count(size_t count) {
    for (int k = 0; k <= 3; ++k) {
        if (count == static_cast<size_t>(sh_coeff_count(k))) {
            return k;
        }
    }
    throw ShapeError("eval_sh: coefficient count " + std::to_string(count) +
                     " does not match any degree in 0..3");
}

void sh_basis(int degree, const Eigen::Vector3d& d, std::vector<double>& basis) {
    const double x = d.x(), y = d.y(), z = d.z();
    const int bands = (degree + 1) * (degree + 1);
    basis.resize(bands);
    basis[0] = kSh0;
    if (degree >= 1) {
        basis[1] = -kSh1 * y;
        basis[2] = kSh1 * z;
        basis[3] = -kSh1 * x;
    }
    if (degree >= 2) {
        const double xx = x * x, yy = y * y, zz = z * z;
        basis[4] = kSh2[0] * x * y;
        basis[5] = kSh2[1] * y * z;
        basis[6] = kSh2[2] * (2.0 * zz - xx - yy);
        basis[7] = kSh2[3] * x * z;
        basis[8] = kSh2[4] * (xx - yy);
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        basis[9] = kSh3[0] * y * (3.0 * xx - yy);
        basis[10] = kSh3[1] * x * y * z;
        basis[11] = kSh3[2] * y * (4.0 * zz - xx - yy);
        basis[12] = kSh3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        basis[13] = kSh3[4] * x * (4.0 * zz - xx - yy);
        basis[14] = kSh3[5] * z * (xx - yy);
        basis[15] = kSh3[6] * x * (xx - 3.0 * yy);
    }
}

}  // namespace

int sh_coeff_count(int degree) {
    return 3 * (degree + 1) * (degree + 1);
}

Eigen::Vector3d eval_sh_with_basis(const std::vector<double>& sh, const Eigen::Vector3d& direction,
                                   std::vector<double>& basis) {
    const int degree = degree_from_count(sh.size());
    sh_basis(degree, direction, basis);
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    for (size_t b = 0; b < basis.size(); ++b) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += basis[b] * sh[b * 3 + c];
        }
    }
    return rgb;
}

Eigen::Vector3d eval_sh(const std::vector<double>& sh, const Eigen::Vector3d& direction) {
    std::vector<double> basis;
    Eigen::Vector3d rgb = eval_sh_with_basis(sh, direction, basis);
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

void sh_basis_gradient(int degree, const Eigen::Vector3d& d,
                       Eigen::Matrix<double, Eigen::Dynamic, 3>& dbasis) {
    const double x = d.x(), y = d.y(), z = d.z();
    const int bands = (degree + 1) * (degree + 1);
    dbasis.setZero(bands, 3);
    if (degree >= 1) {
        dbasis.row(1) = Eigen::RowVector3d(0.0, -kSh1, 0.0);
        dbasis.row(2) = Eigen::RowVector3d(0.0, 0.0, kSh1);
        dbasis.row(3) = Eigen::RowVector3d(-kSh1, 0.0, 0.0);
    }
    if (degree >= 2) {
        dbasis.row(4) = kSh2[0] * Eigen::RowVector3d(y, x, 0.0);
        dbasis.row(5) = kSh2[1] * Eigen::RowVector3d(0.0, z, y);
        dbasis.row(6) = kSh2[2] * Eigen::RowVector3d(-2.0 * x, -2.0 * y, 4.0 * z);
        dbasis.row(7) = kSh2[3] * Eigen::RowVector3d(z, 0.0, x);
        dbasis.row(8) = kSh2[4] * Eigen::RowVector3d(2.0 * x, -2.0 * y, 0.0);
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        dbasis.row(9) = kSh3[0] * Eigen::RowVector3d(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
        dbasis.row(10) = kSh3[1] * Eigen::RowVector3d(y * z, x * z, x * y);
        dbasis.row(11) =
            kSh3[2] * Eigen::RowVector3d(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
        dbasis.row(12) = kSh3[3] * Eigen::RowVector3d(-6.0 * x * z, -6.0 * y * z,
                                                      6.0 * zz - 3.0 * xx - 3.0 * yy);
        dbasis.row(13) =
            kSh3[4] * Eigen::RowVector3d(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
        dbasis.row(14) = kSh3[5] * Eigen::RowVector3d(2.0 * x * z, -2.0 * y * z, xx - yy);
        dbasis.row(15) = kSh3[6] * Eigen::RowVector3d(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    }
}

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4d& q) {
    const double n = q.norm();
    if (n == 0.0) {
        throw InvalidRotationError("quat_to_matrix: zero-norm quaternion");
    }
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Eigen::Matrix3d r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w),
        2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w),
        2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_from(const Eigen::Vector3d& scale, const Eigen::Vector4d& rot) {
    if (!(scale.minCoeff() > 0.0)) {
        throw ConfigError("covariance_from: scale must be strictly positive");
    }
    const Eigen::Matrix3d r = quat_to_matrix(rot);
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

double softplus(double x) {
    // log1p(exp(x)) with the large-x branch to avoid overflow
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (!(y > 0.0)) {
        throw ConfigError("softplus_inverse: argument must be positive");
    }
    return y > 30.0 ? y : std::log(std::expm1(y));
}

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("logit: argument must be in (0, 1)");
    }
    return std::log(p / (1.0 - p));
}

ActivatedParams activate_params(const RawHeads& raw, ActivationDiagnostics* diag) {
    ActivatedParams out;
    for (int i = 0; i < 3; ++i) {
        out.scale[i] = softplus(raw.h_scale[i]);
    }
    const double n = raw.h_rot.norm();
    if (n == 0.0) {
        out.rot = Eigen::Vector4d(1, 0, 0, 0);
        if (diag) {
            ++diag->zero_quaternion_fallbacks;
        }
    } else {
        out.rot = raw.h_rot / n;
    }
    out.opacity = logistic(raw.h_alpha);
    out.sh = raw.h_color;
    return out;
}

AnalyticHead::AnalyticHead(double scale_gain, double opacity)
    : scale_gain_(scale_gain), h_alpha_(logit(opacity)) {}

RawHeads AnalyticHead::evaluate(const Eigen::VectorXd& feature, double depth,
                                const CameraIntrinsics& cam) const {
    if (feature.size() < 3) {
        throw ShapeError("AnalyticHead: needs at least 3 feature channels, got " +
                         std::to_string(feature.size()));
    }
    RawHeads raw;
    const double sigma = scale_gain_ * depth / cam.fx;
    raw.h_scale.setConstant(softplus_inverse(sigma));
    raw.h_rot = Eigen::Vector4d(1, 0, 0, 0);
    raw.h_alpha = h_alpha_;
    raw.h_color = {feature[0] / kSh0, feature[1] / kSh0, feature[2] / kSh0};
    return raw;
}

LinearHead::LinearHead(int feature_dim, uint64_t seed) : feature_dim_(feature_dim) {
    const int in = feature_dim + 1;  // depth appended as an extra input
    Rng rng(seed);
    auto init = [&](int rows) {
        Eigen::MatrixXd m(rows, in);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < in; ++c) {
                m(r, c) = 0.02 * rng.normal();
            }
        }
        return m;
    };
    w_scale = init(3);
    w_rot = init(4);
    w_alpha = init(1);
    w_color = init(3);
    b_scale = Eigen::VectorXd::Constant(3, softplus_inverse(0.2));
    b_rot = Eigen::VectorXd::Zero(4);
    b_rot[0] = 1.0;
    b_alpha = Eigen::VectorXd::Zero(1);
    b_color = Eigen::VectorXd::Zero(3);
}

namespace {

Eigen::VectorXd augmented_input(const Eigen::VectorXd& feature, double depth) {
    Eigen::VectorXd aug(feature.size() + 1);
    aug.head(feature.size()) = feature;
    aug[feature.size()] = depth;
    return aug;
}

}  // namespace

RawHeads LinearHead::evaluate(const Eigen::VectorXd& feature, double depth,
                              const CameraIntrinsics&) const {
    if (feature.size() != feature_dim_) {
        throw ShapeError("LinearHead: expected " + std::to_string(feature_dim_) +
                         " feature channels, got " + std::to_string(feature.size()));
    }
    const Eigen::VectorXd aug = augmented_input(feature, depth);
    RawHeads raw;
    raw.h_scale = w_scale * aug + b_scale;
    raw.h_rot = w_rot * aug + b_rot;
    raw.h_alpha = (w_alpha * aug + b_alpha)[0];
    const Eigen::Vector3d c = w_color * aug + b_color;
    raw.h_color = {c[0], c[1], c[2]};
    return raw;
}

LinearHeadGrad::LinearHeadGrad(const LinearHead& head) {
    w_scale = Eigen::MatrixXd::Zero(head.w_scale.rows(), head.w_scale.cols());
    w_rot = Eigen::MatrixXd::Zero(head.w_rot.rows(), head.w_rot.cols());
    w_alpha = Eigen::MatrixXd::Zero(head.w_alpha.rows(), head.w_alpha.cols());
    w_color = Eigen::MatrixXd::Zero(head.w_color.rows(), head.w_color.cols());
    b_scale = Eigen::VectorXd::Zero(3);
    b_rot = Eigen::VectorXd::Zero(4);
    b_alpha = Eigen::VectorXd::Zero(1);
    b_color = Eigen::VectorXd::Zero(3);
}

void LinearHeadGrad::setZero() {
    w_scale.setZero();
    w_rot.setZero();
    w_alpha.setZero();
    w_color.setZero();
    b_scale.setZero();
    b_rot.setZero();
    b_alpha.setZero();
    b_color.setZero();
}

void accumulate_head_gradient(const LinearHead& head, const Eigen::VectorXd& feature, double depth,
                              const Eigen::Vector3d& d_scale, const Eigen::Vector4d& d_rot,
                              double d_opacity, const std::vector<double>& d_sh,
                              LinearHeadGrad& grad) {
    const Eigen::VectorXd aug = augmented_input(feature, depth);
    CameraIntrinsics dummy;
    dummy.fx = 1.0;  // unused by LinearHead
    const RawHeads raw = head.evaluate(feature, depth, dummy);

    // softplus'(x) = logistic(x)
    Eigen::Vector3d dh_scale;
    for (int i = 0; i < 3; ++i) {
        dh_scale[i] = d_scale[i] * logistic(raw.h_scale[i]);
    }
    // r = h / |h|: J = (I - r r^T) / |h|
    Eigen::Vector4d dh_rot = Eigen::Vector4d::Zero();
    const double n = raw.h_rot.norm();
    if (n > 0.0) {
        const Eigen::Vector4d r = raw.h_rot / n;
        dh_rot = (d_rot - r * r.dot(d_rot)) / n;
    }
    const double a = logistic(raw.h_alpha);
    const double dh_alpha = d_opacity * a * (1.0 - a);
    Eigen::Vector3d dh_color(d_sh.size() > 0 ? d_sh[0] : 0.0, d_sh.size() > 1 ? d_sh[1] : 0.0,
                             d_sh.size() > 2 ? d_sh[2] : 0.0);

    grad.w_scale += dh_scale * aug.transpose();
    grad.b_scale += dh_scale;
    grad.w_rot += dh_rot * aug.transpose();
    grad.b_rot += dh_rot;
    grad.w_alpha += dh_alpha * aug.transpose();
    grad.b_alpha[0] += dh_alpha;
    grad.w_color += dh_color * aug.transpose();
    grad.b_color += dh_color;
}

void apply_head_gradient(LinearHead& head, const LinearHeadGrad& grad, double lr) {
    head.w_scale -= lr * grad.w_scale;
    head.b_scale -= lr * grad.b_scale;
    head.w_rot -= lr * grad.w_rot;
    head.b_rot -= lr * grad.b_rot;
    head.w_alpha -= lr * grad.w_alpha;
    head.b_alpha -= lr * grad.b_alpha;
    head.w_color -= lr * grad.w_color;
    head.b_color -= lr * grad.b_color;
}

GaussianSet lift_pixels(const DepthMap& depth, const FeatureMap& feats, const CameraRig& rig,
                        const ParamHead& head, ActivationDiagnostics* diag) {
    const int n = feats.num_views();
    if (depth.num_views() != n || rig.num_cameras() != n) {
        throw ShapeError("lift_pixels: view count mismatch (depth " +
                         std::to_string(depth.num_views()) + ", features " + std::to_string(n) +
                         ", rig " + std::to_string(rig.num_cameras()) + ")");
    }
    const int h = feats.height();
    const int w = feats.width();
    for (int i = 0; i < n; ++i) {
        if (depth.views[i].height() != h || depth.views[i].width() != w) {
            throw ShapeError("lift_pixels: depth map " + std::to_string(i) +
                             " does not match feature map size");
        }
    }

    GaussianSet set;
    set.sh_degree = head.sh_degree();
    set.primitives.reserve(static_cast<size_t>(n) * h * w);
    set.provenance.reserve(static_cast<size_t>(n) * h * w);

    Eigen::VectorXd feature(feats.channels());
    for (int cam = 0; cam < n; ++cam) {
        const Camera& camera = rig.cameras[cam];
        for (int row = 0; row < h; ++row) {
            for (int col = 0; col < w; ++col) {
                const double d = depth.views[cam].at(row, col);
                if (!(d > 0.0) || !std::isfinite(d)) {
                    throw InvalidDepthError("lift_pixels: nonpositive depth at camera " +
                                            std::to_string(cam) + " pixel (" +
                                            std::to_string(col) + ", " + std::to_string(row) +
                                            ")");
                }
                for (int c = 0; c < feats.channels(); ++c) {
                    feature[c] = feats.at(cam, c, row, col);
                }
                const RawHeads raw = head.evaluate(feature, d, camera.intrinsics);
                const ActivatedParams params = activate_params(raw, diag);

                GaussianPrimitive prim;
                prim.mu = unproject(Eigen::Vector2d(col, row), d, camera);
                prim.scale = params.scale;
                prim.rot = params.rot;
                prim.opacity = params.opacity;
                prim.sh = params.sh;
                set.primitives.push_back(std::move(prim));
                set.provenance.push_back({cam, row, col});
            }
        }
    }
    return set;
}

void save_gaussians(const std::string& path, const GaussianSet& set) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw IoError("save_gaussians: cannot open " + path);
    }
    const char magic[4] = {'V', 'R', 'G', 'S'};
    const uint32_t version = 1;
    const uint32_t count = static_cast<uint32_t>(set.primitives.size());
    const uint32_t degree = static_cast<uint32_t>(set.sh_degree);
    std::fwrite(magic, 1, 4, fp);
    std::fwrite(&version, 4, 1, fp);
    std::fwrite(&count, 4, 1, fp);
    std::fwrite(&degree, 4, 1, fp);

    const int coeffs = sh_coeff_count(set.sh_degree);
    std::vector<float> rec(11 + coeffs);
    for (const GaussianPrimitive& p : set.primitives) {
        int i = 0;
        for (int k = 0; k < 3; ++k) rec[i++] = static_cast<float>(p.mu[k]);
        for (int k = 0; k < 3; ++k) rec[i++] = static_cast<float>(p.scale[k]);
        for (int k = 0; k < 4; ++k) rec[i++] = static_cast<float>(p.rot[k]);
        rec[i++] = static_cast<float>(p.opacity);
        if (static_cast<int>(p.sh.size()) != coeffs) {
            std::fclose(fp);
            throw ShapeError("save_gaussians: primitive has " + std::to_string(p.sh.size()) +
                             " SH coefficients, expected " + std::to_string(coeffs));
        }
        for (int k = 0; k < coeffs; ++k) rec[i++] = static_cast<float>(p.sh[k]);
        std::fwrite(rec.data(), sizeof(float), rec.size(), fp);
    }
    std::fclose(fp);
}

GaussianSet load_gaussians(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) {
        throw IoError("load_gaussians: cannot open " + path);
    }
    char magic[4];
    uint32_t version = 0, count = 0, degree = 0;
    if (std::fread(magic, 1, 4, fp) != 4 || std::memcmp(magic, "VRGS", 4) != 0 ||
        std::fread(&version, 4, 1, fp) != 1 || version != 1 ||
        std::fread(&count, 4, 1, fp) != 1 || std::fread(&degree, 4, 1, fp) != 1 || degree > 3) {
        std::fclose(fp);
        throw IoError("load_gaussians: bad header in " + path);
    }
    GaussianSet set;
    set.sh_degree = static_cast<int>(degree);
    const int coeffs = sh_coeff_count(set.sh_degree);
    std::vector<float> rec(11 + coeffs);
    set.primitives.reserve(count);
    for (uint32_t idx = 0; idx < count; ++idx) {
        if (std::fread(rec.data(), sizeof(float), rec.size(), fp) != rec.size()) {
            std::fclose(fp);
            throw IoError("load_gaussians: truncated file " + path);
        }
        GaussianPrimitive p;
        int i = 0;
        for (int k = 0; k < 3; ++k) p.mu[k] = rec[i++];
        for (int k = 0; k < 3; ++k) p.scale[k] = rec[i++];
        for (int k = 0; k < 4; ++k) p.rot[k] = rec[i++];
        p.opacity = rec[i++];
        p.sh.resize(coeffs);
        for (int k = 0; k < coeffs; ++k) p.sh[k] = rec[i++];
        set.primitives.push_back(std::move(p));
    }
    std::fclose(fp);
    return set;
}

}  // namespace vrsplat
