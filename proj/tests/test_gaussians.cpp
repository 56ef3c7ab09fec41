// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/gaussians.hpp"

#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>

namespace vrsplat {
namespace {

Eigen::Vector4d random_unit_quaternion(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    while (q.norm() < 0.3) {
        q = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    }
    return q.normalized();
}

// Independent oracle: rotation through Eigen's quaternion type, explicit
// R * diag(s^2) * R^T product.
Eigen::Matrix3d covariance_oracle(const Eigen::Vector3d& s, const Eigen::Vector4d& q) {
    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    const Eigen::Matrix3d r = quat.normalized().toRotationMatrix();
    return r * s.cwiseProduct(s).asDiagonal() * r.transpose();
}

TEST(CovarianceFrom, IdentityInputsGiveIdentity) {
    const Eigen::Matrix3d sigma =
        covariance_from(Eigen::Vector3d::Ones(), Eigen::Vector4d(1, 0, 0, 0));
    EXPECT_NEAR((sigma - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(CovarianceFrom, NinetyDegreeZRotationPermutesAxes) {
    // s = (2, 1, 1), 90 degrees about z: sigma = diag(1, 4, 1).
    const double c = std::cos(M_PI / 4.0), s = std::sin(M_PI / 4.0);
    const Eigen::Vector4d q(c, 0, 0, s);
    const Eigen::Matrix3d sigma = covariance_from(Eigen::Vector3d(2, 1, 1), q);
    Eigen::Matrix3d expected = Eigen::Matrix3d::Zero();
    expected.diagonal() << 1, 4, 1;
    EXPECT_NEAR((sigma - expected).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((sigma - covariance_oracle({2, 1, 1}, q)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(CovarianceFrom, RandomInputsMatchOracleSymmetricPd) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Vector3d s(rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0),
                                rng.uniform(0.01, 3.0));
        const Eigen::Vector4d q = random_unit_quaternion(rng);
        const Eigen::Matrix3d sigma = covariance_from(s, q);
        EXPECT_NEAR((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
        EXPECT_NEAR((sigma - covariance_oracle(s, q)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
        EXPECT_EQ(Eigen::LLT<Eigen::Matrix3d>(sigma).info(), Eigen::Success);
        // Rotation preserves the trace: sum of s^2.
        EXPECT_NEAR(sigma.trace(), s.squaredNorm(), 1e-9);
        // Eigenvalues equal {s^2} as a multiset.
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(sigma);
        Eigen::Vector3d expected = s.cwiseProduct(s);
        std::sort(expected.data(), expected.data() + 3);
        EXPECT_NEAR((es.eigenvalues() - expected).cwiseAbs().maxCoeff(), 0.0, 1e-9);
    }
}

TEST(CovarianceFrom, ZeroQuaternionThrows) {
    EXPECT_THROW(covariance_from(Eigen::Vector3d::Ones(), Eigen::Vector4d::Zero()),
                 InvalidRotationError);
}

TEST(ActivateParams, SoftplusOfZeroIsLogTwo) {
    RawHeads raw;
    raw.h_rot = Eigen::Vector4d(1, 0, 0, 0);
    const ActivatedParams p = activate_params(raw);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(p.scale[i], std::log(2.0), 1e-12);
    }
}

TEST(ActivateParams, OpacitySaturates) {
    RawHeads raw;
    raw.h_rot = Eigen::Vector4d(1, 0, 0, 0);
    raw.h_alpha = -40.0;
    EXPECT_LT(activate_params(raw).opacity, 1e-15);
    raw.h_alpha = 40.0;
    EXPECT_GT(activate_params(raw).opacity, 1.0 - 1e-15);
}

TEST(ActivateParams, QuaternionNormalization) {
    RawHeads raw;
    raw.h_rot = Eigen::Vector4d(2, 0, 0, 0);
    const ActivatedParams p = activate_params(raw);
    EXPECT_NEAR((p.rot - Eigen::Vector4d(1, 0, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(ActivateParams, ZeroQuaternionFallsBackToIdentityWithDiagnostic) {
    RawHeads raw;  // h_rot all zero
    ActivationDiagnostics diag;
    const ActivatedParams p = activate_params(raw, &diag);
    EXPECT_EQ(p.rot, Eigen::Vector4d(1, 0, 0, 0));
    EXPECT_EQ(diag.zero_quaternion_fallbacks, 1u);
}

TEST(ActivateParams, MonotoneInScaleAndOpacityHeads) {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        RawHeads a, b;
        a.h_rot = b.h_rot = Eigen::Vector4d(1, 0, 0, 0);
        for (int i = 0; i < 3; ++i) {
            a.h_scale[i] = rng.uniform(-5.0, 5.0);
            b.h_scale[i] = a.h_scale[i] + rng.uniform(0.0, 2.0);
        }
        a.h_alpha = rng.uniform(-5.0, 5.0);
        b.h_alpha = a.h_alpha + rng.uniform(0.0, 2.0);
        const ActivatedParams pa = activate_params(a);
        const ActivatedParams pb = activate_params(b);
        for (int i = 0; i < 3; ++i) {
            EXPECT_LE(pa.scale[i], pb.scale[i]);
        }
        EXPECT_LE(pa.opacity, pb.opacity);
    }
}

TEST(EvalSh, DegreeZeroIsIsotropic) {
    const std::vector<double> sh = {1.0, 2.0, 3.0};
    Rng rng(5);
    const Eigen::Vector3d expected = kSh0 * Eigen::Vector3d(1, 2, 3);
    for (int i = 0; i < 100; ++i) {
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        std::vector<double> basis;
        const Eigen::Vector3d rgb = eval_sh_with_basis(sh, dir, basis);
        EXPECT_NEAR((rgb - expected).norm(), 0.0, 1e-12);
    }
    EXPECT_NEAR(eval_sh(sh, Eigen::Vector3d(0, 0, 1)).x(), 0.2820947918, 1e-9);
}

TEST(EvalSh, DegreeOneZeroHigherBandsIsDirectionIndependent) {
    std::vector<double> sh(12, 0.0);
    sh[0] = 0.9;
    sh[1] = 0.5;
    sh[2] = 0.7;
    Rng rng(6);
    const Eigen::Vector3d base = eval_sh(sh, Eigen::Vector3d(0, 0, 1));
    for (int i = 0; i < 100; ++i) {
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        EXPECT_NEAR((eval_sh(sh, dir) - base).norm(), 0.0, 1e-12);
    }
}

// Real SH basis table: the z-linear band evaluates to +/- 0.4886025119 at
// (0, 0, +/-1), so the raw outputs differ by twice that.
TEST(EvalSh, ZLinearBandDifference) {
    std::vector<double> sh(12, 0.0);
    sh[2 * 3 + 0] = 1.0;  // band 2 (z-linear), red channel
    std::vector<double> basis;
    const Eigen::Vector3d up = eval_sh_with_basis(sh, Eigen::Vector3d(0, 0, 1), basis);
    const Eigen::Vector3d down = eval_sh_with_basis(sh, Eigen::Vector3d(0, 0, -1), basis);
    EXPECT_NEAR(up.x() - down.x(), 2.0 * 0.4886025119, 1e-9);
}

TEST(EvalSh, CoefficientCountMismatchThrows) {
    EXPECT_THROW(eval_sh(std::vector<double>(5, 0.0), Eigen::Vector3d(0, 0, 1)), ShapeError);
}

TEST(EvalSh, ClampsToUnitInterval) {
    const std::vector<double> sh = {10.0, -10.0, 0.5};
    const Eigen::Vector3d rgb = eval_sh(sh, Eigen::Vector3d(0, 0, 1));
    EXPECT_EQ(rgb.x(), 1.0);
    EXPECT_EQ(rgb.y(), 0.0);
    EXPECT_NEAR(rgb.z(), 0.5 * kSh0, 1e-12);
}

// Finite-difference check of the basis direction-gradient table, degrees 1-3.
TEST(ShBasisGradient, MatchesFiniteDifferences) {
    Rng rng(21);
    for (int degree = 1; degree <= 3; ++degree) {
        const int bands = (degree + 1) * (degree + 1);
        std::vector<double> sh(3 * bands, 0.0);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
            dir.normalize();
            Eigen::Matrix<double, Eigen::Dynamic, 3> dbasis;
            sh_basis_gradient(degree, dir, dbasis);
            const double h = 1e-6;
            for (int axis = 0; axis < 3; ++axis) {
                Eigen::Vector3d hi = dir, lo = dir;
                hi[axis] += h;
                lo[axis] -= h;
                for (int b = 0; b < bands; ++b) {
                    std::fill(sh.begin(), sh.end(), 0.0);
                    sh[b * 3] = 1.0;
                    std::vector<double> basis;
                    const double fhi = eval_sh_with_basis(sh, hi, basis).x();
                    const double flo = eval_sh_with_basis(sh, lo, basis).x();
                    const double fd = (fhi - flo) / (2.0 * h);
                    EXPECT_NEAR(dbasis(b, axis), fd, 1e-5)
                        << "degree " << degree << " band " << b << " axis " << axis;
                }
            }
        }
    }
}

class LiftFixture : public ::testing::Test {
protected:
    static CameraRig two_camera_rig(int size) {
        CameraRig rig;
        Camera cam;
        cam.intrinsics = {double(size), double(size), (size - 1) / 2.0, (size - 1) / 2.0, size,
                          size};
        rig.cameras.push_back(cam);  // identity pose, looks +z
        Camera cam2 = cam;
        cam2.extrinsics.translation = Eigen::Vector3d(0.5, 0.0, 0.0);
        rig.cameras.push_back(cam2);
        return rig;
    }

    static FeatureMap constant_features(int n, int size, double value) {
        FeatureMap f(n, 8, size, size);
        std::fill(f.data().begin(), f.data().end(), value);
        return f;
    }
};

TEST_F(LiftFixture, CountAndProvenanceRasterOrder) {
    const CameraRig rig = two_camera_rig(4);
    DepthMap depth;
    depth.views = {Grid(4, 4, 5.0), Grid(4, 4, 5.0)};
    const FeatureMap feats = constant_features(2, 4, 0.5);
    const AnalyticHead head;
    const GaussianSet set = lift_pixels(depth, feats, rig, head);
    ASSERT_EQ(set.size(), 32u);
    size_t idx = 0;
    for (int cam = 0; cam < 2; ++cam) {
        for (int row = 0; row < 4; ++row) {
            for (int col = 0; col < 4; ++col, ++idx) {
                EXPECT_EQ(set.provenance[idx].camera, cam);
                EXPECT_EQ(set.provenance[idx].row, row);
                EXPECT_EQ(set.provenance[idx].col, col);
            }
        }
    }
}

TEST_F(LiftFixture, ConstantDepthPlaneLandsOnPlane) {
    CameraRig rig;
    rig.cameras.push_back(two_camera_rig(4).cameras[0]);  // identity pose
    DepthMap depth;
    depth.views = {Grid(4, 4, 5.0)};
    const GaussianSet set =
        lift_pixels(depth, constant_features(1, 4, 0.3), rig, AnalyticHead());
    for (const GaussianPrimitive& p : set.primitives) {
        EXPECT_NEAR(p.mu.z(), 5.0, 1e-9);
    }
}

TEST_F(LiftFixture, PrincipalPointPixelLiftsAlongOpticalAxis) {
    CameraRig rig;
    Camera cam;
    cam.intrinsics = {8.0, 8.0, 2.0, 1.0, 5, 3};
    rig.cameras.push_back(cam);
    DepthMap depth;
    depth.views = {Grid(3, 5, 7.0)};
    const GaussianSet set =
        lift_pixels(depth, FeatureMap(1, 8, 3, 5), rig, AnalyticHead());
    // Pixel (col=2, row=1) sits at the principal point.
    const size_t idx = 1 * 5 + 2;
    EXPECT_NEAR((set.primitives[idx].mu - Eigen::Vector3d(0, 0, 7)).norm(), 0.0, 1e-9);
    // Cross-check through the unprojection oracle.
    EXPECT_NEAR(
        (set.primitives[idx].mu - unproject({2.0, 1.0}, 7.0, rig.cameras[0])).norm(), 0.0, 1e-12);
}

TEST_F(LiftFixture, NonpositiveDepthNamesTheOffendingPixel) {
    const CameraRig rig = two_camera_rig(4);
    DepthMap depth;
    depth.views = {Grid(4, 4, 5.0), Grid(4, 4, 5.0)};
    depth.views[1].at(2, 3) = -1.0;
    try {
        lift_pixels(depth, constant_features(2, 4, 0.5), rig, AnalyticHead());
        FAIL() << "expected InvalidDepthError";
    } catch (const InvalidDepthError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("camera 1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(3, 2)"), std::string::npos) << msg;
    }
}

TEST_F(LiftFixture, AnalyticHeadParameters) {
    CameraRig rig;
    rig.cameras.push_back(two_camera_rig(4).cameras[0]);
    DepthMap depth;
    depth.views = {Grid(4, 4, 10.0)};
    FeatureMap feats = constant_features(1, 4, 0.0);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            feats.at(0, 0, y, x) = 0.25;
            feats.at(0, 1, y, x) = 0.5;
            feats.at(0, 2, y, x) = 0.75;
        }
    }
    const AnalyticHead head(0.9, 0.9);
    const GaussianSet set = lift_pixels(depth, feats, rig, head);
    const GaussianPrimitive& p = set.primitives.front();
    EXPECT_NEAR(p.opacity, 0.9, 1e-12);
    EXPECT_NEAR(p.scale.x(), 0.9 * 10.0 / 4.0, 1e-12);  // gain * depth / fx
    EXPECT_EQ(p.rot, Eigen::Vector4d(1, 0, 0, 0));
    // Degree-0 color reproduces the first three feature channels exactly.
    const Eigen::Vector3d rgb = eval_sh(p.sh, Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR((rgb - Eigen::Vector3d(0.25, 0.5, 0.75)).norm(), 0.0, 1e-12);
}

TEST(GaussianIo, BinaryRoundTrip) {
    Rng rng(3);
    GaussianSet set;
    set.sh_degree = 1;
    for (int i = 0; i < 17; ++i) {
        GaussianPrimitive p;
        p.mu = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(1, 10)};
        p.scale = {rng.uniform(0.01, 1), rng.uniform(0.01, 1), rng.uniform(0.01, 1)};
        p.rot = random_unit_quaternion(rng);
        p.opacity = rng.uniform(0, 1);
        p.sh.resize(12);
        for (double& v : p.sh) {
            v = rng.uniform(-1, 1);
        }
        set.primitives.push_back(std::move(p));
    }
    const std::string path = std::filesystem::temp_directory_path() / "vrsplat_gs_test.bin";
    save_gaussians(path, set);

    // Header layout is byte-exact: magic, version, count, degree.
    {
        FILE* fp = std::fopen(path.c_str(), "rb");
        ASSERT_NE(fp, nullptr);
        char header[16];
        ASSERT_EQ(std::fread(header, 1, 16, fp), 16u);
        std::fclose(fp);
        EXPECT_EQ(std::string(header, 4), "VRGS");
        uint32_t version, count, degree;
        std::memcpy(&version, header + 4, 4);
        std::memcpy(&count, header + 8, 4);
        std::memcpy(&degree, header + 12, 4);
        EXPECT_EQ(version, 1u);
        EXPECT_EQ(count, 17u);
        EXPECT_EQ(degree, 1u);
        EXPECT_EQ(std::filesystem::file_size(path), 16u + 17u * (11u + 12u) * 4u);
    }

    const GaussianSet loaded = load_gaussians(path);
    ASSERT_EQ(loaded.size(), set.size());
    EXPECT_EQ(loaded.sh_degree, 1);
    for (size_t i = 0; i < set.size(); ++i) {
        // Values survive the float32 round trip exactly as floats.
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(static_cast<float>(set.primitives[i].mu[k]),
                      static_cast<float>(loaded.primitives[i].mu[k]));
        }
        EXPECT_EQ(static_cast<float>(set.primitives[i].opacity),
                  static_cast<float>(loaded.primitives[i].opacity));
        for (int k = 0; k < 12; ++k) {
            EXPECT_EQ(static_cast<float>(set.primitives[i].sh[k]),
                      static_cast<float>(loaded.primitives[i].sh[k]));
        }
    }
    std::filesystem::remove(path);
}

}  // namespace
}  // namespace vrsplat
