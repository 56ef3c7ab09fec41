// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/rasterizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vrsplat {
namespace {

Camera test_camera(int size = 32, double f = 40.0) {
    Camera cam;
    cam.intrinsics = {f, f, (size - 1) / 2.0, (size - 1) / 2.0, size, size};
    return cam;
}

GaussianPrimitive flat_splat(const Eigen::Vector3d& mu, double sigma, double opacity,
                             const Eigen::Vector3d& rgb) {
    GaussianPrimitive p;
    p.mu = mu;
    p.scale = Eigen::Vector3d::Constant(sigma);
    p.rot = Eigen::Vector4d(1, 0, 0, 0);
    p.opacity = opacity;
    p.sh = {rgb.x() / kSh0, rgb.y() / kSh0, rgb.z() / kSh0};
    return p;
}

GaussianSet random_scene(uint64_t seed, int count, const Camera& cam) {
    Rng rng(seed);
    GaussianSet set;
    set.sh_degree = 0;
    const double cx = cam.intrinsics.cx, cy = cam.intrinsics.cy;
    for (int i = 0; i < count; ++i) {
        const double z = rng.uniform(2.0, 12.0);
        const double px = rng.uniform(1.0, cam.intrinsics.width - 2.0);
        const double py = rng.uniform(1.0, cam.intrinsics.height - 2.0);
        GaussianPrimitive p;
        p.mu = {(px - cx) / cam.intrinsics.fx * z, (py - cy) / cam.intrinsics.fy * z, z};
        const double sigma = rng.uniform(0.5, 3.0) * z / cam.intrinsics.fx;
        p.scale = {sigma * rng.uniform(0.6, 1.5), sigma * rng.uniform(0.6, 1.5),
                   sigma * rng.uniform(0.6, 1.5)};
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        while (q.norm() < 0.3) {
            q = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        }
        p.rot = q.normalized();
        p.opacity = rng.uniform(0.1, 0.85);
        p.sh = {rng.uniform(0.0, 1.0) / kSh0, rng.uniform(0.0, 1.0) / kSh0,
                rng.uniform(0.0, 1.0) / kSh0};
        set.primitives.push_back(std::move(p));
    }
    return set;
}

double max_abs_diff(const RenderTarget& a, const RenderTarget& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.color.data().size(); ++i) {
        worst = std::max(worst, std::abs(a.color.data()[i] - b.color.data()[i]));
    }
    return worst;
}

// Independent per-pixel compositing oracle built only on the public
// project_gaussian output: naive sort, naive ellipse test, textbook
// front-to-back blending. Validates the reference renderer's semantics.
RenderTarget composite_oracle(const GaussianSet& set, const Camera& cam,
                              const RenderOptions& opts) {
    struct Entry {
        Splat2D splat;
        size_t index;
    };
    std::vector<Entry> splats;
    for (size_t i = 0; i < set.primitives.size(); ++i) {
        const auto s = project_gaussian(set.primitives[i], cam, opts);
        if (s) {
            splats.push_back({*s, i});
        }
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Entry& a, const Entry& b) {
        if (a.splat.depth != b.splat.depth) {
            return a.splat.depth < b.splat.depth;
        }
        return a.index < b.index;
    });

    RenderTarget rt;
    rt.color = Image(cam.intrinsics.height, cam.intrinsics.width);
    rt.alpha = Grid(cam.intrinsics.height, cam.intrinsics.width);
    rt.depth = Grid(cam.intrinsics.height, cam.intrinsics.width);
    rt.background = opts.background;
    for (int y = 0; y < cam.intrinsics.height; ++y) {
        for (int x = 0; x < cam.intrinsics.width; ++x) {
            Eigen::Vector3d color = Eigen::Vector3d::Zero();
            double transmittance = 1.0;
            double depth_acc = 0.0;
            for (const Entry& e : splats) {
                const Eigen::Vector2d d =
                    Eigen::Vector2d(x, y) - e.splat.mean2d;
                const double power = -0.5 * d.dot(e.splat.cov2d.inverse() * d);
                if (power < kPowerCutoff) {
                    continue;
                }
                const double alpha = e.splat.opacity * std::exp(power);
                color += transmittance * alpha * e.splat.rgb;
                depth_acc += transmittance * alpha * e.splat.depth;
                transmittance *= 1.0 - alpha;
            }
            color += transmittance * opts.background;
            for (int c = 0; c < 3; ++c) {
                rt.color.at(y, x, c) = color[c];
            }
            rt.alpha.at(y, x) = 1.0 - transmittance;
            rt.depth.at(y, x) = depth_acc + transmittance * opts.far_depth;
        }
    }
    return rt;
}

TEST(ProjectGaussian, OnAxisIsotropicMatchesAnalyticJacobian) {
    Camera cam = test_camera(128, 100.0);
    cam.intrinsics.cx = cam.intrinsics.cy = 63.5;
    const double z = 10.0, sigma = 0.2;
    const auto s = project_gaussian(flat_splat({0, 0, z}, sigma, 0.7, {1, 0, 0}), cam);
    ASSERT_TRUE(s.has_value());
    // On the optical axis J = diag(f/z, f/z), so cov2d = (f sigma / z)^2 I + floor.
    const double expected = std::pow(100.0 * sigma / z, 2) + 0.3;
    EXPECT_NEAR(s->cov2d(0, 0), expected, 1e-9);
    EXPECT_NEAR(s->cov2d(1, 1), expected, 1e-9);
    EXPECT_NEAR(s->cov2d(0, 1), 0.0, 1e-9);
    EXPECT_NEAR(s->mean2d.x(), 63.5, 1e-12);
    EXPECT_NEAR(s->depth, z, 1e-12);
}

TEST(ProjectGaussian, BehindCameraIsCulled) {
    const Camera cam = test_camera();
    EXPECT_FALSE(project_gaussian(flat_splat({0, 0, -5}, 0.1, 0.5, {1, 1, 1}), cam).has_value());
    EXPECT_FALSE(project_gaussian(flat_splat({0, 0, 0}, 0.1, 0.5, {1, 1, 1}), cam).has_value());
}

TEST(ProjectGaussian, OffImageIsCulled) {
    const Camera cam = test_camera(32, 40.0);
    // Far to the side: 3-sigma ellipse misses the image entirely.
    EXPECT_FALSE(
        project_gaussian(flat_splat({50.0, 0.0, 5.0}, 0.05, 0.5, {1, 1, 1}), cam).has_value());
}

TEST(ProjectGaussian, RigidTranslationInvariance) {
    Camera cam = test_camera();
    const Eigen::Vector3d offset(3.0, -2.0, 1.5);
    const GaussianPrimitive g = flat_splat({0.4, -0.2, 6.0}, 0.3, 0.6, {0.2, 0.5, 0.8});
    const auto a = project_gaussian(g, cam);

    Camera cam2 = cam;
    cam2.extrinsics.translation = -cam2.extrinsics.rotation * offset;
    GaussianPrimitive g2 = g;
    g2.mu += offset;
    const auto b = project_gaussian(g2, cam2);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR((a->mean2d - b->mean2d).norm(), 0.0, 1e-9);
    EXPECT_NEAR((a->cov2d - b->cov2d).cwiseAbs().maxCoeff(), 0.0, 1e-9);
    EXPECT_NEAR(a->depth, b->depth, 1e-9);
    EXPECT_NEAR((a->rgb - b->rgb).norm(), 0.0, 1e-9);
}

TEST(Rasterize, EmptySetGivesBackground) {
    const Camera cam = test_camera();
    RenderOptions opts;
    opts.background = {0.1, 0.2, 0.3};
    GaussianSet set;
    for (const RenderTarget& rt :
         {rasterize(set, cam, opts), rasterize_reference(set, cam, opts)}) {
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                EXPECT_EQ(rt.color.at(y, x, 0), 0.1);
                EXPECT_EQ(rt.color.at(y, x, 1), 0.2);
                EXPECT_EQ(rt.color.at(y, x, 2), 0.3);
                EXPECT_EQ(rt.alpha.at(y, x), 0.0);
                EXPECT_EQ(rt.depth.at(y, x), opts.far_depth);
            }
        }
    }
}

TEST(Rasterize, OpaqueSplatCenteredOnPixelTakesItsColor) {
    const Camera cam = test_camera(32, 40.0);
    // Center the splat exactly on pixel (16, 16): exponent 0, full opacity.
    const double z = 5.0;
    const double px = 16.0, py = 16.0;
    const Eigen::Vector3d mu((px - cam.intrinsics.cx) / cam.intrinsics.fx * z,
                             (py - cam.intrinsics.cy) / cam.intrinsics.fy * z, z);
    GaussianSet set;
    set.sh_degree = 0;
    set.primitives.push_back(flat_splat(mu, 0.1, 1.0, {0.25, 0.5, 0.75}));
    RenderOptions opts;
    opts.background = {0, 0, 0};
    for (const RenderTarget& rt :
         {rasterize(set, cam, opts), rasterize_reference(set, cam, opts)}) {
        EXPECT_NEAR(rt.color.at(16, 16, 0), 0.25, 1e-12);
        EXPECT_NEAR(rt.color.at(16, 16, 1), 0.5, 1e-12);
        EXPECT_NEAR(rt.color.at(16, 16, 2), 0.75, 1e-12);
        EXPECT_NEAR(rt.alpha.at(16, 16), 1.0, 1e-12);
        EXPECT_NEAR(rt.depth.at(16, 16), z, 1e-12);
    }
}

TEST(Rasterize, MatchesReferenceOnRandomScenes) {
    const Camera cam = test_camera(32, 40.0);
    RenderOptions opts;
    opts.background = {0.3, 0.3, 0.35};
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const GaussianSet set = random_scene(seed, 64, cam);
        const RenderTarget tile = rasterize(set, cam, opts);
        const RenderTarget ref = rasterize_reference(set, cam, opts);
        EXPECT_LE(max_abs_diff(tile, ref), 1e-5) << "seed " << seed;
    }
}

TEST(Rasterize, ReferenceMatchesIndependentCompositeOracle) {
    const Camera cam = test_camera(16, 20.0);
    RenderOptions opts;
    opts.background = {0.2, 0.4, 0.6};
    const GaussianSet set = random_scene(99, 12, cam);
    const RenderTarget ref = rasterize_reference(set, cam, opts);
    const RenderTarget oracle = composite_oracle(set, cam, opts);
    EXPECT_LE(max_abs_diff(ref, oracle), 1e-10);
    for (size_t i = 0; i < ref.alpha.data().size(); ++i) {
        EXPECT_NEAR(ref.alpha.data()[i], oracle.alpha.data()[i], 1e-10);
        EXPECT_NEAR(ref.depth.data()[i], oracle.depth.data()[i], 1e-8);
    }
}

TEST(Rasterize, ZeroOpacityGivesBackground) {
    const Camera cam = test_camera();
    RenderOptions opts;
    opts.background = {0.6, 0.1, 0.9};
    GaussianSet set = random_scene(5, 30, cam);
    for (GaussianPrimitive& p : set.primitives) {
        p.opacity = 0.0;
    }
    const RenderTarget rt = rasterize_reference(set, cam, opts);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            EXPECT_EQ(rt.color.at(y, x, 0), 0.6);
            EXPECT_EQ(rt.alpha.at(y, x), 0.0);
        }
    }
}

TEST(Rasterize, PermutationInvarianceWithDistinctDepths) {
    const Camera cam = test_camera();
    RenderOptions opts;
    opts.background = {0.2, 0.2, 0.2};
    GaussianSet set = random_scene(7, 40, cam);
    const RenderTarget base = rasterize(set, cam, opts);

    GaussianSet shuffled = set;
    Rng rng(8);
    for (size_t i = shuffled.primitives.size(); i > 1; --i) {
        std::swap(shuffled.primitives[i - 1], shuffled.primitives[rng.next_below(i)]);
    }
    const RenderTarget permuted = rasterize(shuffled, cam, opts);
    EXPECT_EQ(max_abs_diff(base, permuted), 0.0);
}

TEST(Rasterize, EqualDepthTieBreaksByLowerIndexFirst) {
    const Camera cam = test_camera(32, 40.0);
    const double z = 5.0;
    const Eigen::Vector3d mu((16.0 - cam.intrinsics.cx) / cam.intrinsics.fx * z,
                             (16.0 - cam.intrinsics.cy) / cam.intrinsics.fy * z, z);
    GaussianSet set;
    set.sh_degree = 0;
    set.primitives.push_back(flat_splat(mu, 0.1, 0.6, {1.0, 0.0, 0.0}));
    set.primitives.push_back(flat_splat(mu, 0.1, 0.6, {0.0, 1.0, 0.0}));
    RenderOptions opts;
    opts.background = {0, 0, 0};
    const RenderTarget rt = rasterize(set, cam, opts);
    // Index 0 composites first: red 0.6, then green 0.4 * 0.6.
    EXPECT_NEAR(rt.color.at(16, 16, 0), 0.6, 1e-12);
    EXPECT_NEAR(rt.color.at(16, 16, 1), 0.24, 1e-12);

    std::swap(set.primitives[0], set.primitives[1]);
    const RenderTarget swapped = rasterize(set, cam, opts);
    EXPECT_NEAR(swapped.color.at(16, 16, 1), 0.6, 1e-12);
    EXPECT_NEAR(swapped.color.at(16, 16, 0), 0.24, 1e-12);
}

TEST(Rasterize, AlphaEqualsCompositingWeightSum) {
    const Camera cam = test_camera();
    RenderOptions opts;
    const GaussianSet set = random_scene(13, 48, cam);
    const RenderTarget rt = rasterize_reference(set, cam, opts);
    for (size_t i = 0; i < rt.alpha.data().size(); ++i) {
        EXPECT_GE(rt.alpha.data()[i], 0.0);
        EXPECT_LE(rt.alpha.data()[i], 1.0);
    }
    // The oracle accumulates the weights explicitly; equality checked there.
    const RenderTarget oracle = composite_oracle(set, cam, opts);
    for (size_t i = 0; i < rt.alpha.data().size(); ++i) {
        EXPECT_NEAR(rt.alpha.data()[i], oracle.alpha.data()[i], 1e-12);
    }
}

}  // namespace
}  // namespace vrsplat
