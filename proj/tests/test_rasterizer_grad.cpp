// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "vrsplat/harness.hpp"
#include "vrsplat/rasterizer.hpp"

namespace vrsplat {
namespace {

TEST(RasterizeBackward, ZeroUpstreamGivesZeroGradients) {
    Camera cam;
    cam.intrinsics = {40.0, 40.0, 7.5, 7.5, 16, 16};
    GaussianSet set;
    set.sh_degree = 0;
    GaussianPrimitive p;
    p.mu = {0.1, -0.1, 5.0};
    p.scale = Eigen::Vector3d::Constant(0.5);
    p.rot = Eigen::Vector4d(1, 0, 0, 0);
    p.opacity = 0.5;
    p.sh = {1.0, 1.0, 1.0};
    set.primitives.push_back(p);

    ForwardCache cache;
    rasterize(set, cam, {}, &cache);
    const Image upstream(16, 16, 0.0);
    const GaussianGradients g = rasterize_backward(set, cam, upstream, cache);
    EXPECT_EQ(g.d_mu[0].norm(), 0.0);
    EXPECT_EQ(g.d_scale[0].norm(), 0.0);
    EXPECT_EQ(g.d_rot[0].norm(), 0.0);
    EXPECT_EQ(g.d_opacity[0], 0.0);
    EXPECT_EQ(g.d_sh[0][0], 0.0);
}

TEST(RasterizeBackward, MissingCacheIsUsageError) {
    Camera cam;
    cam.intrinsics = {40.0, 40.0, 7.5, 7.5, 16, 16};
    GaussianSet set;
    const ForwardCache cache;  // never filled
    EXPECT_THROW(rasterize_backward(set, cam, Image(16, 16), cache), UsageError);
}

// Single degree-0 Gaussian: the gradient with respect to the band-0 SH
// coefficient is sum_pixels upstream * weight * Y00, with weight equal to the
// compositing weight (here the alpha map, since there is one splat).
TEST(RasterizeBackward, SingleSplatColorGradientMatchesWeights) {
    Camera cam;
    cam.intrinsics = {40.0, 40.0, 7.5, 7.5, 16, 16};
    GaussianSet set;
    set.sh_degree = 0;
    GaussianPrimitive p;
    p.mu = {0.0, 0.0, 5.0};
    p.scale = Eigen::Vector3d::Constant(0.4);
    p.rot = Eigen::Vector4d(1, 0, 0, 0);
    p.opacity = 0.6;
    p.sh = {0.5 / kSh0, 0.3 / kSh0, 0.8 / kSh0};
    set.primitives.push_back(p);

    RenderOptions opts;
    opts.background = {0.2, 0.2, 0.2};
    ForwardCache cache;
    const RenderTarget rt = rasterize(set, cam, opts, &cache);

    Rng rng(4);
    Image upstream(16, 16);
    for (double& v : upstream.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    const GaussianGradients g = rasterize_backward(set, cam, upstream, cache);

    for (int c = 0; c < 3; ++c) {
        double expected = 0.0;
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                expected += upstream.at(y, x, c) * rt.alpha.at(y, x) * kSh0;
            }
        }
        EXPECT_NEAR(g.d_sh[0][c], expected, 1e-12);
    }
}

TEST(GradientCheck, AllGroupsPassAtToleranceAcrossSeeds) {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const std::vector<GradCheckRow> rows = run_gradient_check(seed, 8);
        ASSERT_EQ(rows.size(), 5u);
        for (const GradCheckRow& row : rows) {
            EXPECT_TRUE(row.pass) << "seed " << seed << " group " << row.group << " rel err "
                                  << row.max_rel_err;
        }
    }
}

TEST(GradientCheck, GroupNamesAreTheParameterGroups) {
    const std::vector<GradCheckRow> rows = run_gradient_check(1, 4);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].group, "mu");
    EXPECT_EQ(rows[1].group, "scale");
    EXPECT_EQ(rows[2].group, "rot");
    EXPECT_EQ(rows[3].group, "opacity");
    EXPECT_EQ(rows[4].group, "sh");
}

TEST(GradientCheck, FaultInjectionFails) {
    const std::vector<GradCheckRow> rows = run_gradient_check(1, 8, 1e-2);
    bool any_failed = false;
    for (const GradCheckRow& row : rows) {
        any_failed = any_failed || !row.pass;
    }
    EXPECT_TRUE(any_failed);
}

TEST(GradientCheck, DeterministicAcrossRuns) {
    const auto a = run_gradient_check(3, 8);
    const auto b = run_gradient_check(3, 8);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].max_rel_err, b[i].max_rel_err);
        EXPECT_EQ(a[i].analytic, b[i].analytic);
        EXPECT_EQ(a[i].numeric, b[i].numeric);
    }
}

}  // namespace
}  // namespace vrsplat
