// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vrsplat/geometry.hpp"

namespace vrsplat {
namespace {

Image constant_image(int h, int w, double r, double g, double b) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    }
    return img;
}

Image random_image(int h, int w, uint64_t seed) {
    Image img(h, w);
    Rng rng(seed);
    for (double& v : img.data()) {
        v = rng.uniform(0.0, 1.0);
    }
    return img;
}

TEST(RenderL2, IdentityIsZero) {
    const Image a = random_image(8, 8, 1);
    EXPECT_EQ(render_l2(a, a), 0.0);
}

TEST(RenderL2, ConstantOffsetSquares) {
    const Image a = random_image(8, 8, 2);
    Image b = a;
    for (double& v : b.data()) {
        v += 0.5;
    }
    EXPECT_NEAR(render_l2(a, b), 0.25, 1e-12);
}

// 2x2 checker vs column pattern, evaluated by hand: (1+0+1+0)/4 = 0.5.
TEST(RenderL2, HandArithmetic) {
    Image a(2, 2), b(2, 2);
    const double va[4] = {0, 1, 1, 0};
    const double vb[4] = {1, 1, 0, 0};
    for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 3; ++c) {
            a.data()[i * 3 + c] = va[i];
            b.data()[i * 3 + c] = vb[i];
        }
    }
    EXPECT_NEAR(render_l2(a, b), 0.5, 1e-12);
}

TEST(RenderL2, ShapeMismatchThrows) {
    EXPECT_THROW(render_l2(Image(4, 4), Image(4, 5)), ShapeError);
}

TEST(Perceptual, IdentityIsZero) {
    const Image a = random_image(16, 16, 3);
    EXPECT_NEAR(perceptual(a, a), 0.0, 1e-12);
}

TEST(Perceptual, InvertedCheckerboardNearMaximum) {
    Image a(16, 16), b(16, 16);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const double v = (x + y) % 2 ? 1.0 : 0.0;
            for (int c = 0; c < 3; ++c) {
                a.at(y, x, c) = v;
                b.at(y, x, c) = 1.0 - v;
            }
        }
    }
    const double m = perceptual(a, b);
    EXPECT_GT(m, 0.4);
    EXPECT_LE(m, 0.5);
}

TEST(Perceptual, Symmetric) {
    const Image a = random_image(12, 12, 4);
    const Image b = random_image(12, 12, 5);
    EXPECT_NEAR(perceptual(a, b), perceptual(b, a), 1e-12);
}

TEST(Perceptual, TooSmallImagesThrow) {
    EXPECT_THROW(perceptual(Image(7, 7), Image(7, 7)), ShapeError);
    EXPECT_NO_THROW(perceptual(Image(8, 8), Image(8, 8)));
}

TEST(DepthL1, IdentityAndMasking) {
    Grid pred(4, 4, 3.0), target(4, 4, 3.0), mask(4, 4, 1.0);
    EXPECT_EQ(depth_l1(pred, target, mask), 0.0);

    // +2 m error on half the masked pixels -> mean 1.0.
    for (int x = 0; x < 4; ++x) {
        pred.at(0, x) = 5.0;
        pred.at(1, x) = 5.0;
    }
    EXPECT_NEAR(depth_l1(pred, target, mask), 1.0, 1e-12);

    // Excluding the erroneous pixels recovers zero.
    Grid mask2(4, 4, 1.0);
    for (int x = 0; x < 4; ++x) {
        mask2.at(0, x) = 0.0;
        mask2.at(1, x) = 0.0;
    }
    EXPECT_EQ(depth_l1(pred, target, mask2), 0.0);

    EXPECT_THROW(depth_l1(pred, target, Grid(4, 4, 0.0)), DegenerateInputError);
    EXPECT_THROW(depth_l1(pred, Grid(3, 4), mask), ShapeError);
}

TEST(DistillLoss, IdentityIsZero) {
    std::vector<Eigen::VectorXd> s = {Eigen::VectorXd::Ones(4), Eigen::VectorXd::Zero(4)};
    const DistillLoss d = distill_loss(s, s, {0.9, 0.8}, 0.3);
    EXPECT_EQ(d.value, 0.0);
    EXPECT_EQ(d.active_count, 2u);
    EXPECT_FALSE(d.empty_set);
}

TEST(DistillLoss, MeanOfSquaredNorms) {
    // Two active anchors with per-anchor squared norms 4 and 16 -> mean 10.
    std::vector<Eigen::VectorXd> novel(2), orig(2);
    novel[0] = Eigen::VectorXd::Zero(4);
    orig[0] = Eigen::VectorXd::Zero(4);
    novel[0][0] = 2.0;  // squared norm 4
    novel[1] = Eigen::VectorXd::Zero(4);
    orig[1] = Eigen::VectorXd::Zero(4);
    novel[1][2] = 4.0;  // squared norm 16
    const DistillLoss d = distill_loss(novel, orig, {0.9, 0.9}, 0.3);
    EXPECT_NEAR(d.value, 10.0, 1e-12);
}

TEST(DistillLoss, EmptyActiveSetFlagged) {
    std::vector<Eigen::VectorXd> novel = {Eigen::VectorXd::Ones(3)};
    std::vector<Eigen::VectorXd> orig = {Eigen::VectorXd::Zero(3)};
    const DistillLoss d = distill_loss(novel, orig, {0.2}, 0.3);
    EXPECT_EQ(d.value, 0.0);
    EXPECT_TRUE(d.empty_set);
}

TEST(DistillLoss, PermutationInvariant) {
    Rng rng(6);
    std::vector<Eigen::VectorXd> novel, orig;
    std::vector<double> conf;
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd a(5), b(5);
        for (int k = 0; k < 5; ++k) {
            a[k] = rng.uniform(-1, 1);
            b[k] = rng.uniform(-1, 1);
        }
        novel.push_back(a);
        orig.push_back(b);
        conf.push_back(rng.uniform(0.0, 1.0));
    }
    const double base = distill_loss(novel, orig, conf, 0.3).value;
    // Reverse the anchor order.
    std::reverse(novel.begin(), novel.end());
    std::reverse(orig.begin(), orig.end());
    std::reverse(conf.begin(), conf.end());
    EXPECT_NEAR(distill_loss(novel, orig, conf, 0.3).value, base, 1e-12);
}

TEST(DistillLoss, ThresholdMonotonicityAndUnfilteredMean) {
    Rng rng(7);
    std::vector<Eigen::VectorXd> novel, orig;
    std::vector<double> conf;
    for (int i = 0; i < 10; ++i) {
        novel.push_back(Eigen::VectorXd::Constant(3, rng.uniform(-1, 1)));
        orig.push_back(Eigen::VectorXd::Constant(3, rng.uniform(-1, 1)));
        conf.push_back(rng.uniform(0.0, 1.0));
    }
    size_t prev = novel.size() + 1;
    for (double tau : {-0.5, 0.1, 0.3, 0.6, 0.9, 1.5}) {
        const size_t active = distill_loss(novel, orig, conf, tau).active_count;
        EXPECT_LE(active, prev);
        prev = active;
    }
    // tau = -inf equals the unfiltered mean.
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) {
        acc += (novel[i] - orig[i]).squaredNorm();
    }
    const double unfiltered =
        distill_loss(novel, orig, conf, -std::numeric_limits<double>::infinity()).value;
    EXPECT_NEAR(unfiltered, acc / 10.0, 1e-12);
}

TEST(DistillLoss, GradientFlowsOnlyIntoNovelBranch) {
    std::vector<Eigen::VectorXd> novel = {Eigen::VectorXd::Ones(3),
                                          Eigen::VectorXd::Constant(3, 2.0)};
    std::vector<Eigen::VectorXd> orig = {Eigen::VectorXd::Zero(3),
                                         Eigen::VectorXd::Constant(3, 0.5)};
    const std::vector<double> conf = {0.9, 0.1};
    const auto grads = distill_loss_grad(novel, orig, conf, 0.3);
    // Active anchor: 2 (novel - orig) / |I*|.
    EXPECT_NEAR((grads[0] - 2.0 * Eigen::VectorXd::Ones(3)).norm(), 0.0, 1e-12);
    // Inactive anchor: no gradient.
    EXPECT_EQ(grads[1].norm(), 0.0);

    // Finite differences wrt the novel branch match the analytic gradient.
    const double h = 1e-6;
    for (int k = 0; k < 3; ++k) {
        std::vector<Eigen::VectorXd> hi = novel, lo = novel;
        hi[0][k] += h;
        lo[0][k] -= h;
        const double fd = (distill_loss(hi, orig, conf, 0.3).value -
                           distill_loss(lo, orig, conf, 0.3).value) /
                          (2.0 * h);
        EXPECT_NEAR(fd, grads[0][k], 1e-6);
    }
}

TEST(DistillLoss, ShapeErrors) {
    std::vector<Eigen::VectorXd> a = {Eigen::VectorXd::Zero(3)};
    std::vector<Eigen::VectorXd> b = {Eigen::VectorXd::Zero(4)};
    EXPECT_THROW(distill_loss(a, b, {0.9}, 0.3), ShapeError);
    EXPECT_THROW(distill_loss(a, a, {0.9, 0.8}, 0.3), ShapeError);
}

TEST(TotalLoss, WeightedSums) {
    const LossReport r =
        total_loss({{"render_l2", 0.5}, {"perceptual", 0.25}}, {});
    EXPECT_NEAR(r.total, 0.75, 1e-15);

    std::map<std::string, double> zero_weights;
    for (const std::string& name : loss_term_names()) {
        zero_weights[name] = 0.0;
    }
    EXPECT_EQ(total_loss({{"render_l2", 0.5}}, zero_weights).total, 0.0);
}

TEST(TotalLoss, ReportInvariantHolds) {
    Rng rng(9);
    std::map<std::string, double> terms, weights;
    for (const std::string& name : loss_term_names()) {
        terms[name] = rng.uniform(0.0, 2.0);
        weights[name] = rng.uniform(0.0, 3.0);
    }
    const LossReport r = total_loss(terms, weights);
    double acc = 0.0;
    for (const std::string& name : loss_term_names()) {
        acc += r.weights.at(name) * r.terms.at(name);
    }
    EXPECT_NEAR(r.total, acc, 1e-12);
}

TEST(TotalLoss, RejectsNegativeWeightAndUnknownKeys) {
    EXPECT_THROW(total_loss({{"render_l2", 1.0}}, {{"render_l2", -0.1}}), ConfigError);
    EXPECT_THROW(total_loss({{"bogus", 1.0}}, {}), ConfigError);
    EXPECT_THROW(total_loss({}, {{"bogus", 1.0}}), ConfigError);
}

TEST(TotalLoss, CsvAppend) {
    const std::string path = std::filesystem::temp_directory_path() / "vrsplat_loss_log.csv";
    std::filesystem::remove(path);
    const LossReport r = total_loss({{"render_l2", 0.5}, {"distill", 0.125}}, {});
    append_loss_csv(path, 0, r);
    append_loss_csv(path, 1, r);
    std::ifstream in(path);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    EXPECT_EQ(header,
              "step,render_l2,perceptual,recon_original,recon_cyclic,depth_l1,distill,det,map,"
              "motion,plan,total");
    EXPECT_EQ(row0, "0,0.5,0,0,0,0,0.125,0,0,0,0,0.625");
    EXPECT_EQ(row1.substr(0, 2), "1,");
    std::filesystem::remove(path);
}

TEST(OriginalReconLoss, MissingAdjacentFrameIsProtocolError) {
    GaussianSet set;
    ReconPipeline pipeline;
    EXPECT_THROW(original_recon_loss(set, {}, {}, pipeline), ProtocolError);
    EXPECT_THROW(original_recon_loss(set, {CameraRig{}}, {{}}, pipeline), ProtocolError);
}

}  // namespace
}  // namespace vrsplat
