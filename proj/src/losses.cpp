// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace vrsplat {

double render_l2(const Image& pred, const Image& target) {
    return image_mse(pred, target);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Separable Gaussian filter with replicate padding, one channel.
Grid gaussian_filter(const Grid& in) {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kSsimWindow);
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - (kSsimWindow - 1) / 2.0;
            k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    const int h = in.height(), w = in.width();
    const int r = kSsimWindow / 2;
    Grid tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                const int xx = std::clamp(x + i - r, 0, w - 1);
                acc += kernel[i] * in.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                const int yy = std::clamp(y + i - r, 0, h - 1);
                acc += kernel[i] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Grid channel_of(const Image& img, int c) {
    Grid g(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            g.at(y, x) = img.at(y, x, c);
        }
    }
    return g;
}

}  // namespace

double SsimMetric::evaluate(const Image& pred, const Image& target) const {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Grid x = channel_of(pred, c);
        const Grid y = channel_of(target, c);
        Grid xx(x.height(), x.width()), yy(x.height(), x.width()), xy(x.height(), x.width());
        for (size_t i = 0; i < x.data().size(); ++i) {
            xx.data()[i] = x.data()[i] * x.data()[i];
            yy.data()[i] = y.data()[i] * y.data()[i];
            xy.data()[i] = x.data()[i] * y.data()[i];
        }
        const Grid mu_x = gaussian_filter(x);
        const Grid mu_y = gaussian_filter(y);
        const Grid e_xx = gaussian_filter(xx);
        const Grid e_yy = gaussian_filter(yy);
        const Grid e_xy = gaussian_filter(xy);
        double channel_acc = 0.0;
        for (size_t i = 0; i < x.data().size(); ++i) {
            const double mx = mu_x.data()[i], my = mu_y.data()[i];
            const double sx = e_xx.data()[i] - mx * mx;
            const double sy = e_yy.data()[i] - my * my;
            const double sxy = e_xy.data()[i] - mx * my;
            const double ssim = ((2.0 * mx * my + kC1) * (2.0 * sxy + kC2)) /
                                ((mx * mx + my * my + kC1) * (sx + sy + kC2));
            channel_acc += std::clamp(ssim, 0.0, 1.0);
        }
        acc += channel_acc / static_cast<double>(x.data().size());
    }
    return (1.0 - acc / 3.0) / 2.0;
}

const PerceptualMetric& default_perceptual() {
    static const SsimMetric metric;
    return metric;
}

double perceptual(const Image& pred, const Image& target, const PerceptualMetric& metric) {
    if (!pred.same_shape(target)) {
        throw ShapeError("perceptual: shape mismatch");
    }
    if (pred.height() < metric.min_size() || pred.width() < metric.min_size()) {
        throw ShapeError("perceptual: image smaller than the metric window (" +
                         std::to_string(metric.min_size()) + "x" +
                         std::to_string(metric.min_size()) + " minimum)");
    }
    return metric.evaluate(pred, target);
}

double depth_l1(const Grid& pred, const Grid& target, const Grid& valid_mask) {
    if (pred.height() != target.height() || pred.width() != target.width() ||
        pred.height() != valid_mask.height() || pred.width() != valid_mask.width()) {
        throw ShapeError("depth_l1: shape mismatch");
    }
    double acc = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < pred.data().size(); ++i) {
        if (valid_mask.data()[i] != 0.0) {
            acc += std::abs(pred.data()[i] - target.data()[i]);
            ++count;
        }
    }
    if (count == 0) {
        throw DegenerateInputError("depth_l1: empty validity mask");
    }
    return acc / static_cast<double>(count);
}

namespace {

void check_distill_shapes(const std::vector<Eigen::VectorXd>& s_novel,
                          const std::vector<Eigen::VectorXd>& s_orig,
                          const std::vector<double>& confidences) {
    if (s_novel.size() != s_orig.size() || s_novel.size() != confidences.size()) {
        throw ShapeError("distill_loss: anchor list lengths differ");
    }
    for (size_t i = 0; i < s_novel.size(); ++i) {
        if (s_novel[i].size() != s_orig[i].size()) {
            throw ShapeError("distill_loss: feature dimension mismatch at anchor " +
                             std::to_string(i));
        }
    }
}

}  // namespace

DistillLoss distill_loss(const std::vector<Eigen::VectorXd>& s_novel,
                         const std::vector<Eigen::VectorXd>& s_orig,
                         const std::vector<double>& confidences, double tau) {
    check_distill_shapes(s_novel, s_orig, confidences);
    DistillLoss out;
    double acc = 0.0;
    for (size_t i = 0; i < s_novel.size(); ++i) {
        if (confidences[i] > tau) {
            acc += (s_novel[i] - s_orig[i]).squaredNorm();
            ++out.active_count;
        }
    }
    if (out.active_count == 0) {
        out.empty_set = true;
        out.value = 0.0;
    } else {
        out.value = acc / static_cast<double>(out.active_count);
    }
    return out;
}

std::vector<Eigen::VectorXd> distill_loss_grad(const std::vector<Eigen::VectorXd>& s_novel,
                                               const std::vector<Eigen::VectorXd>& s_orig,
                                               const std::vector<double>& confidences,
                                               double tau) {
    check_distill_shapes(s_novel, s_orig, confidences);
    size_t active = 0;
    for (double c : confidences) {
        if (c > tau) ++active;
    }
    std::vector<Eigen::VectorXd> grads(s_novel.size());
    for (size_t i = 0; i < s_novel.size(); ++i) {
        if (active > 0 && confidences[i] > tau) {
            grads[i] = 2.0 / static_cast<double>(active) * (s_novel[i] - s_orig[i]);
        } else {
            grads[i] = Eigen::VectorXd::Zero(s_novel[i].size());
        }
    }
    return grads;
}

const std::vector<std::string>& loss_term_names() {
    static const std::vector<std::string> names = {
        "render_l2", "perceptual", "recon_original", "recon_cyclic", "depth_l1",
        "distill",   "det",        "map",            "motion",       "plan"};
    return names;
}

LossReport total_loss(const std::map<std::string, double>& terms,
                      const std::map<std::string, double>& weights) {
    const auto& names = loss_term_names();
    auto known = [&](const std::string& key) {
        return std::find(names.begin(), names.end(), key) != names.end();
    };
    for (const auto& [key, value] : terms) {
        if (!known(key)) {
            throw ConfigError("total_loss: unknown loss term \"" + key + "\"");
        }
        (void)value;
    }
    for (const auto& [key, value] : weights) {
        if (!known(key)) {
            throw ConfigError("total_loss: unknown loss weight \"" + key + "\"");
        }
        if (value < 0.0) {
            throw ConfigError("total_loss: negative weight for \"" + key + "\"");
        }
    }
    LossReport report;
    double total = 0.0;
    for (const std::string& name : names) {
        const auto t = terms.find(name);
        const double term = t == terms.end() ? 0.0 : t->second;
        const auto w = weights.find(name);
        const double weight = w == weights.end() ? 1.0 : w->second;
        report.terms[name] = term;
        report.weights[name] = weight;
        total += weight * term;
    }
    report.total = total;
    return report;
}

void append_loss_csv(const std::string& path, int step, const LossReport& report) {
    const bool exists = std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw IoError("append_loss_csv: cannot open " + path);
    }
    if (!exists) {
        out << "step";
        for (const std::string& name : loss_term_names()) {
            out << "," << name;
        }
        out << ",total\n";
    }
    out << step;
    char buf[64];
    for (const std::string& name : loss_term_names()) {
        std::snprintf(buf, sizeof(buf), "%.9g", report.terms.at(name));
        out << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.9g", report.total);
    out << "," << buf << "\n";
}

namespace {

double view_loss(const Image& pred, const Image& target, const ReconPipeline& pipeline) {
    double loss = render_l2(pred, target);
    if (pipeline.lambda_p > 0.0) {
        loss += pipeline.lambda_p * perceptual(pred, target, pipeline.perceptual_metric());
    }
    return loss;
}

}  // namespace

double original_recon_loss(const GaussianSet& gaussians_t,
                           const std::vector<CameraRig>& adjacent_rigs,
                           const std::vector<std::vector<Image>>& adjacent_images,
                           const ReconPipeline& pipeline) {
    if (adjacent_rigs.empty() || adjacent_rigs.size() != adjacent_images.size()) {
        throw ProtocolError("original_recon_loss: need at least one adjacent frame with images");
    }
    double acc = 0.0;
    size_t views = 0;
    for (size_t f = 0; f < adjacent_rigs.size(); ++f) {
        const CameraRig& rig = adjacent_rigs[f];
        if (rig.cameras.empty() ||
            rig.cameras.size() != adjacent_images[f].size()) {
            throw ProtocolError("original_recon_loss: adjacent frame " + std::to_string(f) +
                                " is missing images");
        }
        for (size_t c = 0; c < rig.cameras.size(); ++c) {
            const RenderTarget rt = rasterize(gaussians_t, rig.cameras[c], pipeline.render_opts);
            acc += view_loss(rt.color, adjacent_images[f][c], pipeline);
            ++views;
        }
    }
    return acc / static_cast<double>(views);
}

double cyclic_recon_loss(const std::vector<RenderTarget>& novel_renders,
                         const CameraRig& novel_rig, const CameraRig& original_rig,
                         const std::vector<Image>& original_images,
                         const ReconPipeline& pipeline) {
    if (novel_renders.size() != novel_rig.cameras.size()) {
        throw ShapeError("cyclic_recon_loss: novel render/rig count mismatch");
    }
    if (original_images.size() != original_rig.cameras.size() || original_images.empty()) {
        throw ShapeError("cyclic_recon_loss: original image/rig count mismatch");
    }
    if (!pipeline.head || !pipeline.extract) {
        throw UsageError("cyclic_recon_loss: pipeline needs a head and a feature extractor");
    }

    std::vector<Image> novel_images;
    novel_images.reserve(novel_renders.size());
    DepthMap depth;
    for (const RenderTarget& rt : novel_renders) {
        novel_images.push_back(rt.color);
        depth.views.push_back(rt.depth);
    }
    const FeatureMap features = pipeline.extract(novel_images);
    const GaussianSet relifted = lift_pixels(depth, features, novel_rig, *pipeline.head);

    double acc = 0.0;
    for (size_t c = 0; c < original_rig.cameras.size(); ++c) {
        const RenderTarget rt =
            rasterize(relifted, original_rig.cameras[c], pipeline.render_opts);
        acc += view_loss(rt.color, original_images[c], pipeline);
    }
    return acc / static_cast<double>(original_rig.cameras.size());
}

}  // namespace vrsplat
