// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vrsplat/gaussians.hpp"
#include "vrsplat/image.hpp"
#include "vrsplat/rasterizer.hpp"

namespace vrsplat {

// Mean squared error over all pixels and channels.
double render_l2(const Image& pred, const Image& target);

// Pluggable stand-in for learned perceptual losses.
class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual double evaluate(const Image& pred, const Image& target) const = 0;
    virtual int min_size() const { return 8; }
};

// (1 - SSIM) / 2 with an 11x11 Gaussian window (sigma 1.5), standard constants
// C1 = 0.01^2, C2 = 0.03^2, replicate padding. Per-window SSIM is clamped to
// [0, 1] before averaging (anti-correlated structure counts as zero
// similarity), so the metric lives in [0, 0.5]. Symmetric in its arguments.
class SsimMetric : public PerceptualMetric {
public:
    double evaluate(const Image& pred, const Image& target) const override;
};

const PerceptualMetric& default_perceptual();

// Dispatches to the metric after shape/size validation (ShapeError on
// mismatch or images smaller than the metric window).
double perceptual(const Image& pred, const Image& target,
                  const PerceptualMetric& metric = default_perceptual());

// Mean absolute error over pixels with a nonzero mask entry. Throws
// DegenerateInputError when the mask is empty.
double depth_l1(const Grid& pred, const Grid& target, const Grid& valid_mask);

struct DistillLoss {
    double value = 0.0;
    size_t active_count = 0;  // |I*|
    bool empty_set = false;   // no confidence exceeded tau
};

// Mean over anchors with confidence > tau of |S_novel - stopgrad(S_orig)|^2.
// Gradient flows only into the novel branch; an empty set yields 0 with the
// diagnostic flag raised.
DistillLoss distill_loss(const std::vector<Eigen::VectorXd>& s_novel,
                         const std::vector<Eigen::VectorXd>& s_orig,
                         const std::vector<double>& confidences, double tau);

// d(distill_loss)/d(s_novel); zero rows for inactive anchors. The gradient
// with respect to s_orig is identically zero by the stop-gradient contract.
std::vector<Eigen::VectorXd> distill_loss_grad(const std::vector<Eigen::VectorXd>& s_novel,
                                               const std::vector<Eigen::VectorXd>& s_orig,
                                               const std::vector<double>& confidences, double tau);

// Canonical loss-term order, frozen for the CSV contract:
// render_l2, perceptual, recon_original, recon_cyclic, depth_l1, distill,
// det, map, motion, plan. The last four are out-of-scope placeholders
// accepted as externally supplied scalars defaulting to 0.
const std::vector<std::string>& loss_term_names();

struct LossReport {
    std::map<std::string, double> terms;
    std::map<std::string, double> weights;
    double total = 0.0;
};

// Weighted sum of the supplied terms. Unknown keys or negative weights throw
// ConfigError; missing terms default to 0 and missing weights to 1.
LossReport total_loss(const std::map<std::string, double>& terms,
                      const std::map<std::string, double>& weights);

// CSV log: header "step,<terms...>,total"; one row per call.
void append_loss_csv(const std::string& path, int step, const LossReport& report);

using FeatureExtractor = std::function<FeatureMap(const std::vector<Image>&)>;

// Everything needed to re-lift rendered views: the parameter head, the fixed
// feature extractor and render settings, plus the reconstruction-loss mix.
struct ReconPipeline {
    const ParamHead* head = nullptr;
    FeatureExtractor extract;
    RenderOptions render_opts;
    double lambda_p = 0.2;
    const PerceptualMetric* metric = nullptr;  // null -> default_perceptual()

    const PerceptualMetric& perceptual_metric() const {
        return metric ? *metric : default_perceptual();
    }
};

// Renders gaussians_t into each adjacent-time camera and compares against the
// captured adjacent-frame images: mean over views of
// render_l2 + lambda_p * perceptual. Throws ProtocolError when no adjacent
// frame is supplied or counts mismatch.
double original_recon_loss(const GaussianSet& gaussians_t,
                           const std::vector<CameraRig>& adjacent_rigs,
                           const std::vector<std::vector<Image>>& adjacent_images,
                           const ReconPipeline& pipeline);

// Re-lifts the novel render (depth from its depth channel, features from the
// pipeline extractor), renders back into the original rig, and compares with
// the original images (render_l2 + lambda_p * perceptual, mean over cameras).
double cyclic_recon_loss(const std::vector<RenderTarget>& novel_renders,
                         const CameraRig& novel_rig, const CameraRig& original_rig,
                         const std::vector<Image>& original_images, const ReconPipeline& pipeline);

}  // namespace vrsplat
