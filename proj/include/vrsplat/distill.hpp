// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vrsplat/geometry.hpp"
#include "vrsplat/image.hpp"
#include "vrsplat/membank.hpp"

namespace vrsplat {

// Learnable keypoint generation around anchors: an offset head mapping an
// N_i instance feature to n_samples x 3 world-frame offsets (meters, no
// activation) and a weight head mapping it to N x n_samples logits that are
// softmax-normalized over all N * n_samples entries.
struct KeypointHeads {
    int n_samples = 8;
    int num_cameras = 1;
    Eigen::MatrixXd offset_w;  // (n_samples*3) x N_i
    Eigen::VectorXd offset_b;
    Eigen::MatrixXd weight_w;  // (N*n_samples) x N_i
    Eigen::VectorXd weight_b;

    static KeypointHeads random(int feature_dim, int n_samples, int num_cameras, uint64_t seed);
    void validate(int feature_dim) const;
};

// Offsets in signed meters, one row per sample.
Eigen::MatrixXd gen_keypoints(const Eigen::VectorXd& feature, const KeypointHeads& heads);

// Softmax-normalized sampling weights, shape N x n_samples, summing to 1 over
// all entries.
Eigen::MatrixXd gen_weights(const Eigen::VectorXd& feature, const KeypointHeads& heads);

// p*_j = p_j + anchor center.
Eigen::MatrixXd sample_points(const Eigen::MatrixXd& offsets, const InstanceRecord& anchor);

// Bilinear interpolation on one C x H x W view of a feature map. Pixels
// outside [0, W-1] x [0, H-1] return zeros and clear *in_view.
Eigen::VectorXd bilinear_sample(const FeatureMap& feats, int view, const Eigen::Vector2d& pixel,
                                bool* in_view = nullptr);

struct ViewSamples {
    // f[n][j]: C-dim sampled feature of point j in camera n; zero when masked.
    std::vector<std::vector<Eigen::VectorXd>> f;
    // mask(n, j) true when the point projected in front of camera n and inside
    // its image.
    std::vector<std::vector<bool>> mask;
};

// Projects every point into every camera and bilinearly samples the feature
// maps; behind-camera or out-of-image samples are zero with a cleared mask.
ViewSamples sample_view_features(const Eigen::MatrixXd& points, const FeatureMap& feats,
                                 const CameraRig& rig);

// S = sum_n sum_j w(n, j) * f(n, j); masked-out samples contribute zero
// regardless of weight.
Eigen::VectorXd aggregate(const Eigen::MatrixXd& weights, const ViewSamples& samples);

struct SampledFeature {
    Eigen::VectorXd value;  // C-dim aggregated feature
    int anchor_index = -1;
    bool novel_view = false;
};

// Full Eq.-style pipeline for one anchor: keypoints from the instance
// feature, world-space sampling around the anchor, multi-camera projection +
// bilinear sampling, weighted aggregation.
SampledFeature sampled_feature(const InstanceRecord& anchor, const Eigen::VectorXd& feature,
                               const KeypointHeads& heads, const FeatureMap& feats,
                               const CameraRig& rig, int anchor_index, bool novel_view);

// Gradient of sum_i <upstream[i], S_i> with respect to the feature map, for
// the novel branch of the distillation loss. Scatter-adds the bilinear
// weights of every visible sample. upstream entries must be C-dim.
FeatureMap sampled_feature_map_grad(const std::vector<InstanceRecord>& anchors,
                                    const std::vector<Eigen::VectorXd>& features,
                                    const KeypointHeads& heads, const FeatureMap& feats,
                                    const CameraRig& rig,
                                    const std::vector<Eigen::VectorXd>& upstream);

// Keypoint-head checkpointing, same container convention as the bank format:
// magic "VRKH", u32 version, u32 n_samples, u32 num_cameras, u32 feature dim,
// then offset_w, offset_b, weight_w, weight_b as float32 row-major blocks.
void save_keypoint_heads(const std::string& path, const KeypointHeads& heads);
KeypointHeads load_keypoint_heads(const std::string& path);

}  // namespace vrsplat
