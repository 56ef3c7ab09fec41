// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace vrsplat {

KeypointHeads KeypointHeads::random(int feature_dim, int n_samples, int num_cameras,
                                    uint64_t seed) {
    KeypointHeads h;
    h.n_samples = n_samples;
    h.num_cameras = num_cameras;
    Rng rng(seed);
    auto fill = [&](Eigen::MatrixXd& m, double scale) {
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                m(r, c) = scale * rng.normal();
            }
        }
    };
    h.offset_w.resize(n_samples * 3, feature_dim);
    h.offset_b = Eigen::VectorXd::Zero(n_samples * 3);
    h.weight_w.resize(num_cameras * n_samples, feature_dim);
    h.weight_b = Eigen::VectorXd::Zero(num_cameras * n_samples);
    fill(h.offset_w, 0.5 / std::sqrt(static_cast<double>(feature_dim)));
    fill(h.weight_w, 1.0 / std::sqrt(static_cast<double>(feature_dim)));
    // offset biases spread the default sampling pattern around the anchor
    Rng rb = rng.fork(1);
    for (int i = 0; i < h.offset_b.size(); ++i) {
        h.offset_b[i] = rb.uniform(-1.0, 1.0);
    }
    return h;
}

void KeypointHeads::validate(int feature_dim) const {
    if (offset_w.rows() != n_samples * 3 || offset_w.cols() != feature_dim ||
        offset_b.size() != n_samples * 3) {
        throw ShapeError("keypoint heads: offset head must map N_i -> n_samples x 3");
    }
    if (weight_w.rows() != num_cameras * n_samples || weight_w.cols() != feature_dim ||
        weight_b.size() != num_cameras * n_samples) {
        throw ShapeError("keypoint heads: weight head must map N_i -> N x n_samples");
    }
}

Eigen::MatrixXd gen_keypoints(const Eigen::VectorXd& feature, const KeypointHeads& heads) {
    heads.validate(static_cast<int>(feature.size()));
    const Eigen::VectorXd flat = heads.offset_w * feature + heads.offset_b;
    Eigen::MatrixXd offsets(heads.n_samples, 3);
    for (int j = 0; j < heads.n_samples; ++j) {
        offsets.row(j) = flat.segment<3>(j * 3).transpose();
    }
    return offsets;
}

Eigen::MatrixXd gen_weights(const Eigen::VectorXd& feature, const KeypointHeads& heads) {
    heads.validate(static_cast<int>(feature.size()));
    Eigen::VectorXd logits = heads.weight_w * feature + heads.weight_b;
    const double peak = logits.maxCoeff();
    logits = (logits.array() - peak).exp();
    logits /= logits.sum();
    Eigen::MatrixXd w(heads.num_cameras, heads.n_samples);
    for (int n = 0; n < heads.num_cameras; ++n) {
        w.row(n) = logits.segment(n * heads.n_samples, heads.n_samples).transpose();
    }
    return w;
}

Eigen::MatrixXd sample_points(const Eigen::MatrixXd& offsets, const InstanceRecord& anchor) {
    Eigen::MatrixXd points = offsets;
    points.rowwise() += anchor.anchor.center.transpose();
    return points;
}

Eigen::VectorXd bilinear_sample(const FeatureMap& feats, int view, const Eigen::Vector2d& pixel,
                                bool* in_view) {
    const int c = feats.channels();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(c);
    const double x = pixel.x();
    const double y = pixel.y();
    const int w = feats.width();
    const int h = feats.height();
    if (x < 0.0 || x > w - 1 || y < 0.0 || y > h - 1) {
        if (in_view) *in_view = false;
        return out;
    }
    if (in_view) *in_view = true;
    const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int ch = 0; ch < c; ++ch) {
        const double top = (1.0 - fx) * feats.at(view, ch, y0, x0) + fx * feats.at(view, ch, y0, x1);
        const double bot = (1.0 - fx) * feats.at(view, ch, y1, x0) + fx * feats.at(view, ch, y1, x1);
        out[ch] = (1.0 - fy) * top + fy * bot;
    }
    return out;
}

ViewSamples sample_view_features(const Eigen::MatrixXd& points, const FeatureMap& feats,
                                 const CameraRig& rig) {
    if (rig.num_cameras() != feats.num_views()) {
        throw ShapeError("sample_view_features: rig has " + std::to_string(rig.num_cameras()) +
                         " cameras but the feature map has " + std::to_string(feats.num_views()) +
                         " views");
    }
    const int n = rig.num_cameras();
    const int s = static_cast<int>(points.rows());
    ViewSamples out;
    out.f.assign(n, std::vector<Eigen::VectorXd>(s, Eigen::VectorXd::Zero(feats.channels())));
    out.mask.assign(n, std::vector<bool>(s, false));
    for (int cam = 0; cam < n; ++cam) {
        for (int j = 0; j < s; ++j) {
            Eigen::Vector2d pixel;
            try {
                pixel = project(points.row(j).transpose(), rig.cameras[cam]).first;
            } catch (const BehindCameraError&) {
                continue;  // masked out
            }
            bool visible = false;
            Eigen::VectorXd f = bilinear_sample(feats, cam, pixel, &visible);
            if (visible) {
                out.f[cam][j] = std::move(f);
                out.mask[cam][j] = true;
            }
        }
    }
    return out;
}

Eigen::VectorXd aggregate(const Eigen::MatrixXd& weights, const ViewSamples& samples) {
    const int n = static_cast<int>(samples.f.size());
    if (weights.rows() != n) {
        throw ShapeError("aggregate: weight rows must match camera count");
    }
    if (n == 0) {
        throw ShapeError("aggregate: no views");
    }
    const int s = static_cast<int>(samples.f.front().size());
    if (weights.cols() != s) {
        throw ShapeError("aggregate: weight columns must match sample count");
    }
    const int c = samples.f.front().empty() ? 0 : static_cast<int>(samples.f[0][0].size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(c);
    for (int cam = 0; cam < n; ++cam) {
        for (int j = 0; j < s; ++j) {
            if (samples.mask[cam][j]) {
                out += weights(cam, j) * samples.f[cam][j];
            }
        }
    }
    return out;
}

SampledFeature sampled_feature(const InstanceRecord& anchor, const Eigen::VectorXd& feature,
                               const KeypointHeads& heads, const FeatureMap& feats,
                               const CameraRig& rig, int anchor_index, bool novel_view) {
    const Eigen::MatrixXd offsets = gen_keypoints(feature, heads);
    const Eigen::MatrixXd weights = gen_weights(feature, heads);
    const Eigen::MatrixXd points = sample_points(offsets, anchor);
    const ViewSamples samples = sample_view_features(points, feats, rig);
    SampledFeature out;
    out.value = aggregate(weights, samples);
    out.anchor_index = anchor_index;
    out.novel_view = novel_view;
    return out;
}

FeatureMap sampled_feature_map_grad(const std::vector<InstanceRecord>& anchors,
                                    const std::vector<Eigen::VectorXd>& features,
                                    const KeypointHeads& heads, const FeatureMap& feats,
                                    const CameraRig& rig,
                                    const std::vector<Eigen::VectorXd>& upstream) {
    if (anchors.size() != features.size() || anchors.size() != upstream.size()) {
        throw ShapeError("sampled_feature_map_grad: anchor/feature/upstream count mismatch");
    }
    FeatureMap grad(feats.num_views(), feats.channels(), feats.height(), feats.width());
    const int w = feats.width();
    const int h = feats.height();
    for (size_t i = 0; i < anchors.size(); ++i) {
        const Eigen::MatrixXd offsets = gen_keypoints(features[i], heads);
        const Eigen::MatrixXd weights = gen_weights(features[i], heads);
        const Eigen::MatrixXd points = sample_points(offsets, anchors[i]);
        for (int cam = 0; cam < rig.num_cameras(); ++cam) {
            for (int j = 0; j < points.rows(); ++j) {
                Eigen::Vector2d pixel;
                try {
                    pixel = project(points.row(j).transpose(), rig.cameras[cam]).first;
                } catch (const BehindCameraError&) {
                    continue;
                }
                const double x = pixel.x();
                const double y = pixel.y();
                if (x < 0.0 || x > w - 1 || y < 0.0 || y > h - 1) {
                    continue;
                }
                const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
                const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
                const int x1 = std::min(x0 + 1, w - 1);
                const int y1 = std::min(y0 + 1, h - 1);
                const double fx = x - x0;
                const double fy = y - y0;
                const double wgt = weights(cam, j);
                for (int ch = 0; ch < feats.channels(); ++ch) {
                    const double u = wgt * upstream[i][ch];
                    grad.at(cam, ch, y0, x0) += u * (1.0 - fx) * (1.0 - fy);
                    grad.at(cam, ch, y0, x1) += u * fx * (1.0 - fy);
                    grad.at(cam, ch, y1, x0) += u * (1.0 - fx) * fy;
                    grad.at(cam, ch, y1, x1) += u * fx * fy;
                }
            }
        }
    }
    return grad;
}

void save_keypoint_heads(const std::string& path, const KeypointHeads& heads) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw IoError("save_keypoint_heads: cannot open " + path);
    }
    const char magic[4] = {'V', 'R', 'K', 'H'};
    const uint32_t version = 1;
    const uint32_t ns = static_cast<uint32_t>(heads.n_samples);
    const uint32_t nc = static_cast<uint32_t>(heads.num_cameras);
    const uint32_t dim = static_cast<uint32_t>(heads.offset_w.cols());
    std::fwrite(magic, 1, 4, fp);
    std::fwrite(&version, 4, 1, fp);
    std::fwrite(&ns, 4, 1, fp);
    std::fwrite(&nc, 4, 1, fp);
    std::fwrite(&dim, 4, 1, fp);
    auto dump = [&](const Eigen::MatrixXd& m) {
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                const float v = static_cast<float>(m(r, c));
                std::fwrite(&v, 4, 1, fp);
            }
        }
    };
    dump(heads.offset_w);
    dump(heads.offset_b);
    dump(heads.weight_w);
    dump(heads.weight_b);
    std::fclose(fp);
}

KeypointHeads load_keypoint_heads(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) {
        throw IoError("load_keypoint_heads: cannot open " + path);
    }
    char magic[4];
    uint32_t version = 0, ns = 0, nc = 0, dim = 0;
    if (std::fread(magic, 1, 4, fp) != 4 || std::memcmp(magic, "VRKH", 4) != 0 ||
        std::fread(&version, 4, 1, fp) != 1 || version != 1 || std::fread(&ns, 4, 1, fp) != 1 ||
        std::fread(&nc, 4, 1, fp) != 1 || std::fread(&dim, 4, 1, fp) != 1) {
        std::fclose(fp);
        throw IoError("load_keypoint_heads: bad header in " + path);
    }
    KeypointHeads h;
    h.n_samples = static_cast<int>(ns);
    h.num_cameras = static_cast<int>(nc);
    auto slurp = [&](Eigen::MatrixXd& m, int rows, int cols) {
        m.resize(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                float v = 0.0f;
                if (std::fread(&v, 4, 1, fp) != 1) {
                    std::fclose(fp);
                    throw IoError("load_keypoint_heads: truncated file " + path);
                }
                m(r, c) = v;
            }
        }
    };
    Eigen::MatrixXd ob, wb;
    slurp(h.offset_w, static_cast<int>(ns) * 3, static_cast<int>(dim));
    slurp(ob, static_cast<int>(ns) * 3, 1);
    slurp(h.weight_w, static_cast<int>(nc * ns), static_cast<int>(dim));
    slurp(wb, static_cast<int>(nc * ns), 1);
    h.offset_b = ob.col(0);
    h.weight_b = wb.col(0);
    std::fclose(fp);
    return h;
}

}  // namespace vrsplat
