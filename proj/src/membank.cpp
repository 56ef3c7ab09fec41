// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/membank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "vrsplat/geometry.hpp"

namespace vrsplat {

Eigen::Matrix<double, Anchor::kDim, 1> Anchor::to_vector() const {
    Eigen::Matrix<double, kDim, 1> v;
    v << center, size, yaw, velocity;
    return v;
}

Anchor Anchor::from_vector(const Eigen::Matrix<double, kDim, 1>& v) {
    Anchor a;
    a.center = v.segment<3>(0);
    a.size = v.segment<3>(3);
    a.yaw = v[6];
    a.velocity = v.segment<2>(7);
    return a;
}

void MemoryBank::update(const std::vector<InstanceRecord>& instances, size_t k) {
    std::vector<size_t> order(instances.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (instances[a].confidence != instances[b].confidence) {
            return instances[a].confidence > instances[b].confidence;
        }
        return a < b;  // ties: lower original index wins
    });
    const size_t take = std::min(k, instances.size());
    std::vector<size_t> selected(order.begin(), order.begin() + take);
    std::sort(selected.begin(), selected.end());  // append in original order
    for (size_t idx : selected) {
        records_.push_back(instances[idx]);
    }
    if (records_.size() > capacity_) {
        records_.erase(records_.begin(),
                       records_.begin() + static_cast<long>(records_.size() - capacity_));
    }
}

void MemoryBank::restore(std::vector<InstanceRecord> records) {
    records_ = std::move(records);
    if (records_.size() > capacity_) {
        records_.erase(records_.begin(),
                       records_.begin() + static_cast<long>(records_.size() - capacity_));
    }
}

std::vector<InstanceRecord> align_to_current(const std::vector<InstanceRecord>& records,
                                             const Eigen::Isometry3d& current_ego_pose,
                                             double current_time) {
    std::vector<InstanceRecord> out;
    out.reserve(records.size());
    const Eigen::Isometry3d world_from_current = current_ego_pose;
    const Eigen::Isometry3d current_from_world = world_from_current.inverse();
    for (const InstanceRecord& rec : records) {
        const double dt = current_time - rec.timestamp;
        if (dt < 0.0) {
            throw TemporalOrderError("align_to_current: record timestamp " +
                                     std::to_string(rec.timestamp) + " is newer than " +
                                     std::to_string(current_time));
        }
        InstanceRecord aligned = rec;
        const Eigen::Matrix3d r_capture = rec.ego_pose.rotation();

        // Constant-velocity advance in the capture world frame.
        const Eigen::Vector3d v_world =
            r_capture * Eigen::Vector3d(rec.anchor.velocity.x(), rec.anchor.velocity.y(), 0.0);
        const Eigen::Vector3d center_world = rec.ego_pose * rec.anchor.center + v_world * dt;
        aligned.anchor.center = current_from_world * center_world;

        // Yaw and velocity re-expressed via direction vectors (rotations are
        // planar in this artifact; atan2 keeps it exact for them).
        const Eigen::Vector3d heading_capture(std::cos(rec.anchor.yaw), std::sin(rec.anchor.yaw),
                                              0.0);
        const Eigen::Vector3d heading_current =
            current_from_world.rotation() * (r_capture * heading_capture);
        aligned.anchor.yaw = std::atan2(heading_current.y(), heading_current.x());
        const Eigen::Vector3d v_current = current_from_world.rotation() * v_world;
        aligned.anchor.velocity = Eigen::Vector2d(v_current.x(), v_current.y());

        aligned.ego_pose = current_ego_pose;
        aligned.timestamp = current_time;
        out.push_back(std::move(aligned));
    }
    return out;
}

AttentionParams AttentionParams::identity(int dim) {
    AttentionParams p;
    p.w_query = Eigen::MatrixXd::Identity(dim, dim);
    p.w_key = Eigen::MatrixXd::Identity(dim, dim);
    p.w_value = Eigen::MatrixXd::Identity(dim, dim);
    p.w_output = Eigen::MatrixXd::Identity(dim, dim);
    p.b_query = Eigen::VectorXd::Zero(dim);
    p.b_key = Eigen::VectorXd::Zero(dim);
    p.b_value = Eigen::VectorXd::Zero(dim);
    p.b_output = Eigen::VectorXd::Zero(dim);
    p.heads = 1;
    return p;
}

AttentionParams AttentionParams::random(int dim, int heads, uint64_t seed) {
    AttentionParams p = identity(dim);
    p.heads = heads;
    Rng rng(seed);
    auto fill = [&](Eigen::MatrixXd& m) {
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                m(r, c) = rng.normal() / std::sqrt(static_cast<double>(dim));
            }
        }
    };
    fill(p.w_query);
    fill(p.w_key);
    fill(p.w_value);
    fill(p.w_output);
    return p;
}

void AttentionParams::validate(int dim) const {
    if (w_query.rows() != dim || w_query.cols() != dim || w_key.rows() != dim ||
        w_value.rows() != dim || w_output.rows() != dim) {
        throw ShapeError("attention: projection maps must be N_i x N_i");
    }
    if (heads <= 0 || dim % heads != 0) {
        throw ShapeError("attention: head count must divide the feature dimension");
    }
}

namespace {

// Row-wise numerically stable softmax.
void softmax_rows(Eigen::MatrixXd& scores) {
    for (int r = 0; r < scores.rows(); ++r) {
        const double peak = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - peak).exp();
        scores.row(r) /= scores.row(r).sum();
    }
}

Eigen::MatrixXd attend(const Eigen::MatrixXd& f_query, const Eigen::MatrixXd& f_kv,
                       const AttentionParams& params) {
    const int dim = static_cast<int>(f_query.cols());
    params.validate(dim);
    if (f_kv.rows() == 0) {
        return f_query;  // defined fallback: empty bank leaves queries unchanged
    }
    if (f_kv.cols() != dim) {
        throw ShapeError("attention: key/value feature dimension mismatch");
    }

    const Eigen::MatrixXd q =
        (f_query * params.w_query.transpose()).rowwise() + params.b_query.transpose();
    const Eigen::MatrixXd k =
        (f_kv * params.w_key.transpose()).rowwise() + params.b_key.transpose();
    const Eigen::MatrixXd v =
        (f_kv * params.w_value.transpose()).rowwise() + params.b_value.transpose();

    const int head_dim = dim / params.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Eigen::MatrixXd fused(f_query.rows(), dim);
    for (int h = 0; h < params.heads; ++h) {
        const auto qh = q.middleCols(h * head_dim, head_dim);
        const auto kh = k.middleCols(h * head_dim, head_dim);
        const auto vh = v.middleCols(h * head_dim, head_dim);
        Eigen::MatrixXd scores = scale * (qh * kh.transpose());
        softmax_rows(scores);
        fused.middleCols(h * head_dim, head_dim) = scores * vh;
    }
    const Eigen::MatrixXd projected =
        (fused * params.w_output.transpose()).rowwise() + params.b_output.transpose();
    return f_query + projected;
}

}  // namespace

Eigen::MatrixXd cross_attend(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_bank,
                             const AttentionParams& params) {
    if (f.rows() == 0) {
        throw ShapeError("cross_attend: query set must be nonempty");
    }
    return attend(f, f_bank, params);
}

Eigen::MatrixXd self_attend(const Eigen::MatrixXd& f, const AttentionParams& params) {
    if (f.rows() == 0) {
        throw ShapeError("self_attend: instance set must be nonempty");
    }
    return attend(f, f, params);
}

Eigen::MatrixXd bank_feature_matrix(const std::vector<InstanceRecord>& records) {
    if (records.empty()) {
        return Eigen::MatrixXd(0, 0);
    }
    Eigen::MatrixXd f(records.size(), records[0].feature.size());
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].feature.size() != f.cols()) {
            throw ShapeError("bank_feature_matrix: inconsistent feature dimensions");
        }
        f.row(i) = records[i].feature.transpose();
    }
    return f;
}

void save_bank(const std::string& path, const MemoryBank& bank) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw IoError("save_bank: cannot open " + path);
    }
    const char magic[4] = {'V', 'R', 'M', 'B'};
    const uint32_t version = 1;
    const uint32_t count = static_cast<uint32_t>(bank.size());
    const uint32_t dim =
        bank.empty() ? 0 : static_cast<uint32_t>(bank.records().front().feature.size());
    std::fwrite(magic, 1, 4, fp);
    std::fwrite(&version, 4, 1, fp);
    std::fwrite(&count, 4, 1, fp);
    std::fwrite(&dim, 4, 1, fp);
    for (const InstanceRecord& rec : bank.records()) {
        std::vector<float> buf;
        buf.reserve(dim + Anchor::kDim + 2 + 16 + 1);
        for (int i = 0; i < rec.feature.size(); ++i) {
            buf.push_back(static_cast<float>(rec.feature[i]));
        }
        const auto av = rec.anchor.to_vector();
        for (int i = 0; i < Anchor::kDim; ++i) {
            buf.push_back(static_cast<float>(av[i]));
        }
        buf.push_back(static_cast<float>(rec.confidence));
        buf.push_back(static_cast<float>(rec.timestamp));
        const Eigen::Matrix4d m = rec.ego_pose.matrix();
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                buf.push_back(static_cast<float>(m(r, c)));
            }
        }
        buf.push_back(static_cast<float>(rec.view_id));
        std::fwrite(buf.data(), sizeof(float), buf.size(), fp);
    }
    std::fclose(fp);
}

MemoryBank load_bank(const std::string& path, size_t capacity) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) {
        throw IoError("load_bank: cannot open " + path);
    }
    char magic[4];
    uint32_t version = 0, count = 0, dim = 0;
    if (std::fread(magic, 1, 4, fp) != 4 || std::memcmp(magic, "VRMB", 4) != 0 ||
        std::fread(&version, 4, 1, fp) != 1 || version != 1 ||
        std::fread(&count, 4, 1, fp) != 1 || std::fread(&dim, 4, 1, fp) != 1) {
        std::fclose(fp);
        throw IoError("load_bank: bad header in " + path);
    }
    MemoryBank bank(std::max<size_t>(capacity, count));
    const size_t rec_floats = dim + Anchor::kDim + 2 + 16 + 1;
    std::vector<float> buf(rec_floats);
    std::vector<InstanceRecord> recs;
    for (uint32_t i = 0; i < count; ++i) {
        if (std::fread(buf.data(), sizeof(float), rec_floats, fp) != rec_floats) {
            std::fclose(fp);
            throw IoError("load_bank: truncated file " + path);
        }
        InstanceRecord rec;
        rec.feature.resize(dim);
        size_t o = 0;
        for (uint32_t d = 0; d < dim; ++d) rec.feature[d] = buf[o++];
        Eigen::Matrix<double, Anchor::kDim, 1> av;
        for (int d = 0; d < Anchor::kDim; ++d) av[d] = buf[o++];
        rec.anchor = Anchor::from_vector(av);
        rec.confidence = buf[o++];
        rec.timestamp = buf[o++];
        Eigen::Matrix4d m;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                m(r, c) = buf[o++];
            }
        }
        rec.ego_pose = Eigen::Isometry3d(m);
        rec.view_id = static_cast<int>(buf[o++]);
        recs.push_back(std::move(rec));
    }
    std::fclose(fp);
    bank.restore(std::move(recs));
    return bank;
}

}  // namespace vrsplat
