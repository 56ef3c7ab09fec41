// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "vrsplat/error.hpp"

namespace vrsplat {

// Oriented 3D box parameterization shared by the memory bank, distillation
// and the metric suite: center (m), size l/w/h (m), yaw (rad, about world z),
// planar velocity (m/s) in the frame the anchor currently lives in.
struct Anchor {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Ones();  // l, w, h
    double yaw = 0.0;
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();

    static constexpr int kDim = 9;
    Eigen::Matrix<double, kDim, 1> to_vector() const;
    static Anchor from_vector(const Eigen::Matrix<double, kDim, 1>& v);
};

struct InstanceRecord {
    Eigen::VectorXd feature;  // N_i-dim
    Anchor anchor;
    double confidence = 0.0;  // [0, 1]
    double timestamp = 0.0;   // seconds
    Eigen::Isometry3d ego_pose = Eigen::Isometry3d::Identity();  // world-from-ego at capture
    int view_id = 0;  // diagnostic only; mixing original/novel passes is the point
};

// FIFO store of high-confidence instances; insertion order is age order.
class MemoryBank {
public:
    explicit MemoryBank(size_t capacity = 600) : capacity_(capacity) {}

    size_t capacity() const { return capacity_; }
    size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const std::vector<InstanceRecord>& records() const { return records_; }

    // Appends the K highest-confidence instances (ties broken by lower
    // original index, appended in original order), then evicts oldest records
    // until the capacity holds.
    void update(const std::vector<InstanceRecord>& instances, size_t k);

    // Replaces the contents verbatim (checkpoint restore); keeps the newest
    // records if the list exceeds the capacity.
    void restore(std::vector<InstanceRecord> records);

    void clear() { records_.clear(); }

private:
    size_t capacity_;
    std::vector<InstanceRecord> records_;  // oldest first
};

// Advances each anchor by velocity * dt in its capture world frame, then
// re-expresses center/yaw/velocity in the current ego frame. Features stay
// untouched; returned records carry the current pose and timestamp. Throws
// TemporalOrderError when any record is newer than current_time.
std::vector<InstanceRecord> align_to_current(const std::vector<InstanceRecord>& records,
                                             const Eigen::Isometry3d& current_ego_pose,
                                             double current_time);

struct AttentionParams {
    Eigen::MatrixXd w_query, w_key, w_value, w_output;  // each N_i x N_i
    Eigen::VectorXd b_query, b_key, b_value, b_output;
    int heads = 1;

    static AttentionParams identity(int dim);
    static AttentionParams random(int dim, int heads, uint64_t seed);
    void validate(int dim) const;
};

// Scaled dot-product cross-attention (queries from f, keys/values from
// f_bank) with a residual connection adding f. Rows are instances. An empty
// bank returns f unchanged.
Eigen::MatrixXd cross_attend(const Eigen::MatrixXd& f, const Eigen::MatrixXd& f_bank,
                             const AttentionParams& params);

// Self-attention: queries = keys = values = f, plus the residual.
Eigen::MatrixXd self_attend(const Eigen::MatrixXd& f, const AttentionParams& params);

// Feature matrix of aligned records, one row per record; empty matrix for an
// empty bank.
Eigen::MatrixXd bank_feature_matrix(const std::vector<InstanceRecord>& records);

// Checkpoint I/O. Same binary convention as the Gaussian format: 16-byte
// header (magic "VRMB", u32 version, u32 record count, u32 feature dim), then
// fixed-width little-endian float32 records
// [feature(N_i), anchor(9), confidence, timestamp, ego_pose(16 row-major),
//  view_id].
void save_bank(const std::string& path, const MemoryBank& bank);
MemoryBank load_bank(const std::string& path, size_t capacity = 600);

}  // namespace vrsplat
