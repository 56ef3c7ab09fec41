// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "vrsplat/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace vrsplat {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s = {
        {"scene",
         {"seeds", "n_objects", "n_timesteps", "arena_half", "plane_forward_min",
          "plane_forward_max", "plane_side", "plane_spacing", "texture_frequency",
          "moving_fraction_pct", "ego_speed", "background_r", "background_g", "background_b"}},
        {"rig",
         {"n_cameras", "width", "height", "focal", "mount_height", "mount_forward",
          "side_yaw_deg"}},
        {"ranges", {"mode"}},
        {"losses",
         {"lambda_p", "tau", "weight_render_l2", "weight_perceptual", "weight_recon_original",
          "weight_recon_cyclic", "weight_depth_l1", "weight_distill", "weight_det", "weight_map",
          "weight_motion", "weight_plan"}},
        {"bank", {"capacity", "top_k", "heads", "feature_dim"}},
        {"distill", {"n_samples", "head_seed", "analytic_scale_gain", "analytic_opacity"}},
        {"benchmark", {"eval_timestep", "with_trajectories", "write_pngs"}},
    };
    return s;
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto begin = item.find_first_not_of(" \t");
        if (begin == std::string::npos) {
            continue;
        }
        const auto end = item.find_last_not_of(" \t");
        const std::string token = item.substr(begin, end - begin + 1);
        try {
            seeds.push_back(std::stoull(token));
        } catch (const std::exception&) {
            throw ConfigError("scene.seeds: cannot parse seed \"" + token + "\"");
        }
    }
    return seeds;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& section, const std::string& key, T& out) {
    const auto child = tree.get_child_optional(section);
    if (!child) {
        return;
    }
    const auto value = child->get_optional<T>(key);
    if (value) {
        out = *value;
    }
}

}  // namespace

BenchmarkConfig load_config(const std::string& path) {
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw IoError("load_config: " + std::string(e.what()));
    }

    // Reject unknown sections and keys outright.
    for (const auto& [section, body] : tree) {
        const auto it = schema().find(section);
        if (it == schema().end()) {
            throw ConfigError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw ConfigError("config: unknown key \"" + section + "." + key + "\"");
            }
            (void)value;
        }
    }

    BenchmarkConfig cfg;
    std::string seeds_text;
    read(tree, "scene", "seeds", seeds_text);
    if (!seeds_text.empty()) {
        cfg.scene_seeds = parse_seed_list(seeds_text);
    }
    read(tree, "scene", "n_objects", cfg.n_objects);
    read(tree, "scene", "n_timesteps", cfg.n_timesteps);
    read(tree, "scene", "arena_half", cfg.scene.arena_half);
    read(tree, "scene", "plane_forward_min", cfg.scene.plane_forward_min);
    read(tree, "scene", "plane_forward_max", cfg.scene.plane_forward_max);
    read(tree, "scene", "plane_side", cfg.scene.plane_side);
    read(tree, "scene", "plane_spacing", cfg.scene.plane_spacing);
    read(tree, "scene", "texture_frequency", cfg.scene.texture_frequency);
    read(tree, "scene", "moving_fraction_pct", cfg.scene.moving_fraction_pct);
    read(tree, "scene", "ego_speed", cfg.scene.ego_speed);
    read(tree, "scene", "background_r", cfg.scene.background.x());
    read(tree, "scene", "background_g", cfg.scene.background.y());
    read(tree, "scene", "background_b", cfg.scene.background.z());

    read(tree, "rig", "n_cameras", cfg.rig.n_cameras);
    read(tree, "rig", "width", cfg.rig.width);
    read(tree, "rig", "height", cfg.rig.height);
    read(tree, "rig", "focal", cfg.rig.focal);
    read(tree, "rig", "mount_height", cfg.rig.mount_height);
    read(tree, "rig", "mount_forward", cfg.rig.mount_forward);
    read(tree, "rig", "side_yaw_deg", cfg.rig.side_yaw_deg);

    read(tree, "ranges", "mode", cfg.range_mode);

    read(tree, "losses", "lambda_p", cfg.lambda_p);
    read(tree, "losses", "tau", cfg.tau);
    for (const std::string& term : loss_term_names()) {
        double w = 1.0;
        bool present = false;
        const auto child = tree.get_child_optional("losses");
        if (child) {
            const auto value = child->get_optional<double>("weight_" + term);
            if (value) {
                w = *value;
                present = true;
            }
        }
        if (present) {
            cfg.loss_weights[term] = w;
        }
    }

    uint64_t capacity = cfg.bank_capacity;
    read(tree, "bank", "capacity", capacity);
    cfg.bank_capacity = capacity;
    read(tree, "bank", "top_k", cfg.bank_top_k);
    read(tree, "bank", "heads", cfg.attention_heads);
    read(tree, "bank", "feature_dim", cfg.feature_dim);

    read(tree, "distill", "n_samples", cfg.n_samples);
    read(tree, "distill", "head_seed", cfg.head_seed);
    read(tree, "distill", "analytic_scale_gain", cfg.analytic_scale_gain);
    read(tree, "distill", "analytic_opacity", cfg.analytic_opacity);

    read(tree, "benchmark", "eval_timestep", cfg.eval_timestep);
    auto read_bool = [&](const std::string& key, bool& out) {
        std::string text;
        read(tree, "benchmark", key, text);
        if (text.empty()) {
            return;
        }
        if (text == "true" || text == "1") {
            out = true;
        } else if (text == "false" || text == "0") {
            out = false;
        } else {
            throw ConfigError("benchmark." + key + ": expected true/false, got \"" + text + "\"");
        }
    };
    read_bool("with_trajectories", cfg.with_trajectories);
    read_bool("write_pngs", cfg.write_pngs);
    return cfg;
}

void save_config(const std::string& path, const BenchmarkConfig& cfg) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("save_config: cannot open " + path);
    }
    out << "[scene]\n";
    out << "seeds = ";
    for (size_t i = 0; i < cfg.scene_seeds.size(); ++i) {
        out << (i ? "," : "") << cfg.scene_seeds[i];
    }
    out << "\n";
    out << "n_objects = " << cfg.n_objects << "\n";
    out << "n_timesteps = " << cfg.n_timesteps << "\n";
    out << "arena_half = " << cfg.scene.arena_half << "\n";
    out << "plane_forward_min = " << cfg.scene.plane_forward_min << "\n";
    out << "plane_forward_max = " << cfg.scene.plane_forward_max << "\n";
    out << "plane_side = " << cfg.scene.plane_side << "\n";
    out << "plane_spacing = " << cfg.scene.plane_spacing << "\n";
    out << "texture_frequency = " << cfg.scene.texture_frequency << "\n";
    out << "moving_fraction_pct = " << cfg.scene.moving_fraction_pct << "\n";
    out << "ego_speed = " << cfg.scene.ego_speed << "\n";
    out << "background_r = " << cfg.scene.background.x() << "\n";
    out << "background_g = " << cfg.scene.background.y() << "\n";
    out << "background_b = " << cfg.scene.background.z() << "\n";
    out << "\n[rig]\n";
    out << "n_cameras = " << cfg.rig.n_cameras << "\n";
    out << "width = " << cfg.rig.width << "\n";
    out << "height = " << cfg.rig.height << "\n";
    out << "focal = " << cfg.rig.focal << "\n";
    out << "mount_height = " << cfg.rig.mount_height << "\n";
    out << "mount_forward = " << cfg.rig.mount_forward << "\n";
    out << "side_yaw_deg = " << cfg.rig.side_yaw_deg << "\n";
    out << "\n[ranges]\n";
    out << "mode = " << cfg.range_mode << "\n";
    out << "\n[losses]\n";
    out << "lambda_p = " << cfg.lambda_p << "\n";
    out << "tau = " << cfg.tau << "\n";
    for (const auto& [term, weight] : cfg.loss_weights) {
        out << "weight_" << term << " = " << weight << "\n";
    }
    out << "\n[bank]\n";
    out << "capacity = " << cfg.bank_capacity << "\n";
    out << "top_k = " << cfg.bank_top_k << "\n";
    out << "heads = " << cfg.attention_heads << "\n";
    out << "feature_dim = " << cfg.feature_dim << "\n";
    out << "\n[distill]\n";
    out << "n_samples = " << cfg.n_samples << "\n";
    out << "head_seed = " << cfg.head_seed << "\n";
    out << "analytic_scale_gain = " << cfg.analytic_scale_gain << "\n";
    out << "analytic_opacity = " << cfg.analytic_opacity << "\n";
    out << "\n[benchmark]\n";
    out << "eval_timestep = " << cfg.eval_timestep << "\n";
    out << "with_trajectories = " << (cfg.with_trajectories ? "true" : "false") << "\n";
    out << "write_pngs = " << (cfg.write_pngs ? "true" : "false") << "\n";
}

}  // namespace vrsplat
