// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: splat rendering under rig perturbations, renderer
// gradient verification, and the viewpoint-robustness benchmark.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "vrsplat/config.hpp"
#include "vrsplat/harness.hpp"

namespace {

using namespace vrsplat;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUsage = 2;

struct RenderArgs {
    uint64_t seed = 7;
    bool seed_set = false;
    std::string scene_path;
    std::string rig_path;
    double delta_pitch = 0.0;
    double delta_height = 0.0;
    double delta_depth = 0.0;
    bool reference = false;
    std::string out_dir = "render_out";
    int n_objects = 5;
    int timestep = 0;
    bool verbose = false;
};

int cmd_render(const RenderArgs& args) {
    GaussianSet set;
    Eigen::Isometry3d ego_pose = Eigen::Isometry3d::Identity();
    SceneParams scene_params;
    if (!args.scene_path.empty()) {
        set = load_gaussians(args.scene_path);
    } else {
        const SyntheticScene scene =
            build_scene(args.seed, args.n_objects, args.timestep + 1, scene_params);
        set = scene.gaussians_at(args.timestep);
        ego_pose = scene.ego_pose(args.timestep);
    }

    CameraRig mounted = args.rig_path.empty() ? make_mounted_rig() : load_rig(args.rig_path);
    const RigDelta delta{args.delta_pitch, args.delta_height, args.delta_depth};
    if (!delta.is_zero()) {
        mounted = perturb_rig(mounted, delta);
    }
    const CameraRig rig = rig_at_pose(mounted, ego_pose);

    RenderOptions opts;
    opts.background = scene_params.background;

    std::filesystem::create_directories(args.out_dir);
    for (int c = 0; c < rig.num_cameras(); ++c) {
        const RenderTarget tile = rasterize(set, rig.cameras[c], opts);
        const RenderTarget final_target =
            args.reference ? rasterize_reference(set, rig.cameras[c], opts) : tile;
        if (args.reference) {
            const double p = psnr(tile.color, final_target.color);
            std::printf("camera %d psnr_tile_vs_reference_db=%s\n", c,
                        std::isinf(p) ? "inf" : std::to_string(p).c_str());
        }
        const std::string stem = args.out_dir + "/cam" + std::to_string(c);
        write_png(stem + ".png", final_target.color);
        write_raw(stem + ".raw", final_target.color);
        if (args.verbose) {
            std::printf("wrote %s.png and %s.raw\n", stem.c_str(), stem.c_str());
        }
    }
    return kExitOk;
}

struct GradcheckArgs {
    uint64_t seed = 1;
    int scene_size = 8;
    double perturb_analytic = 0.0;
    double tolerance = 1e-3;
};

int cmd_gradcheck(const GradcheckArgs& args) {
    const std::vector<GradCheckRow> rows =
        run_gradient_check(args.seed, args.scene_size, args.perturb_analytic, args.tolerance);
    std::printf("%-8s %-12s %-14s %-14s %s\n", "group", "max_rel_err", "analytic", "numeric",
                "status");
    bool all_pass = true;
    const GradCheckRow* worst = nullptr;
    for (const GradCheckRow& row : rows) {
        std::printf("%-8s %-12.3e %-14.6e %-14.6e %s\n", row.group.c_str(), row.max_rel_err,
                    row.analytic, row.numeric, row.pass ? "pass" : "FAIL");
        all_pass = all_pass && row.pass;
        if (!worst || row.max_rel_err > worst->max_rel_err) {
            worst = &row;
        }
    }
    if (!all_pass && worst) {
        std::printf("worst: group=%s analytic=%.9e numeric=%.9e rel_err=%.3e\n",
                    worst->group.c_str(), worst->analytic, worst->numeric, worst->max_rel_err);
    }
    return all_pass ? kExitOk : kExitVerificationFailure;
}

struct BenchArgs {
    std::string config_path;
    std::string rigs_mode;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "bench_out";
    bool verbose = false;
};

int cmd_bench(const BenchArgs& args) {
    BenchmarkConfig config =
        args.config_path.empty() ? BenchmarkConfig{} : load_config(args.config_path);
    if (!args.rigs_mode.empty()) {
        config.range_mode = args.rigs_mode;
    }
    if (args.seed_set) {
        config.scene_seeds = {args.seed};  // flag overrides config
    }
    const BenchmarkReport report = run_benchmark(config, args.out_dir);
    if (args.verbose) {
        std::printf("%zu report rows written to %s\n", report.rows.size(), args.out_dir.c_str());
    }
    std::printf("report: %s/report.csv\nsummary: %s/summary.txt\n", args.out_dir.c_str(),
                args.out_dir.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-splatting view synthesis and viewpoint-robustness toolkit"};
    app.require_subcommand(1);

    RenderArgs render_args;
    CLI::App* render = app.add_subcommand("render", "Render a scene through a (perturbed) rig");
    render->add_option("--seed", render_args.seed, "Synthetic scene seed")
        ->default_val(render_args.seed);
    render->add_option("--scene", render_args.scene_path,
                       "Gaussian set binary (.bin) instead of a seeded scene");
    render->add_option("--rig", render_args.rig_path, "Rig JSON (camera-from-vehicle mounts)");
    render->add_option("--delta-pitch", render_args.delta_pitch, "Rig pitch delta, degrees");
    render->add_option("--delta-height", render_args.delta_height, "Rig height delta, meters");
    render->add_option("--delta-depth", render_args.delta_depth, "Rig depth delta, meters");
    render->add_flag("--reference", render_args.reference,
                     "Render through the brute-force oracle path and print tile-vs-oracle PSNR");
    render->add_option("--out", render_args.out_dir, "Output directory")
        ->default_val(render_args.out_dir);
    render->add_option("--n-objects", render_args.n_objects, "Objects in the seeded scene");
    render->add_option("--timestep", render_args.timestep, "Scene timestep to render");
    render->add_flag("-v,--verbose", render_args.verbose, "Verbose output");

    GradcheckArgs grad_args;
    CLI::App* grad = app.add_subcommand(
        "gradcheck", "Finite-difference verification of the renderer gradients");
    grad->add_option("--seed", grad_args.seed, "Scene seed")->default_val(grad_args.seed);
    grad->add_option("--scene-size", grad_args.scene_size, "Number of Gaussians")
        ->default_val(grad_args.scene_size);
    grad->add_option("--perturb-analytic", grad_args.perturb_analytic,
                     "Fault injection: offset added to analytic gradients (negative control)");
    grad->add_option("--tolerance", grad_args.tolerance, "Relative error tolerance")
        ->default_val(grad_args.tolerance);

    BenchArgs bench_args;
    CLI::App* bench =
        app.add_subcommand("bench", "Run the viewpoint-robustness benchmark protocol");
    bench->add_option("--config", bench_args.config_path, "Benchmark INI config");
    bench->add_option("--rigs", bench_args.rigs_mode,
                      "Training range mode: default, superset or subset");
    bench
        ->add_option_function<uint64_t>(
            "--seed",
            [&](const uint64_t& v) {
                bench_args.seed = v;
                bench_args.seed_set = true;
            },
            "Replace the config scene list with a single seed")
        ->expected(1);
    bench->add_option("--out", bench_args.out_dir, "Output directory")
        ->default_val(bench_args.out_dir);
    bench->add_flag("-v,--verbose", bench_args.verbose, "Verbose output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (render->parsed()) {
            return cmd_render(render_args);
        }
        if (grad->parsed()) {
            return cmd_gradcheck(grad_args);
        }
        if (bench->parsed()) {
            return cmd_bench(bench_args);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return kExitVerificationFailure;
    }
    return kExitUsage;
}
