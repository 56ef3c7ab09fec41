// Copyright Contributors to the vrsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: geometry, lifting, rendering,
// losses, the memory bank, distillation sampling, metrics and the benchmark.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vrsplat/config.hpp"
#include "vrsplat/harness.hpp"

namespace py = pybind11;
using namespace vrsplat;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) {
        throw ShapeError("image arrays must have shape (H, W, 3)");
    }
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), img.data().begin());
    return img;
}

py::array_t<double> array_from_image(const Image& img) {
    py::array_t<double> a({img.height(), img.width(), 3});
    std::copy(img.data().begin(), img.data().end(), a.mutable_data());
    return a;
}

Grid grid_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw ShapeError("grid arrays must have shape (H, W)");
    }
    Grid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), g.data().begin());
    return g;
}

py::array_t<double> array_from_grid(const Grid& g) {
    py::array_t<double> a({g.height(), g.width()});
    std::copy(g.data().begin(), g.data().end(), a.mutable_data());
    return a;
}

py::array_t<double> array_from_features(const FeatureMap& f) {
    py::array_t<double> a({f.num_views(), f.channels(), f.height(), f.width()});
    std::copy(f.data().begin(), f.data().end(), a.mutable_data());
    return a;
}

FeatureMap features_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 4) {
        throw ShapeError("feature maps must have shape (N, C, H, W)");
    }
    FeatureMap f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                 static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
    std::copy(a.data(), a.data() + a.size(), f.data().begin());
    return f;
}

py::dict dict_from_target(const RenderTarget& rt) {
    py::dict d;
    d["color"] = array_from_image(rt.color);
    d["alpha"] = array_from_grid(rt.alpha);
    d["depth"] = array_from_grid(rt.depth);
    d["background"] = rt.background;
    return d;
}

GaussianSet set_from_arrays(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& scale,
                            const Eigen::MatrixXd& rot, const Eigen::VectorXd& opacity,
                            const Eigen::MatrixXd& sh, int sh_degree) {
    const auto n = mu.rows();
    if (scale.rows() != n || rot.rows() != n || opacity.size() != n || sh.rows() != n ||
        mu.cols() != 3 || scale.cols() != 3 || rot.cols() != 4 ||
        sh.cols() != sh_coeff_count(sh_degree)) {
        throw ShapeError("gaussian_set: inconsistent array shapes");
    }
    GaussianSet set;
    set.sh_degree = sh_degree;
    for (Eigen::Index i = 0; i < n; ++i) {
        GaussianPrimitive p;
        p.mu = mu.row(i).transpose();
        p.scale = scale.row(i).transpose();
        p.rot = rot.row(i).transpose();
        p.opacity = opacity[i];
        p.sh.assign(sh.row(i).data(), sh.row(i).data() + sh.cols());
        // Eigen row is not contiguous; copy element-wise instead.
        for (Eigen::Index c = 0; c < sh.cols(); ++c) {
            p.sh[static_cast<size_t>(c)] = sh(i, c);
        }
        set.primitives.push_back(std::move(p));
    }
    return set;
}

Trajectory trajectory_from_array(const Eigen::MatrixXd& m) {
    if (m.rows() != 6 || m.cols() != 2) {
        throw ShapeError("trajectories must have shape (6, 2)");
    }
    Trajectory t;
    for (int i = 0; i < 6; ++i) {
        t.waypoints[i] = m.row(i).transpose();
    }
    return t;
}

py::dict dict_from_metrics(const HorizonMetrics& m) {
    py::dict d;
    d["at_1s"] = m.at_1s;
    d["at_2s"] = m.at_2s;
    d["at_3s"] = m.at_3s;
    d["avg"] = m.avg;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Feed-forward Gaussian-splatting view synthesis and viewpoint-robustness toolkit";

    py::register_exception<Error>(m, "VrsplatError", PyExc_RuntimeError);

    // ----- geometry -----
    py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
                 CameraIntrinsics in{fx, fy, cx, cy, width, height};
                 in.validate();
                 return in;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
             py::arg("height"))
        .def_readwrite("fx", &CameraIntrinsics::fx)
        .def_readwrite("fy", &CameraIntrinsics::fy)
        .def_readwrite("cx", &CameraIntrinsics::cx)
        .def_readwrite("cy", &CameraIntrinsics::cy)
        .def_readwrite("width", &CameraIntrinsics::width)
        .def_readwrite("height", &CameraIntrinsics::height);

    py::class_<CameraExtrinsics>(m, "CameraExtrinsics")
        .def(py::init([](const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
                 CameraExtrinsics e{rotation, translation};
                 e.validate();
                 return e;
             }),
             py::arg("rotation"), py::arg("translation"))
        .def_readwrite("rotation", &CameraExtrinsics::rotation)
        .def_readwrite("translation", &CameraExtrinsics::translation)
        .def("center", &CameraExtrinsics::center);

    py::class_<Camera>(m, "Camera")
        .def(py::init([](const CameraIntrinsics& in, const CameraExtrinsics& ex) {
                 return Camera{in, ex};
             }),
             py::arg("intrinsics"), py::arg("extrinsics"))
        .def_readwrite("intrinsics", &Camera::intrinsics)
        .def_readwrite("extrinsics", &Camera::extrinsics);

    py::class_<CameraRig>(m, "CameraRig")
        .def(py::init<>())
        .def_readwrite("cameras", &CameraRig::cameras)
        .def("num_cameras", &CameraRig::num_cameras);

    py::class_<RigDelta>(m, "RigDelta")
        .def(py::init([](double pitch_deg, double height_m, double depth_m) {
                 return RigDelta{pitch_deg, height_m, depth_m};
             }),
             py::arg("pitch_deg") = 0.0, py::arg("height_m") = 0.0, py::arg("depth_m") = 0.0)
        .def_readwrite("pitch_deg", &RigDelta::pitch_deg)
        .def_readwrite("height_m", &RigDelta::height_m)
        .def_readwrite("depth_m", &RigDelta::depth_m);

    m.def("project", [](const Eigen::Vector3d& p, const Camera& cam) {
        auto [pixel, depth] = project(p, cam);
        return py::make_tuple(pixel, depth);
    });
    m.def("unproject", &unproject, py::arg("pixel"), py::arg("depth"), py::arg("camera"));
    m.def(
        "perturb_extrinsic",
        [](const CameraExtrinsics& e, const RigDelta& d, const Eigen::Vector3d& forward,
           const Eigen::Vector3d& up) { return perturb_extrinsic(e, d, forward, up); },
        py::arg("extrinsics"), py::arg("delta"),
        py::arg("forward_axis") = Eigen::Vector3d::UnitX().eval(),
        py::arg("up_axis") = Eigen::Vector3d::UnitZ().eval());
    m.def("perturb_rig", &perturb_rig);
    m.def(
        "sample_rig_deltas",
        [](uint64_t seed, const std::string& mode, int count) {
            RigDeltaRange range = mode == "superset" ? superset_delta_range()
                                : mode == "subset"   ? subset_delta_range()
                                                     : default_delta_range();
            if (mode != "default" && mode != "superset" && mode != "subset") {
                throw ConfigError("sample_rig_deltas: unknown mode \"" + mode + "\"");
            }
            Rng rng(seed);
            Eigen::MatrixXd out(count, 3);
            for (int i = 0; i < count; ++i) {
                const RigDelta d = sample_rig_delta(rng, range);
                out.row(i) << d.pitch_deg, d.height_m, d.depth_m;
            }
            return out;
        },
        py::arg("seed"), py::arg("mode") = "default", py::arg("count") = 1);
    m.def("load_rig", &load_rig);
    m.def("save_rig", &save_rig);
    m.def("make_mounted_rig", [](int n_cameras, int width, int height, double focal) {
        RigParams p;
        p.n_cameras = n_cameras;
        p.width = width;
        p.height = height;
        p.focal = focal;
        return make_mounted_rig(p);
    }, py::arg("n_cameras") = 3, py::arg("width") = 64, py::arg("height") = 64,
       py::arg("focal") = 60.0);

    // ----- gaussians -----
    py::class_<GaussianSet>(m, "GaussianSet")
        .def_readonly("sh_degree", &GaussianSet::sh_degree)
        .def("__len__", [](const GaussianSet& s) { return s.size(); })
        .def("positions", [](const GaussianSet& s) {
            Eigen::MatrixXd mu(s.size(), 3);
            for (size_t i = 0; i < s.size(); ++i) {
                mu.row(i) = s.primitives[i].mu.transpose();
            }
            return mu;
        });
    m.def("gaussian_set", &set_from_arrays, py::arg("mu"), py::arg("scale"), py::arg("rot"),
          py::arg("opacity"), py::arg("sh"), py::arg("sh_degree") = 0);
    m.def("save_gaussians", &save_gaussians);
    m.def("load_gaussians", &load_gaussians);
    m.def("covariance_from", &covariance_from, py::arg("scale"), py::arg("rot"));
    m.def("eval_sh", [](const std::vector<double>& sh, const Eigen::Vector3d& dir) {
        return eval_sh(sh, dir);
    });
    m.def(
        "lift_pixels",
        [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
               depths,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& feats,
           const CameraRig& rig, double scale_gain, double opacity) {
            DepthMap depth;
            for (const auto& d : depths) {
                depth.views.push_back(grid_from_array(d));
            }
            const AnalyticHead head(scale_gain, opacity);
            return lift_pixels(depth, features_from_array(feats), rig, head);
        },
        py::arg("depths"), py::arg("features"), py::arg("rig"), py::arg("scale_gain") = 0.9,
        py::arg("opacity") = 0.9,
        "Feed-forward pixel-wise lifting with the analytic parameter head");

    // ----- rasterizer -----
    auto parse_opts = [](const Eigen::Vector3d& background, double far_depth,
                         double termination_threshold) {
        RenderOptions opts;
        opts.background = background;
        opts.far_depth = far_depth;
        opts.termination_threshold = termination_threshold;
        return opts;
    };
    m.def(
        "rasterize",
        [parse_opts](const GaussianSet& set, const Camera& cam, const Eigen::Vector3d& background,
                     double far_depth, double termination_threshold) {
            return dict_from_target(
                rasterize(set, cam, parse_opts(background, far_depth, termination_threshold)));
        },
        py::arg("set"), py::arg("camera"), py::arg("background") = Eigen::Vector3d::Zero().eval(),
        py::arg("far_depth") = 100.0, py::arg("termination_threshold") = 1e-4);
    m.def(
        "rasterize_reference",
        [parse_opts](const GaussianSet& set, const Camera& cam, const Eigen::Vector3d& background,
                     double far_depth) {
            return dict_from_target(
                rasterize_reference(set, cam, parse_opts(background, far_depth, 0.0)));
        },
        py::arg("set"), py::arg("camera"), py::arg("background") = Eigen::Vector3d::Zero().eval(),
        py::arg("far_depth") = 100.0);

    // ----- losses -----
    m.def("render_l2", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                          const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return render_l2(image_from_array(a), image_from_array(b));
    });
    m.def("perceptual",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
              return perceptual(image_from_array(a), image_from_array(b));
          });
    m.def("psnr", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                     const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return psnr(image_from_array(a), image_from_array(b));
    });
    m.def("depth_l1",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& target,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& mask) {
              return depth_l1(grid_from_array(pred), grid_from_array(target),
                              grid_from_array(mask));
          });
    m.def(
        "distill_loss",
        [](const std::vector<Eigen::VectorXd>& s_novel, const std::vector<Eigen::VectorXd>& s_orig,
           const std::vector<double>& conf, double tau) {
            const DistillLoss d = distill_loss(s_novel, s_orig, conf, tau);
            py::dict out;
            out["value"] = d.value;
            out["active_count"] = d.active_count;
            out["empty_set"] = d.empty_set;
            return out;
        },
        py::arg("s_novel"), py::arg("s_orig"), py::arg("confidences"), py::arg("tau") = 0.3);
    m.def(
        "total_loss",
        [](const std::map<std::string, double>& terms,
           const std::map<std::string, double>& weights) {
            const LossReport r = total_loss(terms, weights);
            py::dict out;
            out["terms"] = r.terms;
            out["weights"] = r.weights;
            out["total"] = r.total;
            return out;
        },
        py::arg("terms"), py::arg("weights") = std::map<std::string, double>{});

    // ----- memory bank -----
    py::class_<Anchor>(m, "Anchor")
        .def(py::init<>())
        .def_readwrite("center", &Anchor::center)
        .def_readwrite("size", &Anchor::size)
        .def_readwrite("yaw", &Anchor::yaw)
        .def_readwrite("velocity", &Anchor::velocity);

    py::class_<InstanceRecord>(m, "InstanceRecord")
        .def(py::init<>())
        .def_readwrite("feature", &InstanceRecord::feature)
        .def_readwrite("anchor", &InstanceRecord::anchor)
        .def_readwrite("confidence", &InstanceRecord::confidence)
        .def_readwrite("timestamp", &InstanceRecord::timestamp)
        .def_readwrite("view_id", &InstanceRecord::view_id)
        .def_property(
            "ego_pose",
            [](const InstanceRecord& r) { return r.ego_pose.matrix(); },
            [](InstanceRecord& r, const Eigen::Matrix4d& m) { r.ego_pose = Eigen::Isometry3d(m); });

    py::class_<MemoryBank>(m, "MemoryBank")
        .def(py::init<size_t>(), py::arg("capacity") = 600)
        .def("size", &MemoryBank::size)
        .def_property_readonly("capacity", &MemoryBank::capacity)
        .def("update", &MemoryBank::update, py::arg("instances"), py::arg("k"))
        .def("records", [](const MemoryBank& b) { return b.records(); })
        .def("clear", &MemoryBank::clear);

    m.def(
        "align_to_current",
        [](const std::vector<InstanceRecord>& records, const Eigen::Matrix4d& pose, double now) {
            return align_to_current(records, Eigen::Isometry3d(pose), now);
        },
        py::arg("records"), py::arg("current_ego_pose"), py::arg("current_time"));

    py::class_<AttentionParams>(m, "AttentionParams")
        .def_static("identity", &AttentionParams::identity, py::arg("dim"))
        .def_static("random", &AttentionParams::random, py::arg("dim"), py::arg("heads"),
                    py::arg("seed"))
        .def_readwrite("heads", &AttentionParams::heads)
        .def_readwrite("w_query", &AttentionParams::w_query)
        .def_readwrite("w_key", &AttentionParams::w_key)
        .def_readwrite("w_value", &AttentionParams::w_value)
        .def_readwrite("w_output", &AttentionParams::w_output);
    m.def("cross_attend", &cross_attend, py::arg("f"), py::arg("f_bank"), py::arg("params"));
    m.def("self_attend", &self_attend, py::arg("f"), py::arg("params"));
    m.def("save_bank", &save_bank);
    m.def("load_bank", &load_bank, py::arg("path"), py::arg("capacity") = 600);

    // ----- distillation sampling -----
    py::class_<KeypointHeads>(m, "KeypointHeads")
        .def_static("random", &KeypointHeads::random, py::arg("feature_dim"),
                    py::arg("n_samples"), py::arg("num_cameras"), py::arg("seed"))
        .def_readwrite("n_samples", &KeypointHeads::n_samples)
        .def_readwrite("num_cameras", &KeypointHeads::num_cameras)
        .def_readwrite("offset_w", &KeypointHeads::offset_w)
        .def_readwrite("offset_b", &KeypointHeads::offset_b)
        .def_readwrite("weight_w", &KeypointHeads::weight_w)
        .def_readwrite("weight_b", &KeypointHeads::weight_b);
    m.def("gen_keypoints", &gen_keypoints);
    m.def("gen_weights", &gen_weights);
    m.def("sample_points", &sample_points);
    m.def(
        "bilinear_sample",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& feats,
           const Eigen::Vector2d& pixel) {
            bool in_view = false;
            const Eigen::VectorXd v =
                bilinear_sample(features_from_array(feats), 0, pixel, &in_view);
            return py::make_tuple(v, in_view);
        },
        py::arg("features"), py::arg("pixel"));
    m.def(
        "sampled_feature",
        [](const InstanceRecord& anchor, const Eigen::VectorXd& feature,
           const KeypointHeads& heads,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& feats,
           const CameraRig& rig) {
            return sampled_feature(anchor, feature, heads, features_from_array(feats), rig, 0,
                                   false)
                .value;
        },
        py::arg("anchor"), py::arg("feature"), py::arg("heads"), py::arg("features"),
        py::arg("rig"));

    // ----- harness -----
    py::class_<SyntheticScene>(m, "SyntheticScene")
        .def_readonly("seed", &SyntheticScene::seed)
        .def_readonly("n_timesteps", &SyntheticScene::n_timesteps)
        .def("num_boxes", [](const SyntheticScene& s) { return s.boxes.size(); })
        .def("gaussians_at", &SyntheticScene::gaussians_at, py::arg("timestep"))
        .def("ego_pose",
             [](const SyntheticScene& s, int t) { return s.ego_pose(t).matrix(); });
    m.def(
        "build_scene",
        [](uint64_t seed, int n_objects, int n_timesteps) {
            return build_scene(seed, n_objects, n_timesteps);
        },
        py::arg("seed"), py::arg("n_objects") = 5, py::arg("n_timesteps") = 10);
    m.def("rig_at_pose", [](const CameraRig& mounted, const Eigen::Matrix4d& pose) {
        return rig_at_pose(mounted, Eigen::Isometry3d(pose));
    });
    m.def("extract_features",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image) {
              return array_from_features(extract_features(image_from_array(image)));
          });
    m.def(
        "l2_displacement",
        [](const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
            return dict_from_metrics(
                l2_displacement(trajectory_from_array(pred), trajectory_from_array(gt)));
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "collision_rate",
        [](const Eigen::MatrixXd& pred, double ego_length, double ego_width,
           const std::vector<std::vector<std::tuple<double, double, double, double, double>>>&
               obstacles) {
            std::vector<std::vector<OrientedBox2D>> boxes(obstacles.size());
            for (size_t i = 0; i < obstacles.size(); ++i) {
                for (const auto& [cx, cy, length, width, yaw] : obstacles[i]) {
                    boxes[i].push_back({{cx, cy}, length, width, yaw});
                }
            }
            return dict_from_metrics(
                collision_rate(trajectory_from_array(pred), ego_length, ego_width, boxes));
        },
        py::arg("pred"), py::arg("ego_length"), py::arg("ego_width"), py::arg("obstacles"),
        "obstacles: per waypoint, list of (cx, cy, length, width, yaw) tuples");
    m.def(
        "run_gradient_check",
        [](uint64_t seed, int n_gaussians, double perturb) {
            py::list rows;
            for (const GradCheckRow& r : run_gradient_check(seed, n_gaussians, perturb)) {
                py::dict d;
                d["group"] = r.group;
                d["max_rel_err"] = r.max_rel_err;
                d["pass"] = r.pass;
                rows.append(d);
            }
            return rows;
        },
        py::arg("seed") = 1, py::arg("n_gaussians") = 8, py::arg("perturb") = 0.0);
    m.def("load_config", &load_config);
    m.def(
        "run_benchmark",
        [](const std::string& config_path, const std::string& out_dir) {
            const BenchmarkConfig cfg =
                config_path.empty() ? BenchmarkConfig{} : load_config(config_path);
            const BenchmarkReport report = run_benchmark(cfg, out_dir);
            py::list rows;
            for (const BenchmarkRow& r : report.rows) {
                py::dict d;
                d["scene_seed"] = r.scene_seed;
                d["setting"] = r.setting;
                d["psnr_db"] = r.psnr_db;
                d["recon_cyclic"] = r.recon_cyclic;
                d["distill"] = r.distill;
                d["feat_consistency"] = r.feat_consistency;
                d["l2"] = dict_from_metrics(r.l2);
                d["collision"] = dict_from_metrics(r.collision);
                rows.append(d);
            }
            return rows;
        },
        py::arg("config_path") = "", py::arg("out_dir") = "");
}
