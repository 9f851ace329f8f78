// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoprune/geoprune.hpp"

namespace geoprune::cli {

namespace detail {

struct PruneArgs {
    std::string bundle;
    std::string strategy = "geo3d";
    std::string relevance = "attention";
    std::string self_term = "exclude";
    double alpha = 0.5;
    double delta = 0.1;
    std::size_t k = 8;
    std::optional<std::size_t> budget;
    std::optional<double> ratio;
    std::uint64_t seed = 0;
    std::string out;
};

struct GenArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::size_t objects = 10;
    bool point = false;
    std::size_t frames = 8;
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t patch = 14;
    double radius = 2.5;
    double height = 1.0;
    double fov = 0.9;
    double noise = 0.0005;
    double coupling = 0.05;
    double delta = 0.1;
    std::size_t feature_dim = 16;
    double half_width = 1.0;
    double min_extent = 0.3;
    double max_extent = 0.8;
};

struct EvalArgs {
    std::string bundle;
    std::string result;
    std::string out;
};

struct PlyArgs {
    std::string bundle;
    std::string result;
    std::string before;
    std::string after;
};

inline io::LoadedResult read_result(const std::string& path) { return io::result_from_json(io::read_json(path)); }

inline int run_prune(const PruneArgs& a, std::ostream& out, std::ostream& err) {
    auto loaded = io::load_bundle(a.bundle);
    for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
    const SceneBundle& bundle = loaded.bundle;
    io::ConfigEcho echo;
    PruneConfig& cfg = echo.config;
    cfg.alpha = a.alpha;
    cfg.delta = a.delta;
    cfg.k = a.k;
    cfg.strategy = parse_strategy(a.strategy);
    cfg.relevance = parse_relevance(a.relevance);
    cfg.seed = a.seed;
    if (a.self_term != "exclude" && a.self_term != "include") throw ValidationError("self-term must be exclude or include");
    cfg.self_term = a.self_term == "include" ? SelfTerm::include : SelfTerm::exclude;
    if (a.ratio) {
        cfg.budget = budget_from_ratio(bundle.token_count(), *a.ratio);
        echo.ratio = a.ratio;
    } else {
        cfg.budget = *a.budget;
    }
    const PruneResult result = prune(bundle, cfg);
    const VoxelMap before = voxelize_bundle(bundle, cfg.delta);
    const MetricsReport metrics = evaluate(before, result, bundle.grid);

    nlohmann::json doc = io::result_json(result, echo);
    doc["metrics"] = io::metrics_json(metrics);
    if (!a.out.empty()) io::write_text(a.out, doc.dump(1) + "\n");

    out << "strategy=" << to_string(cfg.strategy) << " alpha=" << cfg.alpha << " delta=" << cfg.delta
        << " k=" << cfg.k << " relevance=" << to_string(cfg.relevance);
    if (echo.ratio) out << " ratio=" << *echo.ratio;
    out << " budget=" << cfg.budget << "\n";
    out << "tokens=" << result.counts.total << " valid=" << result.counts.valid << " stage1=" << result.counts.stage1
        << " retained=" << result.counts.retained << " iterations=" << result.trace.size() << "\n";
    out << "coverage=" << metrics.coverage << " redundancy=" << metrics.redundancy
        << " budget_ratio=" << metrics.budget_ratio << "\n";
    return 0;
}

inline int run_gen(const GenArgs& a, std::ostream& out) {
    SceneSpec spec;
    spec.grid = {a.frames, a.rows, a.cols, a.patch};
    spec.ring_radius = a.radius;
    spec.ring_height = a.height;
    spec.fov = {a.fov, a.fov};
    spec.noise = a.noise;
    spec.coupling = a.coupling;
    spec.delta = a.delta;
    spec.feature_dim = a.feature_dim;
    spec.seed = a.seed;
    if (a.point) {
        // A 2 cm cube inside the voxel at the origin.
        spec.objects = {Box{Eigen::Vector3d::Constant(a.delta / 2.0), Eigen::Vector3d::Constant(a.delta / 5.0)}};
    } else {
        spec.objects = random_objects(a.objects, a.half_width, a.min_extent, a.max_extent, a.seed);
    }
    const SceneBundle bundle = generate(spec);
    io::write_bundle(bundle, a.out);
    out << "wrote " << a.out << " (N=" << bundle.token_count() << ", S=" << bundle.grid.frames << ")\n";
    return 0;
}

inline int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    auto loaded = io::load_bundle(a.bundle);
    for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
    const auto res = read_result(a.result);
    const VoxelMap before = voxelize_bundle(loaded.bundle, res.echo.config.delta);
    const MetricsReport metrics = evaluate(before, res.result, loaded.bundle.grid);
    const std::string text = io::metrics_json(metrics, res.echo).dump(1) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        io::write_text(a.out, text);
        out << "coverage=" << metrics.coverage << " redundancy=" << metrics.redundancy
            << " budget_ratio=" << metrics.budget_ratio << "\n";
    }
    return 0;
}

inline int run_export_ply(const PlyArgs& a, std::ostream& out, std::ostream& err) {
    auto loaded = io::load_bundle(a.bundle);
    for (const auto& w : loaded.warnings) err << "warning: " << w << "\n";
    const auto res = read_result(a.result);
    const double delta = res.echo.config.delta;
    const VoxelMap before = voxelize_bundle(loaded.bundle, delta);
    const auto [all, covered] = io::voxel_clouds(before, res.result.retained, delta);
    io::write_text(a.before, io::ply_text(all, "voxels before pruning"));
    io::write_text(a.after, io::ply_text(covered, "voxels after pruning"));
    out << "before=" << all.size() << " after=" << covered.size() << "\n";
    return 0;
}

}  // namespace detail

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Geometry-guided pruning of multi-view visual tokens", "geoprune"};
    app.require_subcommand(1);

    detail::PruneArgs prune_args;
    auto* prune_cmd = app.add_subcommand("prune", "Prune a scene bundle");
    prune_cmd->add_option("--bundle", prune_args.bundle, "Bundle directory")->required();
    prune_cmd->add_option("--strategy", prune_args.strategy, "geo3d|vcp_only|sdp_only|random_voxel|uniform_voxel|frame_topk");
    prune_cmd->add_option("--alpha", prune_args.alpha, "Fraction kept inside each voxel");
    prune_cmd->add_option("--delta", prune_args.delta, "Voxel size in meters");
    prune_cmd->add_option("--k", prune_args.k, "Voxels selected per iteration");
    auto* budget_opt = prune_cmd->add_option("--budget", prune_args.budget, "Tokens to retain");
    auto* ratio_opt = prune_cmd->add_option("--ratio", prune_args.ratio, "Fraction of tokens to prune");
    budget_opt->excludes(ratio_opt);
    ratio_opt->excludes(budget_opt);
    prune_cmd->add_option("--relevance", prune_args.relevance, "attention|cosine");
    prune_cmd->add_option("--self-term", prune_args.self_term, "exclude|include");
    prune_cmd->add_option("--seed", prune_args.seed, "Seed for random_voxel");
    prune_cmd->add_option("--out", prune_args.out, "Result file (JSON)");

    detail::GenArgs gen_args;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic scene bundle");
    gen_cmd->add_option("--out", gen_args.out, "Output bundle directory")->required();
    gen_cmd->add_option("--seed", gen_args.seed);
    gen_cmd->add_option("--objects", gen_args.objects, "Number of random boxes");
    gen_cmd->add_flag("--point", gen_args.point, "Single 2 cm object instead of random boxes");
    gen_cmd->add_option("--frames", gen_args.frames);
    gen_cmd->add_option("--rows", gen_args.rows);
    gen_cmd->add_option("--cols", gen_args.cols);
    gen_cmd->add_option("--patch", gen_args.patch);
    gen_cmd->add_option("--radius", gen_args.radius, "Camera ring radius (m)");
    gen_cmd->add_option("--height", gen_args.height, "Camera ring height (m)");
    gen_cmd->add_option("--fov", gen_args.fov, "Field of view (rad)");
    gen_cmd->add_option("--noise", gen_args.noise);
    gen_cmd->add_option("--coupling", gen_args.coupling);
    gen_cmd->add_option("--delta", gen_args.delta);
    gen_cmd->add_option("--feature-dim", gen_args.feature_dim);
    gen_cmd->add_option("--half-width", gen_args.half_width, "Half width of the object placement region (m)");
    gen_cmd->add_option("--min-extent", gen_args.min_extent);
    gen_cmd->add_option("--max-extent", gen_args.max_extent);

    detail::EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Coverage metrics for a prune result");
    eval_cmd->add_option("--bundle", eval_args.bundle)->required();
    eval_cmd->add_option("--result", eval_args.result)->required();
    eval_cmd->add_option("--out", eval_args.out);

    detail::PlyArgs ply_args;
    auto* ply_cmd = app.add_subcommand("export-ply", "Voxel clouds before/after pruning as ASCII PLY");
    ply_cmd->add_option("--bundle", ply_args.bundle)->required();
    ply_cmd->add_option("--result", ply_args.result)->required();
    ply_cmd->add_option("--before", ply_args.before)->required();
    ply_cmd->add_option("--after", ply_args.after)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (prune_cmd->parsed() && !prune_args.budget && !prune_args.ratio) {
            throw CLI::ValidationError("prune", "exactly one of --budget or --ratio is required");
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (prune_cmd->parsed()) return detail::run_prune(prune_args, out, err);
        if (gen_cmd->parsed()) return detail::run_gen(gen_args, out);
        if (eval_cmd->parsed()) return detail::run_eval(eval_args, out, err);
        if (ply_cmd->parsed()) return detail::run_export_ply(ply_args, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace geoprune::cli
