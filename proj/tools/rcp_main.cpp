// Command-line front end: scene-flow estimation, rigid registration,
// synthetic data generation, metric evaluation, and benchmark sweeps.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rcp/rcp.hpp"

namespace {

using rcp::io::detail::fmt;

void print_flow_metrics(const rcp::FlowMetrics& m) {
    std::printf("epe3d=%s\n", fmt(m.epe3d).c_str());
    std::printf("acc3ds=%s\n", fmt(m.acc3ds).c_str());
    std::printf("acc3dr=%s\n", fmt(m.acc3dr).c_str());
    std::printf("outliers3d=%s\n", fmt(m.outliers3d).c_str());
}

void print_reg_metrics(const rcp::RegMetrics& m) {
    std::printf("error_r=%s\n", fmt(m.error_r).c_str());
    std::printf("error_t=%s\n", fmt(m.error_t).c_str());
    std::printf("mae_r=%s\n", fmt(m.mae_r).c_str());
    std::printf("mae_t=%s\n", fmt(m.mae_t).c_str());
}

/// --config plus one override flag per configuration key.
struct ConfigCli {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> values;
    std::vector<CLI::Option*> options;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value configuration file");
        const auto& keys = rcp::RunConfig::known_keys();
        values.reserve(keys.size());
        options.reserve(keys.size());
        for (const auto& kd : keys) {
            values.emplace_back(kd.key, std::string{});
            options.push_back(
                cmd->add_option("--" + std::string(kd.key), values.back().second, kd.doc));
        }
    }

    rcp::RunConfig build() const {
        rcp::RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (std::size_t i = 0; i < options.size(); ++i)
            if (options[i]->count() > 0) cfg.set(values[i].first, values[i].second);
        cfg.finalize();
        return cfg;
    }
};

struct FlowArgs {
    std::string src, dst, out, gt, trace;
    ConfigCli config;
};

void run_flow(const FlowArgs& args) {
    rcp::RunConfig cfg = args.config.build();
    cfg.solver.trace = !args.trace.empty();

    const rcp::PointCloud p = rcp::io::read_ply(args.src);
    const rcp::PointCloud q = rcp::io::read_ply(args.dst);
    std::optional<rcp::FlowField> gt;
    if (!args.gt.empty()) gt = rcp::io::read_flow_csv(args.gt);

    auto [flow, trace] = rcp::run_scene_flow(p, q, cfg.solver, gt);
    rcp::io::write_flow_csv(args.out, flow);
    if (!args.trace.empty()) rcp::io::write_trace_csv(args.trace, trace);
    if (gt) print_flow_metrics(rcp::flow_metrics(flow, *gt));
}

struct RegisterArgs {
    std::string src, dst, out, gt, trace;
    ConfigCli config;
};

void run_register(const RegisterArgs& args) {
    rcp::RunConfig cfg = args.config.build();
    cfg.solver.trace = !args.trace.empty();

    const rcp::PointCloud p = rcp::io::read_ply(args.src);
    const rcp::PointCloud q = rcp::io::read_ply(args.dst);
    std::optional<rcp::RigidMotion> gt;
    if (!args.gt.empty()) gt = rcp::io::read_motion_json(args.gt);

    auto [motion, trace] = rcp::run_registration(p, q, cfg.solver, gt);
    rcp::io::write_motion_json(args.out, motion);
    if (!args.trace.empty()) rcp::io::write_trace_csv(args.trace, trace);
    if (gt) print_reg_metrics(rcp::reg_metrics(motion, *gt));
}

struct SynthArgs {
    std::string input, out_dir;
    int blobs = 0;
    int points = 128;
    ConfigCli config;
};

void run_synth(const SynthArgs& args) {
    if (args.input.empty() == (args.blobs == 0))
        throw rcp::InvalidInput("synth requires exactly one of --input or --blobs");
    rcp::RunConfig cfg = args.config.build();

    std::filesystem::create_directories(args.out_dir);
    const auto path = [&](const char* name) {
        return (std::filesystem::path(args.out_dir) / name).string();
    };

    if (!args.input.empty()) {
        const rcp::PointCloud source = rcp::io::read_ply(args.input);
        const rcp::io::SynthPair pair = rcp::io::synth_pair(source, cfg.pair);
        rcp::io::write_ply(path("src.ply"), pair.p);
        rcp::io::write_ply(path("dst.ply"), pair.q);
        rcp::io::write_motion_json(path("gt_motion.json"), pair.gt_motion);
        rcp::io::write_flow_csv(path("gt_flow.csv"), pair.gt_flow);
    } else {
        const rcp::io::SynthScene scene =
            rcp::io::synth_scene_flow_scene(args.blobs, args.points, cfg.pair, cfg.pair.seed);
        rcp::io::write_ply(path("src.ply"), scene.p);
        rcp::io::write_ply(path("dst.ply"), scene.q);
        rcp::io::write_flow_csv(path("gt_flow.csv"), scene.gt_flow);
    }
}

struct EvalArgs {
    std::string pred, gt, task;
};

void run_eval(const EvalArgs& args) {
    if (args.task == "flow") {
        const rcp::FlowField pred = rcp::io::read_flow_csv(args.pred);
        const rcp::FlowField gt = rcp::io::read_flow_csv(args.gt);
        print_flow_metrics(rcp::flow_metrics(pred, gt));
    } else if (args.task == "register") {
        const rcp::RigidMotion pred = rcp::io::read_motion_json(args.pred);
        const rcp::RigidMotion gt = rcp::io::read_motion_json(args.gt);
        print_reg_metrics(rcp::reg_metrics(pred, gt));
    } else {
        throw rcp::InvalidInput("--task must be flow or register");
    }
}

// ---------------------------------------------------------------------------
// bench: a manifest of seeded synthetic cases crossed with configurations
// ---------------------------------------------------------------------------

struct BenchCase {
    std::string name;
    std::string kind = "pair";   // pair | scene
    std::string task;            // flow | register; defaults by kind
    std::string source;          // optional PLY for pair sources
    int points = 256;
    int objects = 2;
    rcp::io::PairSpec spec;
};

struct BenchConfig {
    std::string name;
    std::vector<std::pair<std::string, std::string>> settings;
};

struct BenchSuite {
    std::vector<BenchCase> cases;
    std::vector<BenchConfig> configs;
};

BenchSuite parse_suite(const std::string& path) {
    auto in = rcp::io::detail::open_in(path);
    BenchSuite suite;
    std::string line;
    std::size_t line_no = 0;
    enum class Section { None, Case, Config } section = Section::None;

    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = rcp::detail::trim(line);
        if (trimmed.empty()) continue;
        if (trimmed == "[case]") {
            suite.cases.emplace_back();
            section = Section::Case;
            continue;
        }
        if (trimmed == "[config]") {
            suite.configs.emplace_back();
            section = Section::Config;
            continue;
        }
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos || section == Section::None)
            throw rcp::ParseError("expected [case], [config], or key = value in " + path,
                                  line_no);
        const std::string key = rcp::detail::trim(trimmed.substr(0, eq));
        const std::string value = rcp::detail::trim(trimmed.substr(eq + 1));
        if (key.empty() || value.empty())
            throw rcp::ParseError("expected key = value in " + path, line_no);

        try {
            if (section == Section::Case) {
                BenchCase& c = suite.cases.back();
                if (key == "name")
                    c.name = value;
                else if (key == "kind") {
                    if (value != "pair" && value != "scene")
                        throw rcp::ParseError("kind must be pair or scene: " + value);
                    c.kind = value;
                } else if (key == "task") {
                    if (value != "flow" && value != "register")
                        throw rcp::ParseError("task must be flow or register: " + value);
                    c.task = value;
                } else if (key == "source")
                    c.source = value;
                else if (key == "points")
                    c.points = static_cast<int>(rcp::detail::parse_int(value, key));
                else if (key == "objects")
                    c.objects = static_cast<int>(rcp::detail::parse_int(value, key));
                else if (key == "seed")
                    c.spec.seed =
                        static_cast<std::uint64_t>(rcp::detail::parse_int(value, key));
                else if (key == "rot_min_deg")
                    c.spec.rot_min_deg = rcp::detail::parse_double(value, key);
                else if (key == "rot_max_deg")
                    c.spec.rot_max_deg = rcp::detail::parse_double(value, key);
                else if (key == "trans_min")
                    c.spec.trans_min = rcp::detail::parse_double(value, key);
                else if (key == "trans_max")
                    c.spec.trans_max = rcp::detail::parse_double(value, key);
                else if (key == "partial_fraction")
                    c.spec.partial_fraction = rcp::detail::parse_double(value, key);
                else if (key == "noise_sigma")
                    c.spec.noise_sigma = rcp::detail::parse_double(value, key);
                else
                    throw rcp::ParseError("unknown case key '" + key + "'");
            } else {
                BenchConfig& c = suite.configs.back();
                if (key == "name") {
                    c.name = value;
                } else {
                    rcp::RunConfig probe;  // reject unknown keys and bad values early
                    probe.set(key, value);
                    c.settings.emplace_back(key, value);
                }
            }
        } catch (const rcp::ParseError& e) {
            throw rcp::ParseError(std::string(e.what()) + " in " + path, line_no);
        }
    }
    return suite;
}

struct BenchArgs {
    std::string suite, out;
};

void run_bench(const BenchArgs& args) {
    const BenchSuite suite = parse_suite(args.suite);

    std::vector<BenchConfig> configs = suite.configs;
    if (configs.empty() && !suite.cases.empty()) configs.push_back(BenchConfig{"default", {}});

    std::string report =
        "case,config,task,epe3d,acc3ds,acc3dr,outliers3d,error_r,error_t,mae_r,mae_t,millis\n";

    for (std::size_t ci = 0; ci < suite.cases.size(); ++ci) {
        const BenchCase& c = suite.cases[ci];
        const std::string case_name = c.name.empty() ? "case" + std::to_string(ci) : c.name;
        const std::string task = !c.task.empty() ? c.task : (c.kind == "pair" ? "register" : "flow");

        // Inputs are built once per case and shared across configurations.
        rcp::PointCloud p, q;
        std::optional<rcp::RigidMotion> gt_motion;
        std::optional<rcp::FlowField> gt_flow;
        if (c.kind == "pair") {
            const rcp::PointCloud source =
                !c.source.empty() ? rcp::io::read_ply(c.source)
                                  : rcp::io::make_surface_cloud(c.points, c.spec.seed ^ 0x5eedULL);
            rcp::io::SynthPair pair = rcp::io::synth_pair(source, c.spec);
            p = std::move(pair.p);
            q = std::move(pair.q);
            gt_motion = pair.gt_motion;
            gt_flow = std::move(pair.gt_flow);
        } else {
            rcp::io::SynthScene scene =
                rcp::io::synth_scene_flow_scene(c.objects, c.points, c.spec, c.spec.seed);
            p = std::move(scene.p);
            q = std::move(scene.q);
            gt_flow = std::move(scene.gt_flow);
        }

        for (const BenchConfig& bc : configs) {
            rcp::RunConfig run;
            for (const auto& [key, value] : bc.settings) run.set(key, value);
            run.finalize();
            run.solver.trace = false;

            const auto start = std::chrono::steady_clock::now();
            std::string flow_cols = ",,,";
            std::string reg_cols = ",,,";
            if (task == "flow") {
                auto [flow, trace] = rcp::run_scene_flow(p, q, run.solver, gt_flow);
                const rcp::FlowMetrics m = rcp::flow_metrics(flow, *gt_flow);
                flow_cols = fmt(m.epe3d) + ',' + fmt(m.acc3ds) + ',' + fmt(m.acc3dr) + ',' +
                            fmt(m.outliers3d);
            } else {
                if (!gt_motion)
                    throw rcp::InvalidInput("case '" + case_name +
                                            "' asks for registration without a rigid ground truth");
                auto [motion, trace] = rcp::run_registration(p, q, run.solver, gt_motion);
                const rcp::RegMetrics m = rcp::reg_metrics(motion, *gt_motion);
                reg_cols = fmt(m.error_r) + ',' + fmt(m.error_t) + ',' + fmt(m.mae_r) + ',' +
                           fmt(m.mae_t);
            }
            const double millis = std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - start)
                                      .count();
            report += case_name + ',' + (bc.name.empty() ? "config" : bc.name) + ',' + task +
                      ',' + flow_cols + ',' + reg_cols + ',' + fmt(millis, "%.3f") + '\n';
        }
    }
    rcp::io::detail::open_out(args.out) << report;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-cloud motion estimation: per-point scene flow or a rigid SE(3) "
                 "transform, via alternating point-wise optimization and regularization"};
    app.require_subcommand(1);

    FlowArgs flow_args;
    CLI::App* flow_cmd = app.add_subcommand("flow", "estimate per-point scene flow");
    flow_cmd->add_option("--src", flow_args.src, "source cloud (PLY)")->required();
    flow_cmd->add_option("--dst", flow_args.dst, "target cloud (PLY)")->required();
    flow_cmd->add_option("--out", flow_args.out, "output flow CSV")->required();
    flow_cmd->add_option("--gt", flow_args.gt, "ground-truth flow CSV (prints metrics)");
    flow_cmd->add_option("--trace", flow_args.trace, "per-iteration trace CSV");
    flow_args.config.attach(flow_cmd);

    RegisterArgs reg_args;
    CLI::App* reg_cmd = app.add_subcommand("register", "estimate a rigid transform");
    reg_cmd->add_option("--src", reg_args.src, "source cloud (PLY)")->required();
    reg_cmd->add_option("--dst", reg_args.dst, "target cloud (PLY)")->required();
    reg_cmd->add_option("--out", reg_args.out, "output motion JSON")->required();
    reg_cmd->add_option("--gt", reg_args.gt, "ground-truth motion JSON (prints metrics)");
    reg_cmd->add_option("--trace", reg_args.trace, "per-iteration trace CSV");
    reg_args.config.attach(reg_cmd);

    SynthArgs synth_args;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic pair or scene");
    synth_cmd->add_option("--input", synth_args.input, "source cloud (PLY) for a rigid pair");
    synth_cmd->add_option("--blobs", synth_args.blobs,
                          "number of objects for a piecewise-rigid scene");
    synth_cmd->add_option("--points", synth_args.points, "points per object (default 128)");
    synth_cmd->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
    synth_args.config.attach(synth_cmd);

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a prediction against ground truth");
    eval_cmd->add_option("--pred", eval_args.pred, "predicted flow CSV or motion JSON")
        ->required();
    eval_cmd->add_option("--gt", eval_args.gt, "ground-truth flow CSV or motion JSON")
        ->required();
    eval_cmd->add_option("--task", eval_args.task, "flow | register")->required();

    BenchArgs bench_args;
    CLI::App* bench_cmd = app.add_subcommand("bench", "run a suite of seeded synthetic cases");
    bench_cmd->add_option("--suite", bench_args.suite, "suite manifest")->required();
    bench_cmd->add_option("--out", bench_args.out, "report CSV")->required();

    try {
        app.parse(argc, argv);
        if (flow_cmd->parsed()) run_flow(flow_args);
        if (reg_cmd->parsed()) run_register(reg_args);
        if (synth_cmd->parsed()) run_synth(synth_args);
        if (eval_cmd->parsed()) run_eval(eval_args);
        if (bench_cmd->parsed()) run_bench(bench_args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const rcp::NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const rcp::DegenerateFit& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const rcp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
