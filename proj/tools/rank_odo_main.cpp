// rank-odo: synthetic-flow visual odometry via ranked contrastive learning.
//
// Subcommands: gen, train, eval, latent, scale-sweep. Every run is a pure
// function of (config file, input files); all randomness comes from seeds in
// the config. Exit codes: 0 success, 1 usage/IO error, 2 numerical failure.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rankodo/cli.hpp"

namespace {

int parse_dof(const std::string& text) {
    if (text == "all") return -1;
    for (int d = 0; d < 6; ++d)
        if (text == rankodo::pose::kDofNames[static_cast<std::size_t>(d)]) return d;
    try {
        const int d = std::stoi(text);
        if (d >= 0 && d < 6) return d;
    } catch (const std::exception&) {
    }
    throw CLI::ValidationError("--dof", "expected 0..5, a dof name, or \"all\"");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ranked contrastive visual odometry on synthetic optical flow"};
    app.require_subcommand(1);

    std::string config_path;
    std::string dof_text = "all";
    std::string out_dir;
    std::string gt_poses, pred_poses;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "override the command's output directory");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate synthetic flow datasets");
    add_common(gen);

    CLI::App* train = app.add_subcommand("train", "train per-DoF encoder-decoder models");
    add_common(train);
    train->add_option("--dof", dof_text, "DoF to train (0..5, name, or \"all\")");

    CLI::App* eval_cmd = app.add_subcommand("eval", "correlation and drift reports");
    add_common(eval_cmd);
    eval_cmd->add_option("--gt-poses", gt_poses, "KITTI pose file (ground truth)");
    eval_cmd->add_option("--pred-poses", pred_poses, "KITTI pose file (predictions)");

    CLI::App* latent = app.add_subcommand("latent", "dump latent features to CSV");
    add_common(latent);
    latent->add_option("--dof", dof_text, "DoF checkpoint to dump");

    CLI::App* sweep = app.add_subcommand("scale-sweep", "train on data fractions 0.2..1.0");
    add_common(sweep);
    sweep->add_option("--dof", dof_text, "DoF whose correlation is reported");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        rankodo::cli::RunConfig config = rankodo::cli::load_config(config_path);
        if (!out_dir.empty()) {
            const auto out = std::filesystem::absolute(out_dir);
            if (gen->parsed()) config.paths.dataset_dir = out;
            if (train->parsed()) config.paths.checkpoint_dir = out;
            if (eval_cmd->parsed() || latent->parsed() || sweep->parsed())
                config.paths.report_dir = out;
        }

        if (gen->parsed()) return rankodo::cli::cmd_gen(config);
        if (train->parsed()) return rankodo::cli::cmd_train(config, parse_dof(dof_text));
        if (eval_cmd->parsed()) {
            std::optional<std::filesystem::path> gt, pred;
            if (!gt_poses.empty()) gt = gt_poses;
            if (!pred_poses.empty()) pred = pred_poses;
            return rankodo::cli::cmd_eval(config, gt, pred);
        }
        if (latent->parsed()) {
            const int d = dof_text == "all" ? 2 : parse_dof(dof_text);
            return rankodo::cli::cmd_latent(config, d);
        }
        if (sweep->parsed()) {
            const int d = dof_text == "all" ? 2 : parse_dof(dof_text);
            return rankodo::cli::cmd_scale_sweep(config, d);
        }
    } catch (const rankodo::net::NonFiniteLossError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const rankodo::synth::DegenerateGeometryError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
