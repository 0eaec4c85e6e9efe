#include "scanfer/commands.hpp"
#include "scanfer/ops.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Two-branch attention facial expression classifier"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "Train a model from a config file");
    std::optional<std::uint64_t> seed_override;
    train->add_option("--config", config_path, "Run configuration (key = value lines)")->required();
    train->add_option("--seed", seed_override, "Override the config seed");

    std::string ckpt, manifest, report;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a manifest");
    eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    eval->add_option("--manifest", manifest, "Manifest of path,label lines")->required();
    eval->add_option("--out", report, "Report file (default: eval_report.txt next to the checkpoint)");
    eval->add_option("--seed", seed_override, "Accepted for uniformity; evaluation draws no random numbers");

    std::string image, out_dir;
    std::optional<int> target;
    auto* cam = app.add_subcommand("gradcam", "Write Grad-CAM heatmap and overlay for one image");
    cam->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    cam->add_option("--image", image, "Binary PPM image")->required();
    cam->add_option("--class", target, "Target class 0-6 (default: predicted)")->check(CLI::Range(0, 6));
    cam->add_option("--out", out_dir, "Output directory (default: current directory)");
    cam->add_option("--seed", seed_override, "Accepted for uniformity; Grad-CAM draws no random numbers");

    std::string synth_out;
    long per_class = 10, size = 40;
    std::uint64_t seed = 1;
    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic 7-class dataset");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--per-class", per_class, "Images per class")->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("--size", size, "Image side length")->check(CLI::PositiveNumber);

    std::optional<std::string> grad_config;
    bool corrupt = false;
    auto* grad = app.add_subcommand("check-grad", "Finite-difference audit of the full model gradient");
    grad->add_option("--config", grad_config, "Run configuration");
    grad->add_option("--seed", seed_override, "Override the config seed");
    grad->add_flag("--corrupt-backward", corrupt, "Deliberately break one backward rule (negative control)");

    CLI11_PARSE(app, argc, argv);

    if (*train) return scanfer::cmd_train(config_path, seed_override, std::cout, std::cerr);
    if (*eval) return scanfer::cmd_eval(ckpt, manifest, report, std::cout, std::cerr);
    if (*cam) return scanfer::cmd_gradcam(ckpt, image, target, out_dir, std::cout, std::cerr);
    if (*synth) return scanfer::cmd_synth_data(synth_out, per_class, seed, size, std::cout, std::cerr);
    if (*grad) {
        scanfer::testing_hooks::set_corrupt_backward(corrupt);
        std::optional<std::filesystem::path> path;
        if (grad_config) path = *grad_config;
        return scanfer::cmd_check_grad(path, seed_override, std::cout, std::cerr);
    }
    return 0;
}
