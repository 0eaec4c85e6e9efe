#include "scanfer/commands.hpp"

#include "scanfer/checkpoint.hpp"
#include "scanfer/config.hpp"
#include "scanfer/errors.hpp"
#include "scanfer/explain.hpp"
#include "scanfer/gradcheck.hpp"

#include <fstream>

namespace scanfer {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, Bytes(text.begin(), text.end()));
}

DatasetManifest prepare_manifest(const RunConfig& c, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("manifest not found: '" + path.string() + "'");
    DatasetManifest m = load_manifest(path);
    if (m.records.empty()) throw std::runtime_error("manifest '" + path.string() + "' has no records");
    switch (c.rebalance) {
        case RebalanceChoice::none: return m;
        case RebalanceChoice::oversample: return rebalance(m, RebalanceMode::oversample, c.rebalance_cap, c.seed);
        case RebalanceChoice::undersample: return rebalance(m, RebalanceMode::undersample, c.rebalance_cap, c.seed);
    }
    return m;
}

}  // namespace

int cmd_train(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed, std::ostream& out,
              std::ostream& err) {
    try {
        RunConfig cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (cfg.train_manifest.empty()) throw std::runtime_error("config does not set train_manifest");
        const ImageSet train = load_images(prepare_manifest(cfg, cfg.train_manifest), cfg.model.backbone.input_size);
        ImageSet val;
        if (!cfg.val_manifest.empty()) {
            if (!std::filesystem::exists(cfg.val_manifest))
                throw std::runtime_error("manifest not found: '" + cfg.val_manifest.string() + "'");
            val = load_images(load_manifest(cfg.val_manifest), cfg.model.backbone.input_size);
        }
        std::filesystem::create_directories(cfg.out_dir);

        FerModel model = FerModel::create(cfg.model, cfg.seed);
        const FitOptions opts = cfg.fit_options();

        std::ofstream history(cfg.out_dir / "history.tsv", std::ios::binary);
        if (!history) throw std::runtime_error("cannot write history in '" + cfg.out_dir.string() + "'");
        const FitResult result = fit(model, train, val, opts, [&](const EpochRecord& rec) {
            history << format_history_line(rec) << '\n';
            history.flush();
            out << "epoch " << rec.epoch << "  L=" << rec.stats.loss << "  train_acc=" << rec.stats.train_acc
                << "  val_overall=" << rec.val.overall << '\n';
        });
        history.close();

        Rng::State rng_state = Rng(cfg.seed).state();
        save_checkpoint(cfg.out_dir / "best.ckpt", make_checkpoint(model, cfg, rng_state, &result.state));
        const EvalReport train_report = evaluate(model, train);
        write_text(cfg.out_dir / "report_train.txt", format_report(train_report));
        const EvalReport val_report = val.size() ? evaluate(model, val) : train_report;
        write_text(cfg.out_dir / "report_val.txt", format_report(val_report));
        out << "best epoch " << result.best_epoch << "  overall=" << val_report.overall
            << "  macro_f1=" << val_report.macro_f1 << "  accuracy=" << val_report.accuracy << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "train: " << e.what() << '\n';
        return 1;
    }
}

int cmd_eval(const std::filesystem::path& ckpt_path, const std::filesystem::path& manifest_path,
             const std::filesystem::path& report_path, std::ostream& out, std::ostream& err) {
    try {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        FerModel model = model_from_checkpoint(ckpt);
        if (!std::filesystem::exists(manifest_path))
            throw std::runtime_error("manifest not found: '" + manifest_path.string() + "'");
        const ImageSet data = load_images(load_manifest(manifest_path), ckpt.config.model.backbone.input_size);
        const EvalReport report = evaluate(model, data);
        const std::string text = format_report(report);
        out << text;
        write_text(report_path.empty() ? ckpt_path.parent_path() / "eval_report.txt" : report_path, text);
        return 0;
    } catch (const std::exception& e) {
        err << "eval: " << e.what() << '\n';
        return 1;
    }
}

int cmd_gradcam(const std::filesystem::path& ckpt_path, const std::filesystem::path& image_path,
                std::optional<int> target_class, const std::filesystem::path& out_dir, std::ostream& out,
                std::ostream& err) {
    try {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        FerModel model = model_from_checkpoint(ckpt);
        const Tensor image = resize_bilinear(decode_ppm(read_file(image_path)), ckpt.config.model.backbone.input_size);
        const int predicted = model.predict(image);
        const int target = target_class.value_or(predicted);
        const Heatmap map = gradcam(model, image, target);

        const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(".") : out_dir;
        std::filesystem::create_directories(dir);
        const std::string stem = image_path.stem().string() + "_gradcam_c" + std::to_string(target);
        write_file(dir / (stem + ".pgm"), render_heatmap(map));
        write_file(dir / (stem + "_overlay.ppm"), render_overlay(map, image));
        out << "predicted " << predicted << " (" << expression_name(predicted) << ")\n";
        out << "heatmap for class " << target << " (" << expression_name(target) << "): "
            << (dir / (stem + ".pgm")).string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "gradcam: " << e.what() << '\n';
        return 1;
    }
}

int cmd_synth_data(const std::filesystem::path& out_dir, long per_class, std::uint64_t seed, long size,
                   std::ostream& out, std::ostream& err) {
    try {
        const DatasetManifest m = synth_dataset(out_dir, per_class, size, seed);
        out << "wrote " << m.records.size() << " images and " << (out_dir / "manifest.csv").string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "synth-data: " << e.what() << '\n';
        return 1;
    }
}

int cmd_check_grad(const std::optional<std::filesystem::path>& config_path, std::optional<std::uint64_t> seed,
                   std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = config_path ? load_config(*config_path) : RunConfig{};
        if (seed) cfg.seed = *seed;
        FerModel model = FerModel::create(cfg.model, cfg.seed);
        Rng rng(cfg.seed);
        const Index s = cfg.model.backbone.input_size;
        ImageSet batch;
        for (int label : {2, 5}) {
            batch.images.push_back(synth_image(label, s, rng));
            batch.labels.push_back(label);
        }
        const std::vector<std::size_t> idx{0, 1};
        const Tensor images = batch.batch(idx);
        auto loss = [&] { return model.forward(images, batch.labels, Mode::train).loss->total; };

        std::vector<NamedVariable> params;
        for (const auto& p : model.parameters()) params.push_back({p.name, p.var});
        const auto report = check_parameters(loss, params, 1e-5, 16, cfg.seed);
        double worst = 0.0;
        for (const auto& r : report) {
            out << r.name << "\tchecked=" << r.checked << "\tmax_rel_error=" << r.max_rel_error;
            if (r.refined) out << "\trefined=" << r.refined;
            if (r.skipped) out << "\tskipped=" << r.skipped;
            out << '\n';
            worst = std::max(worst, r.max_rel_error);
        }
        out << "max relative error " << worst << (worst < 1e-4 ? " (pass)" : " (FAIL)") << '\n';
        return worst < 1e-4 ? 0 : 1;
    } catch (const std::exception& e) {
        err << "check-grad: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace scanfer
