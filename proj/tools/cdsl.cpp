// cdsl: binary-segmentation training/evaluation toolkit.
//
// Subcommands: synth, train, cascade-train, eval, cv, predict, grad-check.
// Every experiment field can come from a JSON config (--config) and be
// overridden by a flag; flags win over the file, CDSL_SEED wins over the
// file's seed. Exit codes: 0 ok, 1 config/data error, 2 numeric failure.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cdsl/experiment.hpp"
#include "cdsl/gradcheck.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

struct Overrides {
    std::string config_path;
    std::string out_dir;
    std::string data_root;
    std::optional<int> synth_n, synth_size, input_size;
    std::optional<std::uint32_t> seed;
    std::optional<float> lr, momentum;
    std::optional<int> epochs, batch_size, k_folds, threads;
    std::optional<bool> use_dice, cascade;
    std::optional<double> early_stop;
    std::string scales, select_best;
};

void add_common(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "JSON config file");
    cmd->add_option("--out", ov.out_dir, "output directory");
    cmd->add_option("--data-root", ov.data_root, "dataset root (images/ + masks/)");
    cmd->add_option("--synth-n", ov.synth_n, "synthetic dataset size");
    cmd->add_option("--synth-size", ov.synth_size, "synthetic image side (divisible by 32)");
    cmd->add_option("--input-size", ov.input_size, "network input side (divisible by 32)");
    cmd->add_option("--seed", ov.seed, "experiment seed");
    cmd->add_option("--lr", ov.lr, "learning rate");
    cmd->add_option("--momentum", ov.momentum, "SGD momentum");
    cmd->add_option("--epochs", ov.epochs, "training epochs");
    cmd->add_option("--batch-size", ov.batch_size, "batch size (>= 2)");
    cmd->add_option("--k-folds", ov.k_folds, "cross-validation folds");
    cmd->add_option("--threads", ov.threads, "cap internal parallelism");
    cmd->add_option("--use-dice", ov.use_dice, "true: BCE-Dice loss, false: BCE only");
    cmd->add_option("--cascade", ov.cascade, "train the two-stage cascade");
    cmd->add_option("--early-stop-dice", ov.early_stop,
                    "stop when validation Dice reaches this value (0 = off)");
    cmd->add_option("--scales", ov.scales, "scale inputs, e.g. \"1/2,1/4\" or \"none\"");
    cmd->add_option("--select-best", ov.select_best, "last_epoch | best_val_dice");
}

cdsl::ExperimentConfig resolve(const Overrides& ov) {
    cdsl::ExperimentConfig cfg;
    if (!ov.config_path.empty()) cfg = cdsl::load_config_file(ov.config_path);
    if (const char* env = std::getenv("CDSL_SEED")) {
        cfg.seed = static_cast<std::uint32_t>(std::strtoul(env, nullptr, 10));
        cfg.train.seed = cfg.seed;
    }
    if (ov.seed) {
        cfg.seed = *ov.seed;
        cfg.train.seed = *ov.seed;
    }
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (!ov.data_root.empty()) {
        cfg.data.root = ov.data_root;
        cfg.data.synth.reset();
    }
    if (ov.synth_n || ov.synth_size) {
        cdsl::SynthSpec s = cfg.data.synth.value_or(cdsl::SynthSpec{});
        if (ov.synth_n) s.n = *ov.synth_n;
        if (ov.synth_size) s.size = *ov.synth_size;
        cfg.data.synth = s;
        cfg.data.root.clear();
    }
    if (ov.input_size) cfg.network.input_h = cfg.network.input_w = *ov.input_size;
    if (cfg.data.synth) cfg.network.input_h = cfg.network.input_w = cfg.data.synth->size;
    if (ov.lr) cfg.train.learning_rate = *ov.lr;
    if (ov.momentum) cfg.train.momentum = *ov.momentum;
    if (ov.epochs) cfg.train.epochs = *ov.epochs;
    if (ov.batch_size) cfg.train.batch_size = *ov.batch_size;
    if (ov.k_folds) cfg.k_folds = *ov.k_folds;
    if (ov.threads) cfg.threads = *ov.threads;
    if (ov.use_dice) cfg.train.use_dice_loss = *ov.use_dice;
    if (ov.cascade) cfg.cascade = *ov.cascade;
    if (ov.early_stop) cfg.train.early_stop_val_dice = *ov.early_stop;
    if (!ov.scales.empty()) {
        cfg.network.scale_inputs.clear();
        if (ov.scales != "none") {
            std::stringstream ss(ov.scales);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (tok == "1/2" || tok == "2")
                    cfg.network.scale_inputs.insert(2);
                else if (tok == "1/4" || tok == "4")
                    cfg.network.scale_inputs.insert(4);
                else if (tok == "1/8" || tok == "8")
                    cfg.network.scale_inputs.insert(8);
                else
                    throw cdsl::ConfigError("bad --scales token: " + tok);
            }
        }
    }
    if (!ov.select_best.empty()) {
        if (ov.select_best == "last_epoch")
            cfg.train.select_best_on = cdsl::SelectBest::last_epoch;
        else if (ov.select_best == "best_val_dice")
            cfg.train.select_best_on = cdsl::SelectBest::best_val_dice;
        else
            throw cdsl::ConfigError("bad --select-best value: " + ov.select_best);
    }
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
    return cfg;
}

int run_grad_check() {
    using namespace cdsl;
    struct Entry {
        std::string name;
        double err;
    };
    std::vector<Entry> results;
    auto single = [&](const std::string& name, auto build) {
        nn::Graph g;
        build(g);
        const GradCheckResult r = grad_check_graph(g, 42, 200);
        results.push_back({name, r.max_rel_err});
    };
    single("conv3x3_s2", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_conv("op", 0, 3, 2, 1, 4);
    });
    single("transposed_conv3x3_s2", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_tconv("op", 0, 3, 2, 1, 1, 4);
    });
    single("batch_norm", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_batch_norm("op", 0);
    });
    single("relu", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_relu("op", 0);
    });
    single("sigmoid", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_sigmoid("op", 0);
    });
    single("max_pool3x3_s2", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_max_pool("op", 0, 3, 2, 1);
    });
    single("add", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        const int c = g.add_conv("c", 0, 1, 1, 0, 3);
        g.add_add("op", 0, c);
    });
    single("concat", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        const int c = g.add_conv("c", 0, 1, 1, 0, 2);
        g.add_concat("op", 0, c);
    });
    single("bilinear_resize", [](nn::Graph& g) {
        g.add_input(3, 8, 8);
        g.add_bilinear_resize("op", 0, 0.5);
    });
    single("res_block", [](nn::Graph& g) {
        g.add_input(4, 8, 8);
        nn::append_res_block(g, 0, 8, 2, "rb");
    });
    single("decode_block", [](nn::Graph& g) {
        g.add_input(8, 4, 4);
        nn::append_decode_block(g, 0, 4, 2, "db");
    });
    {
        nn::NetworkConfig cfg;
        cfg.base_channels = 8;
        cfg.encoder_channels = {8, 16, 24, 32};
        cfg.scale_inputs = {2};
        cfg.input_h = cfg.input_w = 32;
        const nn::NetworkGraph net = nn::build_network(cfg);
        for (const std::uint32_t seed : {2024u, 101u, 555u}) {
            const GradCheckResult r = grad_check_graph(net.graph, seed, 3, 4);
            results.push_back({"full_dsln_32x32/s" + std::to_string(seed), r.max_rel_err});
        }
    }
    {
        const GradCheckResult r = grad_check_loss(Shape4{2, 1, 8, 8}, 42, true);
        results.push_back({"combined_loss", r.max_rel_err});
    }

    bool ok = true;
    for (const auto& e : results) {
        const bool pass = e.err < 1e-4;
        ok = ok && pass;
        std::printf("%-24s max rel err %.3e  %s\n", e.name.c_str(), e.err,
                    pass ? "ok" : "FAIL");
    }
    return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cascaded dual-scale LinkNet segmentation toolkit"};
    app.require_subcommand(1);

    Overrides ov;
    std::string model_path, image_path, out_prefix;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic PNG dataset");
    add_common(synth, ov);
    CLI::App* train_cmd = app.add_subcommand("train", "train a single network");
    add_common(train_cmd, ov);
    CLI::App* cascade_cmd = app.add_subcommand("cascade-train", "train the two-stage cascade");
    add_common(cascade_cmd, ov);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on a dataset");
    add_common(eval_cmd, ov);
    eval_cmd->add_option("--model", model_path, "model.json manifest")->required();
    CLI::App* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    add_common(cv_cmd, ov);
    CLI::App* predict_cmd = app.add_subcommand("predict", "segment one image");
    add_common(predict_cmd, ov);
    predict_cmd->add_option("--model", model_path, "model.json manifest")->required();
    predict_cmd->add_option("--image", image_path, "input PNG (8-bit grayscale)")->required();
    predict_cmd->add_option("--out-prefix", out_prefix, "output path prefix")->required();
    CLI::App* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gc_cmd->parsed()) return run_grad_check();
        cdsl::ExperimentConfig cfg = resolve(ov);
        if (synth->parsed()) {
            const auto samples = cdsl::synth_dataset(
                cfg.data.synth ? cfg.data.synth->n : 16,
                cfg.data.synth ? cfg.data.synth->size : 64, cdsl::derive_seed(cfg.seed, 0xda7a));
            cdsl::save_dataset(cfg.out_dir, samples);
            std::cout << "wrote " << samples.size() << " samples to " << cfg.out_dir << "\n";
        } else if (train_cmd->parsed() || cascade_cmd->parsed()) {
            if (cascade_cmd->parsed()) cfg.cascade = true;
            const auto outputs = cdsl::run_train(cfg);
            std::cout << "model: " << outputs.model_manifest << "\n"
                      << "train dice " << outputs.train_report.mean_dice << ", val dice "
                      << outputs.val_report.mean_dice << "\n";
        } else if (eval_cmd->parsed()) {
            const auto report = cdsl::run_eval(model_path, cfg);
            std::cout << "dice " << report.mean_dice << ", mean IoU " << report.mean_mean_iou
                      << " over " << report.per_image.size() << " images\n";
        } else if (cv_cmd->parsed()) {
            const auto report = cdsl::run_cv(cfg);
            std::cout << "cv mean dice " << report.mean_dice << ", mean IoU "
                      << report.mean_miou << "\n";
        } else if (predict_cmd->parsed()) {
            cdsl::run_predict(model_path, image_path, out_prefix);
            std::cout << "wrote " << out_prefix << "_prob.png and " << out_prefix
                      << "_mask.png\n";
        }
    } catch (const cdsl::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
