#include "cdsl/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cdsl/checkpoint.hpp"
#include "cdsl/eval.hpp"
#include "cdsl/png_io.hpp"

namespace fs = std::filesystem;

namespace cdsl {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

std::string select_to_string(SelectBest s) {
    return s == SelectBest::last_epoch ? "last_epoch" : "best_val_dice";
}

SelectBest select_from_string(const std::string& s) {
    if (s == "last_epoch") return SelectBest::last_epoch;
    if (s == "best_val_dice") return SelectBest::best_val_dice;
    throw ConfigError("config: unknown select_best_on value: " + s);
}

} // namespace

void ExperimentConfig::validate() const {
    network.validate();
    train.validate();
    if (k_folds < 2) throw ConfigError("config: k_folds must be >= 2");
    if (data.root.empty() && !data.synth)
        throw ConfigError("config: either data.root or data.synth required");
    if (!data.root.empty() && data.synth)
        throw ConfigError("config: data.root and data.synth are mutually exclusive");
    if (threads < 0) throw ConfigError("config: threads must be >= 0");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.contains("root") && !d.at("root").get<std::string>().empty()) {
            cfg.data.root = d.at("root").get<std::string>();
            cfg.data.synth.reset();
        }
        if (d.contains("synth")) {
            SynthSpec s;
            s.n = d.at("synth").value("n", s.n);
            s.size = d.at("synth").value("size", s.size);
            cfg.data.synth = s;
            cfg.data.root.clear();
        }
    }
    if (j.contains("network")) {
        const auto& n = j.at("network");
        cfg.network.in_channels = n.value("in_channels", cfg.network.in_channels);
        cfg.network.base_channels = n.value("base_channels", cfg.network.base_channels);
        if (n.contains("encoder_channels"))
            cfg.network.encoder_channels = n.at("encoder_channels").get<std::vector<int>>();
        if (n.contains("scale_inputs")) {
            cfg.network.scale_inputs.clear();
            for (const auto& v : n.at("scale_inputs")) {
                if (v.is_string()) {
                    const std::string s = v.get<std::string>();
                    if (s == "1/2")
                        cfg.network.scale_inputs.insert(2);
                    else if (s == "1/4")
                        cfg.network.scale_inputs.insert(4);
                    else if (s == "1/8")
                        cfg.network.scale_inputs.insert(8);
                    else
                        throw ConfigError("config: bad scale input: " + s);
                } else {
                    cfg.network.scale_inputs.insert(v.get<int>());
                }
            }
        }
        if (n.contains("input_size")) {
            const auto& sz = n.at("input_size");
            cfg.network.input_h = sz.at(0).get<int>();
            cfg.network.input_w = sz.at(1).get<int>();
        }
        cfg.network.classes = n.value("classes", cfg.network.classes);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.momentum = t.value("momentum", cfg.train.momentum);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.use_dice_loss = t.value("use_dice_loss", cfg.train.use_dice_loss);
        cfg.train.early_stop_val_dice =
            t.value("early_stop_val_dice", cfg.train.early_stop_val_dice);
        if (t.contains("select_best_on"))
            cfg.train.select_best_on = select_from_string(t.at("select_best_on"));
    }
    cfg.cascade = j.value("cascade", cfg.cascade);
    cfg.k_folds = j.value("k_folds", cfg.k_folds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.train.seed = cfg.seed; // the experiment seed drives everything
    return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    if (!cfg.data.root.empty()) j["data"]["root"] = cfg.data.root;
    if (cfg.data.synth)
        j["data"]["synth"] = {{"n", cfg.data.synth->n}, {"size", cfg.data.synth->size}};
    std::vector<std::string> scales;
    for (int d : cfg.network.scale_inputs) scales.push_back("1/" + std::to_string(d));
    j["network"] = {{"in_channels", cfg.network.in_channels},
                    {"base_channels", cfg.network.base_channels},
                    {"encoder_channels", cfg.network.encoder_channels},
                    {"scale_inputs", scales},
                    {"input_size", {cfg.network.input_h, cfg.network.input_w}},
                    {"classes", cfg.network.classes}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"momentum", cfg.train.momentum},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"use_dice_loss", cfg.train.use_dice_loss},
                  {"early_stop_val_dice", cfg.train.early_stop_val_dice},
                  {"select_best_on", select_to_string(cfg.train.select_best_on)}};
    j["cascade"] = cfg.cascade;
    j["k_folds"] = cfg.k_folds;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    return j;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    nlohmann::json j = config_to_json(cfg);
    j.erase("out_dir");
    j.erase("threads");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json history_to_json(const TrainHistory& h) {
    return {{"train_loss", h.train_loss},
            {"val_loss", h.val_loss},
            {"val_dice", h.val_dice},
            {"best_epoch", h.best_epoch}};
}

std::vector<ImageSample> load_or_synth(const ExperimentConfig& cfg) {
    std::vector<ImageSample> samples;
    if (!cfg.data.root.empty()) {
        samples = load_dataset(cfg.data.root);
    } else {
        samples = synth_dataset(cfg.data.synth->n, cfg.data.synth->size,
                                derive_seed(cfg.seed, 0xda7a));
    }
    if (samples.empty()) throw DataError("dataset is empty");
    for (const auto& s : samples)
        if (s.image.h != cfg.network.input_h || s.image.w != cfg.network.input_w)
            throw DataError("sample " + s.id + " is " + std::to_string(s.image.w) + "x" +
                            std::to_string(s.image.h) + " but network.input_size is " +
                            std::to_string(cfg.network.input_w) + "x" +
                            std::to_string(cfg.network.input_h));
    return samples;
}

namespace {

struct LoadedModel {
    bool cascaded = false;
    nn::NetworkConfig net_config;
    nn::NetworkGraph stage1, stage2;
    nn::ParameterStore<float> params1, params2;
    CascadeModel as_cascade() const {
        CascadeModel m;
        m.stage1 = stage1;
        m.stage2 = stage2;
        m.params1 = params1;
        m.params2 = params2;
        return m;
    }
};

nn::NetworkConfig net_config_from_manifest(const nlohmann::json& j) {
    nlohmann::json wrap;
    wrap["network"] = j;
    return config_from_json(wrap).network;
}

nlohmann::json net_config_to_manifest(const nn::NetworkConfig& n) {
    ExperimentConfig tmp;
    tmp.network = n;
    return config_to_json(tmp).at("network");
}

LoadedModel load_model(const std::string& manifest_path, int input_h = 0, int input_w = 0) {
    std::ifstream f(manifest_path);
    if (!f) throw DataError("cannot open model manifest: " + manifest_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model manifest parse error: " + std::string(e.what()));
    }
    LoadedModel m;
    m.net_config = net_config_from_manifest(j.at("network"));
    if (input_h > 0) { // the network is fully convolutional; rebuild at the image size
        m.net_config.input_h = input_h;
        m.net_config.input_w = input_w;
    }
    m.cascaded = j.at("type").get<std::string>() == "cascade";
    const fs::path base = fs::path(manifest_path).parent_path();
    if (m.cascaded) {
        nn::NetworkConfig c1 = m.net_config;
        c1.in_channels = m.net_config.in_channels;
        m.stage1 = nn::build_network(c1);
        nn::NetworkConfig c2 = m.net_config;
        c2.in_channels = m.net_config.in_channels + 1;
        m.stage2 = nn::build_network(c2);
        m.params1 = load_checkpoint((base / j.at("checkpoints").at("stage1").get<std::string>()).string());
        m.params2 = load_checkpoint((base / j.at("checkpoints").at("stage2").get<std::string>()).string());
    } else {
        m.stage1 = nn::build_network(m.net_config);
        m.params1 = load_checkpoint((base / j.at("checkpoints").at("stage1").get<std::string>()).string());
    }
    return m;
}

Predictor predictor_for(const LoadedModel& m, const CascadeModel& cascade_storage) {
    if (m.cascaded) return make_cascade_predictor(cascade_storage);
    return make_predictor(m.stage1, m.params1);
}

TrainOutputs train_on_samples(const ExperimentConfig& cfg,
                              const std::vector<NetSample>& train_s,
                              const std::vector<NetSample>& val_s, const fs::path& out) {
    fs::create_directories(out);
    TrainOutputs outputs;
    nlohmann::json manifest;
    manifest["network"] = net_config_to_manifest(cfg.network);

    Predictor predict;
    CascadeModel cascade_model;
    if (cfg.cascade) {
        cascade_model = train_cascade(train_s, val_s, cfg.network, cfg.train);
        save_checkpoint(cascade_model.params1, (out / "stage1.ckpt").string());
        save_checkpoint(cascade_model.params2, (out / "stage2.ckpt").string());
        manifest["type"] = "cascade";
        manifest["checkpoints"] = {{"stage1", "stage1.ckpt"}, {"stage2", "stage2.ckpt"}};
        outputs.history = cascade_model.history2;
        write_text(out / "history_stage1.json", history_to_json(cascade_model.history1).dump(2));
        predict = make_cascade_predictor(cascade_model);
    } else {
        nn::NetworkGraph net = nn::build_network(cfg.network);
        auto init = nn::init_parameters(net, derive_seed(cfg.seed, 0x111));
        TrainResult r = train(net, std::move(init), train_s, val_s, cfg.train);
        save_checkpoint(r.params, (out / "model.ckpt").string());
        manifest["type"] = "single";
        manifest["checkpoints"] = {{"stage1", "model.ckpt"}};
        outputs.history = r.history;
        // keep the trained pieces alive inside the predictor
        auto net_keep = std::make_shared<nn::NetworkGraph>(std::move(net));
        auto params_keep = std::make_shared<nn::ParameterStore<float>>(std::move(r.params));
        predict = [net_keep, params_keep](const TensorF& batch) {
            nn::Tape<float> tape;
            return nn::forward(*net_keep, *params_keep, batch, nn::Mode::eval, tape);
        };
    }

    outputs.train_report = evaluate_dataset(predict, train_s, cfg.train.batch_size);
    outputs.val_report = evaluate_dataset(predict, val_s, cfg.train.batch_size);

    write_text(out / "model.json", manifest.dump(2));
    write_text(out / "history.json", history_to_json(outputs.history).dump(2));
    nlohmann::json fin;
    fin["train"] = nlohmann::json::parse(metrics_to_json(outputs.train_report));
    fin["val"] = nlohmann::json::parse(metrics_to_json(outputs.val_report));
    write_text(out / "final_metrics.json", fin.dump(2));
    outputs.model_manifest = (out / "model.json").string();
    return outputs;
}

std::vector<NetSample> pick_samples(const std::vector<NetSample>& all,
                                    const std::vector<std::string>& ids) {
    std::vector<NetSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        bool found = false;
        for (const auto& s : all)
            if (s.id == id) {
                out.push_back(s);
                found = true;
                break;
            }
        if (!found) throw DataError("internal: sample id not found: " + id);
    }
    return out;
}

} // namespace

TrainOutputs run_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto samples = load_or_synth(cfg);
    const auto net_samples = to_net_samples(samples);

    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    const auto [train_ids, val_ids] =
        split_train_val(ids, 0.2, derive_seed(cfg.seed, 0x5b11));

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / "run.json", config_to_json(cfg).dump(2));
    return train_on_samples(cfg, pick_samples(net_samples, train_ids),
                            pick_samples(net_samples, val_ids), out);
}

nlohmann::json cv_report_to_json(const CvReport& r) {
    nlohmann::json j;
    j["per_fold"] = nlohmann::json::array();
    for (const auto& f : r.folds) {
        j["per_fold"].push_back({{"fold", f.fold},
                                 {"n_test", f.n_test},
                                 {"dice", f.report.mean_dice},
                                 {"mean_iou", f.report.mean_mean_iou}});
    }
    j["mean_dice"] = r.mean_dice;
    j["mean_miou"] = r.mean_miou;
    j["config_hash"] = r.hash;
    return j;
}

CvReport run_cv(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto samples = load_or_synth(cfg);
    const auto net_samples = to_net_samples(samples);

    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    const FoldPlan plan = make_folds(ids, cfg.k_folds, derive_seed(cfg.seed, 0xf01d));

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / "run.json", config_to_json(cfg).dump(2));

    CvReport report;
    report.hash = config_hash(cfg);
    for (int f = 0; f < cfg.k_folds; ++f) {
        try {
            const auto test_ids = plan.fold_ids(f);
            const auto rest = plan.rest_ids(f);
            const auto [train_ids, val_ids] = split_train_val(
                rest, plan.val_fraction, derive_seed(cfg.seed, 0x0a00 + static_cast<std::uint32_t>(f)));

            ExperimentConfig fold_cfg = cfg;
            fold_cfg.seed = derive_seed(cfg.seed, 0x1000 + static_cast<std::uint32_t>(f));
            fold_cfg.train.seed = fold_cfg.seed;
            const fs::path fold_dir = out / ("fold_" + std::to_string(f));
            const TrainOutputs touts =
                train_on_samples(fold_cfg, pick_samples(net_samples, train_ids),
                                 pick_samples(net_samples, val_ids), fold_dir);

            const LoadedModel m = load_model(touts.model_manifest);
            CascadeModel cm = m.cascaded ? m.as_cascade() : CascadeModel{};
            const Predictor predict = predictor_for(m, cm);
            CvFold fold;
            fold.fold = f;
            fold.n_test = static_cast<int>(test_ids.size());
            fold.report = evaluate_dataset(predict, pick_samples(net_samples, test_ids),
                                           cfg.train.batch_size);
            write_text(fold_dir / "metrics.json", metrics_to_json(fold.report));
            write_text(fold_dir / "metrics.csv", metrics_to_csv(fold.report));
            report.folds.push_back(std::move(fold));
        } catch (const NumericError& e) {
            throw NumericError("cross-validation failed at fold " + std::to_string(f) + ": " +
                               e.what());
        } catch (const std::exception& e) {
            throw DataError("cross-validation failed at fold " + std::to_string(f) + ": " +
                            e.what());
        }
    }
    for (const auto& f : report.folds) {
        report.mean_dice += f.report.mean_dice;
        report.mean_miou += f.report.mean_mean_iou;
    }
    report.mean_dice /= static_cast<double>(report.folds.size());
    report.mean_miou /= static_cast<double>(report.folds.size());
    write_text(out / "cv_report.json", cv_report_to_json(report).dump(2));
    return report;
}

MetricsReport run_eval(const std::string& manifest_path, const ExperimentConfig& cfg) {
    cfg.validate();
    const auto samples = load_or_synth(cfg);
    const auto net_samples = to_net_samples(samples);
    const LoadedModel m = load_model(manifest_path);
    CascadeModel cm = m.cascaded ? m.as_cascade() : CascadeModel{};
    const Predictor predict = predictor_for(m, cm);
    const MetricsReport report = evaluate_dataset(predict, net_samples, cfg.train.batch_size);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / "run.json", config_to_json(cfg).dump(2));
    write_text(out / "metrics.json", metrics_to_json(report));
    write_text(out / "metrics.csv", metrics_to_csv(report));
    return report;
}

void run_predict(const std::string& manifest_path, const std::string& image_path,
                 const std::string& out_prefix) {
    const GrayImage img = read_png_gray8(image_path);
    if (img.width % 32 != 0 || img.height % 32 != 0)
        throw DataError("image " + image_path + " is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) +
                        "; dimensions must be divisible by 32 -- resize it first");

    const LoadedModel m = load_model(manifest_path, img.height, img.width);
    CascadeModel cm = m.cascaded ? m.as_cascade() : CascadeModel{};
    const Predictor predict = predictor_for(m, cm);

    TensorF batch(1, 1, img.height, img.width);
    for (std::size_t i = 0; i < batch.data.size(); ++i)
        batch.data[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    const TensorF probs = predict(batch);

    GrayImage prob_png, mask_png;
    prob_png.width = mask_png.width = img.width;
    prob_png.height = mask_png.height = img.height;
    prob_png.pixels.resize(probs.numel());
    mask_png.pixels.resize(probs.numel());
    for (std::size_t i = 0; i < probs.data.size(); ++i) {
        prob_png.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0f * probs.data[i]));
        mask_png.pixels[i] = probs.data[i] > 0.5f ? 255 : 0;
    }
    write_png_gray8(out_prefix + "_prob.png", prob_png);
    write_png_gray8(out_prefix + "_mask.png", mask_png);
}

} // namespace cdsl
