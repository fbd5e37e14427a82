#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cdsl/experiment.hpp"
#include "cdsl/png_io.hpp"

using namespace cdsl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cdsl_exp_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_experiment(const fs::path& out, int n = 6, int epochs = 2) {
    ExperimentConfig cfg;
    cfg.data.synth = SynthSpec{n, 32};
    cfg.network.base_channels = 8;
    cfg.network.encoder_channels = {8, 16, 24, 32};
    cfg.network.scale_inputs = {2};
    cfg.network.input_h = cfg.network.input_w = 32;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 2;
    cfg.k_folds = 2;
    cfg.seed = 9;
    cfg.train.seed = 9;
    cfg.out_dir = out.string();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("config json round-trips every field") {
    ExperimentConfig cfg;
    cfg.data.root.clear();
    cfg.data.synth = SynthSpec{24, 96};
    cfg.network.in_channels = 1;
    cfg.network.base_channels = 16;
    cfg.network.encoder_channels = {16, 32, 48, 64};
    cfg.network.scale_inputs = {2, 8};
    cfg.network.input_h = cfg.network.input_w = 96;
    cfg.train.learning_rate = 0.002f;
    cfg.train.momentum = 0.8f;
    cfg.train.epochs = 12;
    cfg.train.batch_size = 6;
    cfg.train.use_dice_loss = false;
    cfg.train.select_best_on = SelectBest::last_epoch;
    cfg.train.early_stop_val_dice = 0.5;
    cfg.cascade = true;
    cfg.k_folds = 3;
    cfg.seed = 77;
    cfg.train.seed = 77;
    cfg.out_dir = "somewhere";
    cfg.threads = 2;

    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.network.scale_inputs == std::set<int>{2, 8});
    CHECK(back.train.select_best_on == SelectBest::last_epoch);
    CHECK(back.data.synth->n == 24);
}

TEST_CASE("scale inputs parse from fraction strings and integers") {
    const auto j = nlohmann::json::parse(R"({"network":{"scale_inputs":["1/2","1/4"]}})");
    CHECK(config_from_json(j).network.scale_inputs == std::set<int>{2, 4});
    const auto j2 = nlohmann::json::parse(R"({"network":{"scale_inputs":[2,8]}})");
    CHECK(config_from_json(j2).network.scale_inputs == std::set<int>{2, 8});
    const auto j3 = nlohmann::json::parse(R"({"network":{"scale_inputs":["1/3"]}})");
    CHECK_THROWS_AS(config_from_json(j3), ConfigError);
}

TEST_CASE("config hash ignores out_dir and threads but tracks everything else") {
    TempDir tmp("hash");
    ExperimentConfig a = tiny_experiment(tmp.path / "a");
    ExperimentConfig b = tiny_experiment(tmp.path / "b");
    b.threads = 7;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 10;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("run_train writes the full artifact set and is re-runnable bit-identically") {
    TempDir tmp("train");
    const ExperimentConfig cfg = tiny_experiment(tmp.path / "r1");
    const TrainOutputs out = run_train(cfg);
    CHECK(fs::exists(tmp.path / "r1" / "run.json"));
    CHECK(fs::exists(tmp.path / "r1" / "history.json"));
    CHECK(fs::exists(tmp.path / "r1" / "model.ckpt"));
    CHECK(fs::exists(tmp.path / "r1" / "model.json"));
    CHECK(fs::exists(tmp.path / "r1" / "final_metrics.json"));
    CHECK(out.history.train_loss.size() == 2);

    // same seed, fresh out dir: bit-identical history, checkpoint and metrics
    ExperimentConfig cfg2 = tiny_experiment(tmp.path / "r2");
    run_train(cfg2);
    CHECK(slurp(tmp.path / "r1" / "history.json") == slurp(tmp.path / "r2" / "history.json"));
    CHECK(slurp(tmp.path / "r1" / "model.ckpt") == slurp(tmp.path / "r2" / "model.ckpt"));
    CHECK(slurp(tmp.path / "r1" / "final_metrics.json") ==
          slurp(tmp.path / "r2" / "final_metrics.json"));
}

TEST_CASE("run_cv: fold partition, mean arithmetic, rerun from run.json") {
    TempDir tmp("cv");
    const ExperimentConfig cfg = tiny_experiment(tmp.path / "cv1");
    const CvReport report = run_cv(cfg);
    REQUIRE(report.folds.size() == 2);
    CHECK(report.folds[0].n_test + report.folds[1].n_test == 6);
    CHECK(std::abs(report.folds[0].n_test - report.folds[1].n_test) <= 1);

    double dice = 0, miou = 0;
    for (const auto& f : report.folds) {
        dice += f.report.mean_dice;
        miou += f.report.mean_mean_iou;
    }
    CHECK(std::fabs(report.mean_dice - dice / 2.0) <= 1e-12);
    CHECK(std::fabs(report.mean_miou - miou / 2.0) <= 1e-12);

    CHECK(fs::exists(tmp.path / "cv1" / "cv_report.json"));
    CHECK(fs::exists(tmp.path / "cv1" / "fold_0" / "metrics.csv"));
    CHECK(fs::exists(tmp.path / "cv1" / "fold_1" / "metrics.json"));

    // the emitted run.json reproduces the report bit-identically
    const auto run_json = nlohmann::json::parse(slurp(tmp.path / "cv1" / "run.json"));
    ExperimentConfig replay = config_from_json(run_json);
    replay.out_dir = (tmp.path / "cv2").string();
    run_cv(replay);
    CHECK(slurp(tmp.path / "cv1" / "cv_report.json") ==
          slurp(tmp.path / "cv2" / "cv_report.json"));

    // schema fields
    const auto rj = nlohmann::json::parse(slurp(tmp.path / "cv1" / "cv_report.json"));
    CHECK(rj.contains("per_fold"));
    CHECK(rj.contains("mean_dice"));
    CHECK(rj.contains("mean_miou"));
    CHECK(rj.contains("config_hash"));
    CHECK(rj["per_fold"].size() == 2);
}

TEST_CASE("run_eval evaluates a saved model over a dataset spec") {
    TempDir tmp("eval");
    const ExperimentConfig cfg = tiny_experiment(tmp.path / "train");
    const TrainOutputs out = run_train(cfg);
    ExperimentConfig eval_cfg = cfg;
    eval_cfg.out_dir = (tmp.path / "eval").string();
    const MetricsReport r = run_eval(out.model_manifest, eval_cfg);
    CHECK(r.per_image.size() == 6);
    CHECK(fs::exists(tmp.path / "eval" / "metrics.json"));
    CHECK(fs::exists(tmp.path / "eval" / "metrics.csv"));
}

TEST_CASE("run_predict: quantization, binary mask values, byte-identical reruns") {
    TempDir tmp("predict");
    const ExperimentConfig cfg = tiny_experiment(tmp.path / "train");
    const TrainOutputs out = run_train(cfg);

    const auto samples = synth_dataset(1, 32, 4);
    GrayImage img;
    img.width = img.height = 32;
    img.pixels.resize(32 * 32);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0f * samples[0].image.v[i]));
    const fs::path img_path = tmp.path / "input.png";
    write_png_gray8(img_path.string(), img);

    const std::string prefix1 = (tmp.path / "p1").string();
    run_predict(out.model_manifest, img_path.string(), prefix1);
    const GrayImage prob = read_png_gray8(prefix1 + "_prob.png");
    const GrayImage mask = read_png_gray8(prefix1 + "_mask.png");
    REQUIRE(prob.width == 32);
    REQUIRE(mask.width == 32);
    for (const std::uint8_t v : mask.pixels) CHECK((v == 0 || v == 255));
    // mask pixels agree with thresholding the probability image
    for (std::size_t i = 0; i < prob.pixels.size(); ++i) {
        if (prob.pixels[i] > 140) CHECK(mask.pixels[i] == 255);
        if (prob.pixels[i] < 115) CHECK(mask.pixels[i] == 0);
    }

    const std::string prefix2 = (tmp.path / "p2").string();
    run_predict(out.model_manifest, img_path.string(), prefix2);
    CHECK(slurp(prefix1 + "_prob.png") == slurp(prefix2 + "_prob.png"));
    CHECK(slurp(prefix1 + "_mask.png") == slurp(prefix2 + "_mask.png"));
}

TEST_CASE("run_predict rejects images whose dims are not divisible by 32") {
    TempDir tmp("predbad");
    const ExperimentConfig cfg = tiny_experiment(tmp.path / "train");
    const TrainOutputs out = run_train(cfg);
    GrayImage odd;
    odd.width = odd.height = 40;
    odd.pixels.assign(40 * 40, 100);
    const fs::path img_path = tmp.path / "odd.png";
    write_png_gray8(img_path.string(), odd);
    CHECK_THROWS_AS(run_predict(out.model_manifest, img_path.string(), (tmp.path / "o").string()),
                    DataError);
}

TEST_CASE("cascade run_train emits both stage checkpoints and a cascade manifest") {
    TempDir tmp("casc");
    ExperimentConfig cfg = tiny_experiment(tmp.path / "c1", 4, 1);
    cfg.cascade = true;
    const TrainOutputs out = run_train(cfg);
    CHECK(fs::exists(tmp.path / "c1" / "stage1.ckpt"));
    CHECK(fs::exists(tmp.path / "c1" / "stage2.ckpt"));
    const auto manifest = nlohmann::json::parse(slurp(tmp.path / "c1" / "model.json"));
    CHECK(manifest["type"] == "cascade");
    // the saved cascade evaluates
    ExperimentConfig eval_cfg = cfg;
    eval_cfg.out_dir = (tmp.path / "eval").string();
    const MetricsReport r = run_eval(out.model_manifest, eval_cfg);
    CHECK(r.per_image.size() == 4);
}

TEST_CASE("validation rejects inconsistent experiment configs") {
    TempDir tmp("valbad");
    ExperimentConfig cfg = tiny_experiment(tmp.path / "x");
    cfg.k_folds = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_experiment(tmp.path / "x");
    cfg.data.synth.reset();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_experiment(tmp.path / "x");
    cfg.data.root = "/some/root";
    CHECK_THROWS_AS(cfg.validate(), ConfigError); // both root and synth set
}

TEST_CASE("dataset size mismatch against network input is a data error") {
    TempDir tmp("mismatch");
    ExperimentConfig cfg = tiny_experiment(tmp.path / "x");
    cfg.network.input_h = cfg.network.input_w = 64; // synth stays 32
    CHECK_THROWS_AS(run_train(cfg), DataError);
}
