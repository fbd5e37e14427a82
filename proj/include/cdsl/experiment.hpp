#ifndef CDSL_EXPERIMENT_HPP
#define CDSL_EXPERIMENT_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdsl/cascade.hpp"
#include "cdsl/train.hpp"

namespace cdsl {

struct SynthSpec {
    int n = 16;
    int size = 64;
};

// Either a dataset root on disk or a synthetic generation spec.
struct DataSpec {
    std::string root;
    std::optional<SynthSpec> synth = SynthSpec{};
};

struct ExperimentConfig {
    DataSpec data;
    nn::NetworkConfig network;
    TrainConfig train;
    bool cascade = false;
    int k_folds = 5;
    std::uint32_t seed = 1;
    std::string out_dir = "runs/out";
    int threads = 0; // 0 = hardware default

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg); // fully resolved
ExperimentConfig load_config_file(const std::string& path);

// FNV-1a over the canonical serialization, excluding out_dir and threads.
std::string config_hash(const ExperimentConfig& cfg);

nlohmann::json history_to_json(const TrainHistory& h);

// Materializes samples per the DataSpec (network.input size must match).
std::vector<ImageSample> load_or_synth(const ExperimentConfig& cfg);

struct TrainOutputs {
    std::string model_manifest; // path to model.json under out_dir
    TrainHistory history;       // stage-2 history when cascaded
    MetricsReport train_report;
    MetricsReport val_report;
};

// train / cascade-train entry point; writes run.json, history.json,
// checkpoint(s), model.json and final_metrics.json under cfg.out_dir.
TrainOutputs run_train(const ExperimentConfig& cfg);

struct CvFold {
    int fold = 0;
    int n_test = 0;
    MetricsReport report;
};

struct CvReport {
    std::vector<CvFold> folds;
    double mean_dice = 0;
    double mean_miou = 0;
    std::string hash;
};

nlohmann::json cv_report_to_json(const CvReport& r);

// k-fold cross-validation: per fold, train on the remaining folds (with the
// configured validation fraction) and evaluate on the held-out fold. All seeds
// derive from cfg.seed and the fold index.
CvReport run_cv(const ExperimentConfig& cfg);

// Evaluates a saved model manifest over a dataset; writes metrics.{json,csv}.
MetricsReport run_eval(const std::string& manifest_path, const ExperimentConfig& cfg);

// Writes <out_prefix>_prob.png (round(255*p)) and <out_prefix>_mask.png
// (binarized at 0.5, values 0/255).
void run_predict(const std::string& manifest_path, const std::string& image_path,
                 const std::string& out_prefix);

} // namespace cdsl

#endif
