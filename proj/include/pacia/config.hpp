#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pacia/meta.hpp"
#include "pacia/model.hpp"
#include "pacia/synthetic.hpp"

namespace pacia {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json ablation_to_json(const Ablation& a);
Ablation ablation_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// Full run description: exactly one data source (task files or a synthetic
// spec), model dims, training knobs, output paths.
struct RunConfig {
    // data
    std::string train_path;
    std::string valid_path;
    std::string test_path;
    std::optional<SyntheticSpec> synthetic;
    int synthetic_train_tasks = 40;
    int synthetic_test_tasks = 10;
    int synthetic_graphs_per_task = 64;

    ModelConfig model;
    TrainConfig train;
    Metric metric = Metric::kRocAuc;
    int eval_episodes_per_task = 20;
    std::string out_dir;
    std::string ckpt_path;

    // Collects every violated constraint; empty means valid.
    std::vector<std::string> validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Named ablation presets from the CLI surface.
Ablation ablation_preset(const std::string& name);

}  // namespace pacia
