#pragma once

// Run configuration: one JSON document per run. Unknown keys are rejected and
// every field has a default, so a config only needs the fields it changes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "virlab/attacks.hpp"
#include "virlab/data.hpp"
#include "virlab/gmm.hpp"
#include "virlab/objectives.hpp"
#include "virlab/optim.hpp"

namespace virlab {

enum class DataSource { GMM, MULTICLASS, IDX, CSV };

std::string to_string(DataSource s);
DataSource data_source_from_string(const std::string& s);

struct GmmData {
    gmm::GmmSpec spec{10, 1.0, 1.0, 1.0, 0.5};
    std::size_t train_n = 1000;
    std::size_t test_n = 1000;
};

struct MulticlassData {
    std::vector<double> variances{1.0, 1.0, 4.0};
    double separation = 4.0;
    std::size_t d = 10;
    std::size_t train_per_class = 1000;
    std::size_t test_per_class = 200;
};

struct IdxData {
    std::string train_images, train_labels, test_images, test_labels;
    std::optional<std::size_t> train_limit, test_limit;
};

struct CsvData {
    std::string train, test;
    std::optional<Bounds> bounds;
};

struct DataConfig {
    DataSource source = DataSource::MULTICLASS;
    std::uint64_t seed = 0;
    GmmData gmm;
    MulticlassData multiclass;
    IdxData idx;
    CsvData csv;
};

struct LoggingConfig {
    /// Evaluate every n epochs (and always at the last epoch).
    int eval_every = 1;
    /// Log per-sample weight records every n epochs; 0 disables weights.csv rows.
    int weights_every = 1;
    /// Evaluate on at most this many test samples; 0 means all.
    std::size_t eval_limit = 0;
};

struct TrainConfig {
    ObjectiveSpec objective;
    AttackSpec attack_train;
    std::vector<AttackSpec> attack_eval;
    OptimizerConfig optimizer;
    int epochs = 115;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    /// Seeds evaluation attacks independently of the training seed.
    std::uint64_t eval_seed = 1234;
    std::vector<std::size_t> hidden{64};
    DataConfig data;
    LoggingConfig logging;
    std::string output_dir = "run";

    /// ConfigError describing the first inconsistency.
    void validate() const;
};

/// Short synthetic schedule used by default: 30 epochs, milestones [20, 25],
/// burn-in 18, batch 64, three-class mixture with variances [1, 1, 4].
TrainConfig desk_profile();
/// Long schedule: 115 epochs, milestones [75, 90], burn-in 75, batch 128,
/// lr 0.01, weight decay 3.5e-3, eps 8/255, step 2/255, 10 steps, bounds [0, 1].
TrainConfig paper_profile();
/// "desk" or "paper".
TrainConfig profile(const std::string& name);

nlohmann::json to_json(const AttackSpec& spec);
nlohmann::json to_json(const WeightScheme& scheme);
nlohmann::json to_json(const ObjectiveSpec& spec);
nlohmann::json to_json(const TrainConfig& config);

/// Fields present in `doc` override `base`; unknown keys throw ConfigError.
AttackSpec attack_from_json(const nlohmann::json& doc, AttackSpec base = {});
WeightScheme weight_scheme_from_json(const nlohmann::json& doc, WeightScheme base = {});
ObjectiveSpec objective_from_json(const nlohmann::json& doc, ObjectiveSpec base = {});
TrainConfig config_from_json(const nlohmann::json& doc, TrainConfig base = desk_profile());

/// Parse a config file over `base`. IoError if unreadable, ConfigError if malformed.
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = desk_profile());
/// Canonical form: sorted keys, two-space indent, trailing newline.
std::string dump_config(const TrainConfig& config);

/// Materialize the train and test splits named by `data`. Both splits share
/// num_classes (the larger of the two).
std::pair<Dataset, Dataset> load_data(const DataConfig& data);

}  // namespace virlab
