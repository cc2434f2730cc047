#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "virlab/classifier.hpp"
#include "virlab/config.hpp"
#include "virlab/data.hpp"
#include "virlab/reweighting.hpp"

namespace virlab {

using Confusion = std::vector<std::vector<std::size_t>>;  // rows = true class, columns = predicted

struct ConditionResult {
    std::string name;
    double accuracy = 0.0;
    Confusion confusion;
    /// diagonal / row sum; 0 for a class with no samples.
    std::vector<double> class_accuracy;
};

ConditionResult score_predictions(const std::string& name, std::span<const int> labels, std::span<const int> predicted,
                                  std::size_t num_classes);

struct EvalReport {
    ConditionResult clean;
    std::vector<ConditionResult> attacks;

    /// Smallest accuracy over the attacks, or clean accuracy without attacks.
    double worst_robust() const;
};

/// Clean and per-attack accuracy on the first `limit` samples (0 = all).
/// Each attack is reseeded from `eval_seed` so difficulty does not depend on
/// the training seed. ConfigError for an empty dataset.
EvalReport evaluate(const Classifier& model, const Dataset& data, std::span<const AttackSpec> attacks,
                    std::uint64_t eval_seed, std::size_t limit = 0);

/// Adversarial inputs for `data` under `spec`, seeded like `evaluate`.
Tensor attack_dataset(const Classifier& model, const Dataset& data, const AttackSpec& spec, std::uint64_t eval_seed);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    /// Unset on epochs without evaluation.
    std::optional<double> clean_acc;
    std::vector<double> robust_acc;      // per evaluation attack
    std::vector<double> class_acc;       // clean, per class
    std::vector<double> class_weight;    // sum of training weights per class
    int best_epoch = 0;                  // best worst-case robust accuracy so far
    double best_robust = 0.0;
};

struct MetricsLog {
    std::vector<std::string> attack_names;
    std::size_t num_classes = 0;
    std::vector<EpochMetrics> rows;
};

struct TrainResult {
    Classifier model;
    MetricsLog metrics;
    /// Per-sample weight records of logged epochs, in training order.
    std::vector<WeightRecord> weights;
    /// Loss of every optimizer step, in order.
    std::vector<double> step_losses;
    EvalReport final_eval;
    std::vector<std::size_t> class_counts;
};

/// Called after every optimizer step with (epoch, batch index, batch weights).
using BatchObserver = std::function<void(int, std::size_t, const BatchWeights&)>;

/// Adversarial training on `train`, evaluating on `test` on the logging cadence.
/// NumericError naming epoch and batch on a non-finite loss.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& test_data,
                  const BatchObserver& observer = {});
/// Loads the data named by config.data.
TrainResult train(const TrainConfig& config);

/// metrics.csv, weights.csv, confusion_<condition>.csv, model.ckpt and config.json.
void write_run(const TrainResult& result, const TrainConfig& config, const std::filesystem::path& dir);

struct SweepGrid {
    /// Empty axes keep the base configuration's value.
    std::vector<double> alpha, gamma, beta;
};

struct SweepRow {
    double alpha = 0.0, gamma = 0.0, beta = 0.0;
    bool ok = false;
    std::string error;
    double clean_acc = 0.0;
    std::vector<double> robust_acc;
    int best_epoch = 0;
    double best_robust = 0.0;
};

struct SweepResult {
    std::vector<std::string> attack_names;
    std::vector<SweepRow> rows;
};

/// One train + evaluate per grid point; failures are recorded and the sweep continues.
/// `on_run` sees each successful run (e.g. to write its artifacts).
SweepResult sweep(const TrainConfig& base, const SweepGrid& grid, const Dataset& train_data, const Dataset& test_data,
                  const std::function<void(const SweepRow&, const TrainResult&)>& on_run = {});

}  // namespace virlab
