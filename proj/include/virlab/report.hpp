#pragma once

// CSV emission for run artifacts and regeneration of summary tables from them.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "virlab/gmm.hpp"
#include "virlab/reweighting.hpp"
#include "virlab/train.hpp"

namespace virlab {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// epoch, lr, train_loss, clean_acc, robust_acc_<attack>..., class_acc_<c>...,
/// class_weight_<c>..., best_epoch, best_robust_acc. Evaluation cells are
/// empty on epochs without evaluation.
std::string metrics_csv(const MetricsLog& log);
/// epoch, sample_index, class, prob_true, s_v, s_d, weight.
std::string weights_csv(std::span<const WeightRecord> records);
/// Integer counts with header pred_0..pred_{C-1}; rows are true classes.
std::string confusion_csv(const Confusion& confusion);
/// Row-normalized percentages.
std::string confusion_percent_csv(const Confusion& confusion);
std::string sweep_csv(const SweepResult& result);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

struct ClassWeightRow {
    int epoch = 0;
    int label = 0;
    std::size_t count = 0;
    double weight_sum = 0.0;
    double weight_mean = 0.0;
};

/// Per-epoch, per-class totals of logged weight records, ordered by (epoch, class).
std::vector<ClassWeightRow> class_weight_table(std::span<const WeightRecord> records);
std::string class_weight_csv(std::span<const ClassWeightRow> rows);

std::vector<WeightRecord> parse_weights_csv(const CsvTable& table);
Confusion parse_confusion_csv(const CsvTable& table);

/// Rebuilds summary tables from a run directory: class_weights.csv from
/// weights.csv, confusion_<c>_percent.csv from each confusion_<c>.csv and
/// class_accuracy.csv (long form) from metrics.csv. Returns files written.
std::vector<std::filesystem::path> regenerate_reports(const std::filesystem::path& run_dir,
                                                      const std::filesystem::path& out_dir);

struct TheoryRow {
    gmm::GmmSpec spec;
    std::size_t n = 0;
    gmm::ClassRisks closed;
    gmm::RiskEstimate mc;
    double c_plus = 0.0, c_minus = 0.0;
    double p_minus = 0.0, p_plus = 0.0;
    bool pass_mc = false;         // both estimates within 5 standard errors
    bool pass_ordering = false;   // R- < R+ and P- > P+
    bool pass_threshold = false;  // |c_plus - c_minus| <= 1e-9 (1 + |c|)
};

/// Closed forms against a Monte Carlo run of the optimal linear classifier.
TheoryRow theory_row(const gmm::GmmSpec& spec, std::size_t n, std::uint64_t seed);
std::string theory_csv(std::span<const TheoryRow> rows);

}  // namespace virlab
