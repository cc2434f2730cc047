#pragma once

// Instance weights for robust losses: VIR, GAIRAT, MAIL and uniform.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "virlab/classifier.hpp"
#include "virlab/tensor.hpp"

namespace virlab {

enum class WeightFamily { VIR, GAIRAT, MAIL, UNIFORM };

std::string to_string(WeightFamily f);
WeightFamily weight_family_from_string(const std::string& s);

/// Hyperparameters of a weighting family. gamma/beta are shared between VIR
/// (exponent, lower bound) and MAIL (sigmoid slope, center).
struct WeightScheme {
    WeightFamily family = WeightFamily::VIR;
    double alpha = 7.0;
    double gamma = 10.0;
    double beta = 0.007;
    double lambda_g = -1.0;
    int k_pgd = 10;
    /// Weights are exactly 1 for every epoch <= burn_in_epoch.
    int burn_in_epoch = 75;

    // Test hooks: replace s_v / s_d by constants when set.
    std::optional<double> sv_override;
    std::optional<double> sd_override;

    void validate() const;

    static WeightScheme vir_at();      // alpha 7, gamma 10, beta 0.007
    static WeightScheme vir_trades();  // alpha 8, gamma 3, beta 1.6
    static WeightScheme gairat(int k_pgd = 10);
    static WeightScheme mail();        // gamma 10, beta 0
    static WeightScheme uniform();
};

/// Vulnerability score alpha * exp(-gamma * p_true). DomainError outside [0,1].
double s_v(double prob_true, double alpha, double gamma);

/// Discrepancy score KL(p_nat || p_adv) on detached probability rows.
double s_d(std::span<const double> p_nat, std::span<const double> p_adv);

/// s_v * s_d + beta.
double vir_weight(double sv, double sd, double beta);

/// (1 + tanh(lambda + 5 (1 - 2k/K))) / 2. DomainError for k outside [0, K].
double gairat_weight(int k, int k_pgd, double lambda_g);

/// p_adv[y] - max_{j != y} p_adv[j]. ConfigError for fewer than two classes.
double mail_margin(std::span<const double> p_adv, int y);

/// sigmoid(-gamma (pm - beta)).
double mail_weight(double pm, double gamma_m, double beta_m);

struct WeightRecord {
    std::size_t sample_index = 0;
    int label = 0;
    int epoch = 0;
    double prob_true = 0.0;
    double s_v = 0.0;
    double s_d = 0.0;
    double weight = 1.0;
};

struct BatchWeights {
    std::vector<double> weights;
    std::vector<WeightRecord> records;
};

/// Weights for one batch. Predictions are evaluated without a tape.
/// `sample_indices` labels the records (dataset indices); defaults to 0..n-1.
/// `k_values` (least PGD steps) is required for GAIRAT.
BatchWeights batch_weights(const WeightScheme& scheme, int epoch, const Classifier& model, const Tensor& x_nat,
                           const Tensor& x_adv, std::span<const int> y,
                           std::optional<std::span<const int>> k_values = std::nullopt,
                           std::span<const std::size_t> sample_indices = {});

/// Sum of weights per class; classes beyond the largest label present need `num_classes`.
std::vector<double> class_weight_distribution(std::span<const WeightRecord> records, std::size_t num_classes = 0);

}  // namespace virlab
