#pragma once

// Training objectives: (weighted) adversarial CE and (weighted) TRADES.
// All losses are batch means; weights enter as constants.

#include <span>
#include <string>
#include <vector>

#include "virlab/classifier.hpp"
#include "virlab/reweighting.hpp"
#include "virlab/tensor.hpp"

namespace virlab {

enum class ObjectiveFamily { AT, VIR_AT, TRADES, VIR_TRADES };
enum class Ablation { FULL, SV_ONLY, SD_ONLY };

std::string to_string(ObjectiveFamily f);
std::string to_string(Ablation a);
ObjectiveFamily objective_family_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct ObjectiveSpec {
    ObjectiveFamily family = ObjectiveFamily::VIR_AT;
    /// 1/lambda, coefficient on the KL term of TRADES-family objectives.
    double trade_off = 5.0;
    WeightScheme weight_scheme = WeightScheme::vir_at();
    Ablation ablation = Ablation::FULL;

    bool is_trades() const { return family == ObjectiveFamily::TRADES || family == ObjectiveFamily::VIR_TRADES; }
    bool is_weighted() const { return family == ObjectiveFamily::VIR_AT || family == ObjectiveFamily::VIR_TRADES; }
    void validate() const;
};

/// (1/M) sum_i w_i CE(f(x'_i), y_i).
Tensor vir_at_loss(const Classifier& model, const Tensor& x_adv, std::span<const int> y,
                   std::span<const double> weights);

/// (1/M) sum_i [CE(f(x_i), y_i) + trade_off KL(f(x_i) || f(x'_i))].
Tensor trades_loss(const Classifier& model, const Tensor& x_nat, const Tensor& x_adv, std::span<const int> y,
                   double trade_off);

/// (1/M) sum_i [CE(f(x_i), y_i) + trade_off w_i KL(f(x_i) || f(x'_i))].
Tensor vir_trades_loss(const Classifier& model, const Tensor& x_nat, const Tensor& x_adv, std::span<const int> y,
                       double trade_off, std::span<const double> weights);

/// Weights for the ablation rows: FULL = s_v s_d + beta, SV_ONLY = s_v, SD_ONLY = s_d.
std::vector<double> ablation_weights(const WeightScheme& scheme, Ablation ablation, std::span<const double> sv,
                                     std::span<const double> sd);

/// Loss of `spec` for one batch; unweighted families ignore `weights`.
Tensor objective_loss(const ObjectiveSpec& spec, const Classifier& model, const Tensor& x_nat, const Tensor& x_adv,
                      std::span<const int> y, std::span<const double> weights);

}  // namespace virlab
