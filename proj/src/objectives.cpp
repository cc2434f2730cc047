#include "virlab/objectives.hpp"

#include <cmath>

#include "virlab/error.hpp"

namespace virlab {

std::string to_string(ObjectiveFamily f) {
    switch (f) {
        case ObjectiveFamily::AT: return "AT";
        case ObjectiveFamily::VIR_AT: return "VIR_AT";
        case ObjectiveFamily::TRADES: return "TRADES";
        case ObjectiveFamily::VIR_TRADES: return "VIR_TRADES";
    }
    return "?";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::FULL: return "FULL";
        case Ablation::SV_ONLY: return "SV_ONLY";
        case Ablation::SD_ONLY: return "SD_ONLY";
    }
    return "?";
}

ObjectiveFamily objective_family_from_string(const std::string& s) {
    if (s == "AT") return ObjectiveFamily::AT;
    if (s == "VIR_AT") return ObjectiveFamily::VIR_AT;
    if (s == "TRADES") return ObjectiveFamily::TRADES;
    if (s == "VIR_TRADES") return ObjectiveFamily::VIR_TRADES;
    throw ConfigError("unknown objective family '" + s + "'");
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "FULL") return Ablation::FULL;
    if (s == "SV_ONLY") return Ablation::SV_ONLY;
    if (s == "SD_ONLY") return Ablation::SD_ONLY;
    throw ConfigError("unknown ablation '" + s + "'");
}

void ObjectiveSpec::validate() const {
    if (is_trades() && !(trade_off > 0.0 && std::isfinite(trade_off)))
        throw ConfigError("TRADES trade_off must be > 0");
    weight_scheme.validate();
    if (ablation != Ablation::FULL && (weight_scheme.family != WeightFamily::VIR || !is_weighted()))
        throw ConfigError("ablations are defined only for VIR-weighted objectives");
}

namespace {

void require_weights(std::span<const double> weights, std::size_t n) {
    if (weights.size() != n)
        throw ShapeError("objective: " + std::to_string(weights.size()) + " weights for batch of " + std::to_string(n));
    for (double w : weights)
        if (!(w >= 0.0 && std::isfinite(w))) throw DomainError("objective: weights must be finite and >= 0");
}

}  // namespace

Tensor vir_at_loss(const Classifier& model, const Tensor& x_adv, std::span<const int> y,
                   std::span<const double> weights) {
    require_weights(weights, y.size());
    return weighted_mean(cross_entropy_per_sample(model.forward(x_adv.detach()), y), weights);
}

Tensor trades_loss(const Classifier& model, const Tensor& x_nat, const Tensor& x_adv, std::span<const int> y,
                   double trade_off) {
    const std::vector<double> ones(y.size(), 1.0);
    return vir_trades_loss(model, x_nat, x_adv, y, trade_off, ones);
}

Tensor vir_trades_loss(const Classifier& model, const Tensor& x_nat, const Tensor& x_adv, std::span<const int> y,
                       double trade_off, std::span<const double> weights) {
    if (!(trade_off > 0.0)) throw ConfigError("TRADES trade_off must be > 0");
    if (x_nat.shape() != x_adv.shape()) throw ShapeError("TRADES: natural and adversarial batches differ in shape");
    require_weights(weights, y.size());
    const Tensor nat_logits = model.forward(x_nat.detach());
    const Tensor adv_logits = model.forward(x_adv.detach());
    std::vector<double> kl_coeff(weights.begin(), weights.end());
    for (auto& w : kl_coeff) w *= trade_off;
    const Tensor ce = cross_entropy_per_sample(nat_logits, y);
    const Tensor kl = mul(kl_from_logits(nat_logits, adv_logits), Tensor::vector(kl_coeff));
    return mean(add(ce, kl));
}

std::vector<double> ablation_weights(const WeightScheme& scheme, Ablation ablation, std::span<const double> sv,
                                     std::span<const double> sd) {
    if (sv.size() != sd.size()) throw ShapeError("ablation_weights: s_v and s_d lengths differ");
    std::vector<double> w(sv.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        switch (ablation) {
            case Ablation::FULL: w[i] = vir_weight(sv[i], sd[i], scheme.beta); break;
            case Ablation::SV_ONLY: w[i] = sv[i]; break;
            case Ablation::SD_ONLY: w[i] = sd[i]; break;
        }
    }
    return w;
}

Tensor objective_loss(const ObjectiveSpec& spec, const Classifier& model, const Tensor& x_nat, const Tensor& x_adv,
                      std::span<const int> y, std::span<const double> weights) {
    const std::vector<double> ones(y.size(), 1.0);
    switch (spec.family) {
        case ObjectiveFamily::AT: return vir_at_loss(model, x_adv, y, ones);
        case ObjectiveFamily::VIR_AT: return vir_at_loss(model, x_adv, y, weights);
        case ObjectiveFamily::TRADES: return trades_loss(model, x_nat, x_adv, y, spec.trade_off);
        case ObjectiveFamily::VIR_TRADES: return vir_trades_loss(model, x_nat, x_adv, y, spec.trade_off, weights);
    }
    throw ConfigError("unknown objective family");
}

}  // namespace virlab
