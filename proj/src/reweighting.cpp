#include "virlab/reweighting.hpp"

#include <algorithm>
#include <cmath>

#include "virlab/error.hpp"

namespace virlab {

std::string to_string(WeightFamily f) {
    switch (f) {
        case WeightFamily::VIR: return "VIR";
        case WeightFamily::GAIRAT: return "GAIRAT";
        case WeightFamily::MAIL: return "MAIL";
        case WeightFamily::UNIFORM: return "UNIFORM";
    }
    return "?";
}

WeightFamily weight_family_from_string(const std::string& s) {
    if (s == "VIR") return WeightFamily::VIR;
    if (s == "GAIRAT") return WeightFamily::GAIRAT;
    if (s == "MAIL") return WeightFamily::MAIL;
    if (s == "UNIFORM") return WeightFamily::UNIFORM;
    throw ConfigError("unknown weight family '" + s + "'");
}

void WeightScheme::validate() const {
    if (burn_in_epoch < 0) throw ConfigError("burn_in_epoch must be >= 0");
    switch (family) {
        case WeightFamily::VIR:
            if (!(alpha > 0.0)) throw ConfigError("VIR alpha must be > 0");
            if (!(gamma >= 1.0)) throw ConfigError("VIR gamma must be >= 1");
            if (!(beta >= 0.0)) throw ConfigError("VIR beta must be >= 0");
            if (sv_override && !(*sv_override >= 0.0)) throw ConfigError("sv_override must be >= 0");
            if (sd_override && !(*sd_override >= 0.0)) throw ConfigError("sd_override must be >= 0");
            break;
        case WeightFamily::GAIRAT:
            if (k_pgd < 1) throw ConfigError("GAIRAT k_pgd must be >= 1");
            if (!std::isfinite(lambda_g)) throw ConfigError("GAIRAT lambda must be finite");
            break;
        case WeightFamily::MAIL:
            if (!std::isfinite(gamma) || !std::isfinite(beta)) throw ConfigError("MAIL gamma/beta must be finite");
            break;
        case WeightFamily::UNIFORM: break;
    }
}

WeightScheme WeightScheme::vir_at() { return {}; }

WeightScheme WeightScheme::vir_trades() {
    WeightScheme s;
    s.alpha = 8.0;
    s.gamma = 3.0;
    s.beta = 1.6;
    return s;
}

WeightScheme WeightScheme::gairat(int k_pgd) {
    WeightScheme s;
    s.family = WeightFamily::GAIRAT;
    s.k_pgd = k_pgd;
    return s;
}

WeightScheme WeightScheme::mail() {
    WeightScheme s;
    s.family = WeightFamily::MAIL;
    s.gamma = 10.0;
    s.beta = 0.0;
    return s;
}

WeightScheme WeightScheme::uniform() {
    WeightScheme s;
    s.family = WeightFamily::UNIFORM;
    return s;
}

double s_v(double prob_true, double alpha, double gamma) {
    if (!(prob_true >= 0.0 && prob_true <= 1.0))
        throw DomainError("s_v: probability " + std::to_string(prob_true) + " outside [0, 1]");
    return alpha * std::exp(-gamma * prob_true);
}

double s_d(std::span<const double> p_nat, std::span<const double> p_adv) {
    if (p_nat.size() != p_adv.size()) throw ShapeError("s_d: rows of different length");
    const Tensor p({1, p_nat.size()}, std::vector<double>(p_nat.begin(), p_nat.end()));
    const Tensor q({1, p_adv.size()}, std::vector<double>(p_adv.begin(), p_adv.end()));
    return kl_divergence(p, q).item();
}

double vir_weight(double sv, double sd, double beta) { return sv * sd + beta; }

double gairat_weight(int k, int k_pgd, double lambda_g) {
    if (k_pgd < 1) throw ConfigError("gairat_weight: K must be >= 1");
    if (k < 0 || k > k_pgd)
        throw DomainError("gairat_weight: k = " + std::to_string(k) + " outside [0, " + std::to_string(k_pgd) + "]");
    const double frac = 2.0 * static_cast<double>(k) / static_cast<double>(k_pgd);
    return (1.0 + std::tanh(lambda_g + 5.0 * (1.0 - frac))) / 2.0;
}

double mail_margin(std::span<const double> p_adv, int y) {
    if (p_adv.size() < 2) throw ConfigError("mail_margin: needs at least two classes");
    if (y < 0 || static_cast<std::size_t>(y) >= p_adv.size()) throw IndexError("mail_margin: label out of range");
    double other = -1.0;
    for (std::size_t j = 0; j < p_adv.size(); ++j)
        if (static_cast<int>(j) != y) other = std::max(other, p_adv[j]);
    return p_adv[static_cast<std::size_t>(y)] - other;
}

double mail_weight(double pm, double gamma_m, double beta_m) {
    const double z = -gamma_m * (pm - beta_m);
    // Evaluate the logistic on the side that cannot overflow.
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

BatchWeights batch_weights(const WeightScheme& scheme, int epoch, const Classifier& model, const Tensor& x_nat,
                           const Tensor& x_adv, std::span<const int> y, std::optional<std::span<const int>> k_values,
                           std::span<const std::size_t> sample_indices) {
    scheme.validate();
    const std::size_t n = y.size();
    if (x_nat.rank() != 2 || x_nat.dim(0) != n || x_adv.shape() != x_nat.shape())
        throw ShapeError("batch_weights: inputs are not batch-aligned");
    if (!sample_indices.empty() && sample_indices.size() != n)
        throw ShapeError("batch_weights: sample index count mismatch");
    if (scheme.family == WeightFamily::GAIRAT) {
        if (!k_values) throw ConfigError("GAIRAT weights require least-PGD-step counts");
        if (k_values->size() != n) throw ShapeError("batch_weights: k_values count mismatch");
    }

    const auto frozen = model.frozen();
    const Tensor p_nat = softmax(frozen.forward(x_nat.detach()));
    const Tensor p_adv = softmax(frozen.forward(x_adv.detach()));
    const auto sd_all = kl_divergence(p_nat, p_adv);
    const bool active = epoch > scheme.burn_in_epoch;

    BatchWeights out;
    out.weights.assign(n, 1.0);
    out.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out.records[i];
        r.sample_index = sample_indices.empty() ? i : sample_indices[i];
        r.label = y[i];
        r.epoch = epoch;
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= p_nat.dim(1)) throw IndexError("batch_weights: label out of range");
        r.prob_true = p_nat.at(i, static_cast<std::size_t>(y[i]));
        r.s_v = scheme.sv_override ? *scheme.sv_override : s_v(r.prob_true, scheme.alpha, scheme.gamma);
        r.s_d = scheme.sd_override ? *scheme.sd_override : sd_all[i];
        if (active) {
            switch (scheme.family) {
                case WeightFamily::VIR: out.weights[i] = vir_weight(r.s_v, r.s_d, scheme.beta); break;
                case WeightFamily::GAIRAT:
                    out.weights[i] = gairat_weight((*k_values)[i], scheme.k_pgd, scheme.lambda_g);
                    break;
                case WeightFamily::MAIL:
                    out.weights[i] = mail_weight(mail_margin(p_adv.row(i), y[i]), scheme.gamma, scheme.beta);
                    break;
                case WeightFamily::UNIFORM: break;
            }
        }
        r.weight = out.weights[i];
    }
    return out;
}

std::vector<double> class_weight_distribution(std::span<const WeightRecord> records, std::size_t num_classes) {
    std::size_t classes = num_classes;
    for (const auto& r : records) {
        if (r.label < 0) throw IndexError("class_weight_distribution: negative label");
        classes = std::max(classes, static_cast<std::size_t>(r.label) + 1);
    }
    std::vector<double> sums(classes, 0.0);
    for (const auto& r : records) sums[static_cast<std::size_t>(r.label)] += r.weight;
    return sums;
}

}  // namespace virlab
