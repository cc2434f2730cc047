#include "virlab/gmm.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "virlab/error.hpp"
#include "virlab/random.hpp"

namespace virlab::gmm {

void GmmSpec::validate() const {
    if (d < 1) throw ConfigError("gmm: d must be >= 1");
    if (!(eta > 0.0)) throw ConfigError("gmm: eta must be > 0");
    if (!(sigma > 0.0)) throw ConfigError("gmm: sigma must be > 0");
    if (!(k_var > 0.0)) throw ConfigError("gmm: k_var must be > 0");
    if (!(prior > 0.0 && prior < 1.0)) throw ConfigError("gmm: prior must lie in (0, 1)");
}

double GmmSpec::mean_norm() const { return std::sqrt(static_cast<double>(d)) * eta; }

GmmSample sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw ConfigError("gmm: n must be >= 1");
    Rng rng(mix_seed(seed));
    std::bernoulli_distribution label(spec.prior);
    std::normal_distribution<double> normal(0.0, 1.0);
    GmmSample s;
    s.d = spec.d;
    s.labels.resize(n);
    s.features.resize(n * static_cast<std::size_t>(spec.d));
    for (std::size_t i = 0; i < n; ++i) {
        const int y = label(rng) ? 1 : -1;
        const double sd = y > 0 ? spec.sigma_plus() : spec.sigma_minus();
        s.labels[i] = y;
        for (int j = 0; j < spec.d; ++j)
            s.features[i * static_cast<std::size_t>(spec.d) + static_cast<std::size_t>(j)] =
                y * spec.eta + sd * normal(rng);
    }
    return s;
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

TheoremTerms theorem_terms(const GmmSpec& spec) {
    spec.validate();
    const double k = spec.k_var;
    if (!(k > 1.0)) throw DomainError("class risks require k_var > 1, got " + std::to_string(k));
    TheoremTerms t;
    const double k2m1 = k * k - 1.0;
    t.a = (2.0 / k2m1) * spec.mean_norm() / spec.sigma;
    t.q = 2.0 * std::log(k) / k2m1;
    t.root = std::sqrt(t.a * t.a + t.q);
    return t;
}

ClassRisks theorem1_risks(const GmmSpec& spec) {
    const auto t = theorem_terms(spec);
    const double k = spec.k_var;
    return {std_normal_cdf(t.a - k * t.root), std_normal_cdf(-k * t.a + t.root)};
}

int LinearClassifier::predict(std::span<const double> x) const {
    if (x.size() != omega.size()) throw ShapeError("linear classifier dimension mismatch");
    double z = b;
    for (std::size_t i = 0; i < x.size(); ++i) z += omega[i] * x[i];
    return z >= 0.0 ? 1 : -1;
}

double threshold_from_plus(const GmmSpec& spec) {
    const auto t = theorem_terms(spec);
    const double k = spec.k_var;
    return spec.mean_norm() + k * spec.sigma * (-k * t.a + t.root);
}

double threshold_from_minus(const GmmSpec& spec) {
    const auto t = theorem_terms(spec);
    const double k = spec.k_var;
    return -spec.mean_norm() + spec.sigma * (-t.a + k * t.root);
}

LinearClassifier optimal_linear(const GmmSpec& spec) {
    LinearClassifier clf;
    const double norm = spec.mean_norm();
    clf.omega.assign(static_cast<std::size_t>(spec.d), spec.eta / norm);
    clf.b = -threshold_from_plus(spec);
    return clf;
}

ClassRisks linear_classifier_risks(const LinearClassifier& clf, const GmmSpec& spec) {
    spec.validate();
    if (clf.omega.size() != static_cast<std::size_t>(spec.d)) throw ShapeError("linear classifier dimension mismatch");
    double proj_mu = 0.0, norm2 = 0.0;
    for (double w : clf.omega) {
        proj_mu += w * spec.eta;
        norm2 += w * w;
    }
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) {
        // Constant classifier: predicts +1 iff b >= 0.
        return clf.b >= 0.0 ? ClassRisks{1.0, 0.0} : ClassRisks{0.0, 1.0};
    }
    // z = <w,x> + b; class +1: N(proj_mu + b, (K sigma |w|)^2), class -1: N(-proj_mu + b, (sigma |w|)^2).
    const double r_plus = std_normal_cdf(-(proj_mu + clf.b) / (spec.sigma_plus() * norm));
    const double r_minus = std_normal_cdf((-proj_mu + clf.b) / (spec.sigma_minus() * norm));
    return {r_minus, r_plus};
}

RiskEstimate monte_carlo_risks(const LinearClassifier& clf, const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 10000) throw ConfigError("monte_carlo_risks: n must be >= 10^4");
    spec.validate();
    if (clf.omega.size() != static_cast<std::size_t>(spec.d)) throw ShapeError("linear classifier dimension mismatch");
    // Stream the draws instead of materializing n x d features.
    Rng rng(mix_seed(seed));
    std::bernoulli_distribution label(spec.prior);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(static_cast<std::size_t>(spec.d));
    std::size_t err_minus = 0, err_plus = 0;
    RiskEstimate r;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = label(rng) ? 1 : -1;
        const double sd = y > 0 ? spec.sigma_plus() : spec.sigma_minus();
        for (auto& v : x) v = y * spec.eta + sd * normal(rng);
        const int pred = clf.predict(x);
        if (y > 0) {
            ++r.n_plus;
            err_plus += pred != 1;
        } else {
            ++r.n_minus;
            err_minus += pred != -1;
        }
    }
    if (r.n_minus == 0 || r.n_plus == 0) throw NumericError("monte_carlo_risks: a class is absent from the sample");
    r.minus = static_cast<double>(err_minus) / static_cast<double>(r.n_minus);
    r.plus = static_cast<double>(err_plus) / static_cast<double>(r.n_plus);
    r.se_minus = std::sqrt(r.minus * (1.0 - r.minus) / static_cast<double>(r.n_minus));
    r.se_plus = std::sqrt(r.plus * (1.0 - r.plus) / static_cast<double>(r.n_plus));
    return r;
}

double true_class_posterior(const GmmSpec& spec, std::span<const double> x, int label) {
    if (x.size() != static_cast<std::size_t>(spec.d)) throw ShapeError("posterior: dimension mismatch");
    if (label != 1 && label != -1) throw DomainError("posterior: label must be +-1");
    double dp = 0.0, dm = 0.0;
    for (double v : x) {
        dp += (v - spec.eta) * (v - spec.eta);
        dm += (v + spec.eta) * (v + spec.eta);
    }
    const double sp = spec.sigma_plus(), sm = spec.sigma_minus();
    const double d = static_cast<double>(spec.d);
    const double log_plus = std::log(spec.prior) - d * std::log(sp) - dp / (2.0 * sp * sp);
    const double log_minus = std::log(1.0 - spec.prior) - d * std::log(sm) - dm / (2.0 * sm * sm);
    // P(+1 | x) = sigmoid(log_plus - log_minus), evaluated stably.
    const double z = log_plus - log_minus;
    const double p_plus = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return label == 1 ? p_plus : 1.0 - p_plus;
}

CorollaryReport corollary_check(const GmmSpec& spec, std::size_t n, std::uint64_t seed) {
    const auto risks = theorem1_risks(spec);
    CorollaryReport rep;
    rep.p_minus = 1.0 - risks.minus;
    rep.p_plus = 1.0 - risks.plus;
    rep.closed_form_ordering = rep.p_minus > rep.p_plus;

    const auto sample = sample_gmm(spec, n, seed);
    double sum_plus = 0.0, sum_minus = 0.0;
    std::size_t n_plus = 0, n_minus = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double p = true_class_posterior(spec, sample.row(i), sample.labels[i]);
        if (sample.labels[i] > 0) {
            sum_plus += p;
            ++n_plus;
        } else {
            sum_minus += p;
            ++n_minus;
        }
    }
    if (n_plus == 0 || n_minus == 0) throw NumericError("corollary_check: a class is absent from the sample");
    rep.mean_posterior_plus = sum_plus / static_cast<double>(n_plus);
    rep.mean_posterior_minus = sum_minus / static_cast<double>(n_minus);
    rep.posterior_ordering = rep.mean_posterior_plus < rep.mean_posterior_minus;
    return rep;
}

}  // namespace virlab::gmm
