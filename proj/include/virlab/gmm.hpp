#pragma once

// Two-class Gaussian mixture with unequal class variances and the class-wise
// natural risk of the optimal linear classifier.
//
// Labels are +-1 here. Class +1 ~ N(mu, (K sigma)^2 I), class -1 ~ N(-mu, sigma^2 I),
// mu = (eta, ..., eta) in R^d.

#include <cstdint>
#include <span>
#include <vector>

namespace virlab::gmm {

struct GmmSpec {
    int d = 4;
    double eta = 1.0;
    double sigma = 2.0;
    double k_var = 2.0;
    double prior = 0.5;  // P(y = +1)

    /// ConfigError unless d >= 1, eta > 0, sigma > 0, prior in (0, 1). k_var is
    /// checked by the closed forms (DomainError for k_var <= 1).
    void validate() const;
    double sigma_plus() const { return k_var * sigma; }
    double sigma_minus() const { return sigma; }
    double mean_norm() const;  // sqrt(d) * eta
};

struct GmmSample {
    int d = 0;
    std::vector<double> features;  // row-major [n, d]
    std::vector<int> labels;       // +-1

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * static_cast<std::size_t>(d), static_cast<std::size_t>(d));
    }
};

GmmSample sample_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed);

/// Phi(z) via erfc; absolute error far below 1e-12.
double std_normal_cdf(double z);

struct TheoremTerms {
    double a = 0.0;     // (2 / (K^2 - 1)) sqrt(d) eta / sigma
    double q = 0.0;     // 2 ln K / (K^2 - 1)
    double root = 0.0;  // sqrt(a^2 + q)
};

TheoremTerms theorem_terms(const GmmSpec& spec);

struct ClassRisks {
    double minus = 0.0;  // R-: class -1 misclassified
    double plus = 0.0;   // R+: class +1 misclassified
};

/// R- = Phi(A - K sqrt(A^2 + q)), R+ = Phi(-K A + sqrt(A^2 + q)).
ClassRisks theorem1_risks(const GmmSpec& spec);

/// sign(<omega, x> + b) with sign(0) = +1.
struct LinearClassifier {
    std::vector<double> omega;
    double b = 0.0;

    int predict(std::span<const double> x) const;
};

/// Decision threshold c along mu/|mu| derived from the class +1 risk.
double threshold_from_plus(const GmmSpec& spec);
/// The same threshold derived from the class -1 risk.
double threshold_from_minus(const GmmSpec& spec);

/// omega = mu / |mu|, b = -c.
LinearClassifier optimal_linear(const GmmSpec& spec);

/// Exact class-wise risks of any linear classifier (projections of Gaussians are Gaussian).
ClassRisks linear_classifier_risks(const LinearClassifier& clf, const GmmSpec& spec);

struct RiskEstimate {
    double minus = 0.0;
    double plus = 0.0;
    double se_minus = 0.0;
    double se_plus = 0.0;
    std::size_t n_minus = 0;
    std::size_t n_plus = 0;
};

/// Class-conditional misclassification frequencies with binomial standard errors.
/// n >= 10^4; EvaluationError-style NumericError if a class is absent.
RiskEstimate monte_carlo_risks(const LinearClassifier& clf, const GmmSpec& spec, std::size_t n, std::uint64_t seed);

/// Posterior P(y = label | x) under the mixture density.
double true_class_posterior(const GmmSpec& spec, std::span<const double> x, int label);

struct CorollaryReport {
    double p_minus = 0.0;  // 1 - R-
    double p_plus = 0.0;   // 1 - R+
    bool closed_form_ordering = false;          // P- > P+
    double mean_posterior_minus = 0.0;          // Monte Carlo mean true-class posterior, class -1
    double mean_posterior_plus = 0.0;
    bool posterior_ordering = false;            // class +1 more vulnerable on average
    bool holds() const { return closed_form_ordering && posterior_ordering; }
};

CorollaryReport corollary_check(const GmmSpec& spec, std::size_t n = 20000, std::uint64_t seed = 0);

}  // namespace virlab::gmm
