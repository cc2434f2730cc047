#pragma once

// l-infinity attacks on a Classifier. All functions work on a batch
// [n, d] and are pure in (model, inputs, spec): every sample draws its random
// numbers from its own stream seeded by spec.seed xor its row index, so a
// sample's result depends only on its own row and position, never on the
// other rows of the batch.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "virlab/classifier.hpp"
#include "virlab/random.hpp"
#include "virlab/tensor.hpp"

namespace virlab {

enum class AttackFamily { FGSM, PGD, CW_PGD, SPSA };
enum class LossMode { CE, KL, CW_MARGIN };

struct Bounds {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const Bounds&) const = default;
};

struct AttackSpec {
    std::string name = "pgd";
    AttackFamily family = AttackFamily::PGD;
    double epsilon = 8.0 / 255.0;
    double step_size = 2.0 / 255.0;
    int iterations = 10;
    LossMode loss_mode = LossMode::CE;
    std::optional<Bounds> bounds = Bounds{};
    bool random_start = true;
    double start_noise = 0.001;
    int spsa_samples = 256;
    double spsa_perturb = 0.001;
    double spsa_lr = 0.01;
    std::uint64_t seed = 0;

    /// epsilon == 0 is accepted and makes every attack the identity.
    void validate() const;

    static AttackSpec fgsm(double epsilon);
    static AttackSpec pgd(double epsilon, double step_size, int iterations);
    static AttackSpec cw_pgd(double epsilon, double step_size, int iterations);
    static AttackSpec spsa(double epsilon, int iterations);
};

std::string to_string(AttackFamily f);
std::string to_string(LossMode m);
AttackFamily attack_family_from_string(const std::string& s);
LossMode loss_mode_from_string(const std::string& s);

/// Clamp each coordinate into [x_nat - eps, x_nat + eps], then into bounds.
Tensor project_linf(const Tensor& x_adv, const Tensor& x_nat, double epsilon, const std::optional<Bounds>& bounds);

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec);

/// CE or KL (against detached `reference_probs`) inner maximization.
Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec,
           const Tensor& reference_probs = {});

struct PgdTrace {
    Tensor x_adv;
    /// Per sample: first PGD iteration at which the prediction leaves y;
    /// 0 if the natural input is already misclassified, K if never.
    std::vector<int> min_steps;
};

/// CE-mode PGD that also records the least number of steps to misclassify.
PgdTrace pgd_with_steps(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec);

std::vector<int> min_pgd_steps(const Classifier& model, const Tensor& x, std::span<const int> y,
                               const AttackSpec& spec);

/// PGD on the margin max_{j != y} z_j - z_y with confidence 0.
Tensor cw_pgd(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec);

/// Black-box: only Classifier::forward is evaluated.
Tensor spsa(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec);

/// Two-point SPSA gradient estimate of a scalar function, averaged over
/// `samples` Rademacher directions.
std::vector<double> spsa_gradient_estimate(const std::function<double(std::span<const double>)>& loss,
                                           std::span<const double> x, double perturb, int samples, Rng& rng);

/// Dispatch on spec.family.
Tensor run_attack(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec,
                  const Tensor& reference_probs = {});

}  // namespace virlab
