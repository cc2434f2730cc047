#pragma once

#include <span>
#include <vector>

#include "virlab/classifier.hpp"

namespace virlab {

struct OptimizerConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 3.5e-3;
    /// 1-indexed epochs at whose start the rate is divided by decay_factor.
    std::vector<int> milestones{75, 90};
    double decay_factor = 10.0;

    void validate(int epochs) const;
};

/// base_lr / decay_factor^(number of milestones <= epoch).
double lr_at(int epoch, const OptimizerConfig& config);

/// v <- momentum v + (grad + weight_decay param); param <- param - lr v.
void sgd_step(std::span<double> param, std::span<const double> grad, double lr, double momentum, double weight_decay,
              std::span<double> velocity);

/// Momentum SGD over all parameters of a classifier, owning the velocity buffers.
class SgdMomentum {
public:
    SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

    /// StateError if a parameter has no gradient.
    void step(Classifier& model, double lr);

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

}  // namespace virlab
