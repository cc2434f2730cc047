#include "virlab/optim.hpp"

#include <cmath>
#include <string>

#include "virlab/error.hpp"

namespace virlab {

void OptimizerConfig::validate(int epochs) const {
    if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be > 0");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 1) throw ConfigError("milestones must be >= 1");
        if (i > 0 && milestones[i] <= milestones[i - 1]) throw ConfigError("milestones must be strictly increasing");
        if (milestones[i] >= epochs)
            throw ConfigError("milestone " + std::to_string(milestones[i]) + " is not below epochs = " +
                              std::to_string(epochs));
    }
}

double lr_at(int epoch, const OptimizerConfig& config) {
    int passed = 0;
    for (int m : config.milestones)
        if (m <= epoch) ++passed;
    return config.base_lr / std::pow(config.decay_factor, passed);
}

void sgd_step(std::span<double> param, std::span<const double> grad, double lr, double momentum, double weight_decay,
              std::span<double> velocity) {
    if (grad.size() != param.size() || velocity.size() != param.size())
        throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i]);
        param[i] -= lr * velocity[i];
    }
}

void SgdMomentum::step(Classifier& model, double lr) {
    auto params = model.parameters();
    if (velocity_.empty())
        for (const auto& p : params) velocity_.emplace_back(p.value.numel(), 0.0);
    if (velocity_.size() != params.size()) throw StateError("optimizer bound to a different model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].value;
        if (p.numel() > 0 && !p.has_grad()) throw StateError("parameter '" + params[i].name + "' has no gradient");
        sgd_step(p.mutable_data(), p.grad(), lr, momentum_, weight_decay_, velocity_[i]);
    }
}

}  // namespace virlab
