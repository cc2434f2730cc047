#include "virlab/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "virlab/error.hpp"
#include "virlab/random.hpp"

namespace virlab {

void Architecture::validate() const {
    if (widths.size() < 2) throw ConfigError("architecture needs an input and an output width");
    for (auto w : widths)
        if (w == 0) throw ConfigError("architecture widths must be positive");
}

namespace {

std::string weight_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".bias"; }

}  // namespace

Classifier::Classifier(Architecture arch, std::vector<NamedParameter> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.validate();
    if (params_.size() != 2 * arch_.num_layers())
        throw ShapeError("classifier expects " + std::to_string(2 * arch_.num_layers()) + " parameters, got " +
                         std::to_string(params_.size()));
    for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
        const auto& w = params_[2 * l];
        const auto& b = params_[2 * l + 1];
        if (w.name != weight_name(l) || b.name != bias_name(l))
            throw ShapeError("unexpected parameter names '" + w.name + "', '" + b.name + "'");
        if (w.value.shape() != Shape{arch_.widths[l], arch_.widths[l + 1]} ||
            b.value.shape() != Shape{arch_.widths[l + 1]})
            throw ShapeError("parameter shapes of layer " + std::to_string(l) + " disagree with architecture");
    }
}

std::size_t Classifier::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

const Tensor& Classifier::parameter(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.value;
    throw IndexError("no parameter named '" + name + "'");
}

Tensor Classifier::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim())
        throw ShapeError("classifier expects inputs of width " + std::to_string(input_dim()));
    Tensor h = x;
    for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
        h = add_bias(matmul(h, params_[2 * l].value), params_[2 * l + 1].value);
        if (l + 1 < arch_.num_layers()) h = relu(h);
    }
    return h;
}

std::vector<int> Classifier::predict(const Tensor& x) const { return argmax_rows(frozen().forward(x.detach())); }

Classifier Classifier::frozen() const {
    std::vector<NamedParameter> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back({p.name, p.value.detach()});
    return Classifier(arch_, std::move(params));
}

void Classifier::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

Classifier init_classifier(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(mix_seed(seed));
    std::vector<NamedParameter> params;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const std::size_t in = arch.widths[l], out = arch.widths[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(in * out);
        for (auto& v : w) v = dist(rng);
        params.push_back({weight_name(l), Tensor({in, out}, std::move(w), true)});
        params.push_back({bias_name(l), Tensor::zeros({out}, true)});
    }
    return Classifier(arch, std::move(params));
}

Classifier make_classifier(const Architecture& arch, std::vector<std::vector<double>> weights,
                           std::vector<std::vector<double>> biases) {
    arch.validate();
    if (weights.size() != arch.num_layers() || biases.size() != arch.num_layers())
        throw ShapeError("make_classifier: one weight and bias per layer required");
    std::vector<NamedParameter> params;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        params.push_back({weight_name(l), Tensor({arch.widths[l], arch.widths[l + 1]}, std::move(weights[l]), true)});
        params.push_back({bias_name(l), Tensor({arch.widths[l + 1]}, std::move(biases[l]), true)});
    }
    return Classifier(arch, std::move(params));
}

double true_class_prob(const Classifier& model, std::span<const double> x, int y) {
    Tensor row({1, x.size()}, std::vector<double>(x.begin(), x.end()));
    const int labels[] = {y};
    return true_class_probs(model, row, labels).front();
}

std::vector<double> true_class_probs(const Classifier& model, const Tensor& x, std::span<const int> y) {
    const auto picked = pick(softmax(model.frozen().forward(x.detach())), y);
    return std::vector<double>(picked.data().begin(), picked.data().end());
}

std::vector<std::size_t> vulnerability_ranking(std::span<const double> true_probs) {
    std::vector<std::size_t> idx(true_probs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return true_probs[a] < true_probs[b]; });
    return idx;
}

}  // namespace virlab
