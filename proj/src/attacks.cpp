#include "virlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "virlab/error.hpp"

namespace virlab {

void AttackSpec::validate() const {
    if (!std::isfinite(epsilon) || epsilon < 0.0) throw ConfigError("attack '" + name + "': epsilon must be >= 0");
    if (!(step_size > 0.0)) throw ConfigError("attack '" + name + "': step_size must be > 0");
    if (iterations < 1) throw ConfigError("attack '" + name + "': iterations must be >= 1");
    if (bounds && !(bounds->lo < bounds->hi)) throw ConfigError("attack '" + name + "': bounds must satisfy lo < hi");
    if (!(start_noise >= 0.0)) throw ConfigError("attack '" + name + "': start_noise must be >= 0");
    if (loss_mode == LossMode::KL && family != AttackFamily::PGD)
        throw ConfigError("attack '" + name + "': KL loss is only defined for PGD");
    if (family == AttackFamily::SPSA) {
        if (spsa_samples < 2) throw ConfigError("attack '" + name + "': spsa_samples must be >= 2");
        if (!(spsa_perturb > 0.0) || !(spsa_lr > 0.0))
            throw ConfigError("attack '" + name + "': spsa_perturb and spsa_lr must be > 0");
    }
}

AttackSpec AttackSpec::fgsm(double epsilon) {
    AttackSpec s;
    s.name = "fgsm";
    s.family = AttackFamily::FGSM;
    s.epsilon = epsilon;
    s.step_size = epsilon > 0.0 ? epsilon : 1.0;
    s.iterations = 1;
    return s;
}

AttackSpec AttackSpec::pgd(double epsilon, double step_size, int iterations) {
    AttackSpec s;
    s.name = "pgd" + std::to_string(iterations);
    s.epsilon = epsilon;
    s.step_size = step_size;
    s.iterations = iterations;
    return s;
}

AttackSpec AttackSpec::cw_pgd(double epsilon, double step_size, int iterations) {
    AttackSpec s = pgd(epsilon, step_size, iterations);
    s.name = "cw" + std::to_string(iterations);
    s.family = AttackFamily::CW_PGD;
    s.loss_mode = LossMode::CW_MARGIN;
    return s;
}

AttackSpec AttackSpec::spsa(double epsilon, int iterations) {
    AttackSpec s;
    s.name = "spsa";
    s.family = AttackFamily::SPSA;
    s.epsilon = epsilon;
    s.iterations = iterations;
    s.random_start = false;
    return s;
}

std::string to_string(AttackFamily f) {
    switch (f) {
        case AttackFamily::FGSM: return "FGSM";
        case AttackFamily::PGD: return "PGD";
        case AttackFamily::CW_PGD: return "CW_PGD";
        case AttackFamily::SPSA: return "SPSA";
    }
    return "?";
}

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::CE: return "CE";
        case LossMode::KL: return "KL";
        case LossMode::CW_MARGIN: return "CW_MARGIN";
    }
    return "?";
}

AttackFamily attack_family_from_string(const std::string& s) {
    if (s == "FGSM") return AttackFamily::FGSM;
    if (s == "PGD") return AttackFamily::PGD;
    if (s == "CW_PGD") return AttackFamily::CW_PGD;
    if (s == "SPSA") return AttackFamily::SPSA;
    throw ConfigError("unknown attack family '" + s + "'");
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "CE") return LossMode::CE;
    if (s == "KL") return LossMode::KL;
    if (s == "CW_MARGIN") return LossMode::CW_MARGIN;
    throw ConfigError("unknown loss mode '" + s + "'");
}

namespace {

void require_batch(const Tensor& x, std::span<const int> y, const Classifier& model) {
    if (x.rank() != 2 || x.dim(1) != model.input_dim())
        throw ShapeError("attack input must be [n, " + std::to_string(model.input_dim()) + "]");
    if (y.size() != x.dim(0)) throw ShapeError("attack: label count does not match batch size");
}

inline double sign_of(double g) { return static_cast<double>((g > 0.0) - (g < 0.0)); }

// Gradient of the summed per-sample attack loss w.r.t. the input batch. With a
// summed loss each row's gradient depends only on that row.
std::vector<double> input_gradient(const Classifier& frozen, const std::vector<double>& x_cur, const Shape& shape,
                                   std::span<const int> y, LossMode mode, const Tensor& reference_probs) {
    Tensor xt(shape, x_cur, true);
    Tensor logits = frozen.forward(xt);
    Tensor per_sample;
    switch (mode) {
        case LossMode::CE: per_sample = cross_entropy_per_sample(logits, y); break;
        case LossMode::CW_MARGIN: per_sample = cw_margin(logits, y); break;
        case LossMode::KL:
            // KL(ref || p) minus the constant entropy of ref; same gradient.
            per_sample = scale(row_sum(mul(reference_probs, log_softmax(logits))), -1.0);
            break;
    }
    backward(sum(per_sample));
    auto g = xt.grad();
    return std::vector<double>(g.begin(), g.end());
}

std::vector<double> gaussian_start(const Tensor& x, const AttackSpec& spec) {
    std::vector<double> out(x.data().begin(), x.data().end());
    if (!spec.random_start || spec.start_noise == 0.0) return out;
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = sample_rng(spec.seed, i);
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] += spec.start_noise * normal(rng);
    }
    return out;
}

void project_in_place(std::vector<double>& x_adv, std::span<const double> x_nat, double epsilon,
                      const std::optional<Bounds>& bounds) {
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
        double v = std::clamp(x_adv[i], x_nat[i] - epsilon, x_nat[i] + epsilon);
        if (bounds) v = std::clamp(v, bounds->lo, bounds->hi);
        x_adv[i] = v;
    }
}

struct PgdRun {
    std::vector<double> x_adv;
    std::vector<int> min_steps;
};

PgdRun run_pgd(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec,
               LossMode mode, const Tensor& reference_probs, bool track_steps) {
    spec.validate();
    require_batch(x, y, model);
    const auto frozen = model.frozen();
    const std::size_t n = x.dim(0);
    PgdRun run;
    if (track_steps) {
        run.min_steps.assign(n, -1);
        const auto pred = argmax_rows(frozen.forward(x.detach()));
        for (std::size_t i = 0; i < n; ++i)
            if (pred[i] != y[i]) run.min_steps[i] = 0;
    }
    if (spec.epsilon == 0.0) {
        run.x_adv.assign(x.data().begin(), x.data().end());
        for (auto& k : run.min_steps)
            if (k < 0) k = spec.iterations;
        return run;
    }

    auto x_nat = x.data();
    run.x_adv = gaussian_start(x, spec);
    for (int k = 1; k <= spec.iterations; ++k) {
        const auto g = input_gradient(frozen, run.x_adv, x.shape(), y, mode, reference_probs);
        for (std::size_t i = 0; i < g.size(); ++i) run.x_adv[i] += spec.step_size * sign_of(g[i]);
        project_in_place(run.x_adv, x_nat, spec.epsilon, spec.bounds);
        if (track_steps) {
            const auto pred = argmax_rows(frozen.forward(Tensor(x.shape(), run.x_adv)));
            for (std::size_t i = 0; i < n; ++i)
                if (run.min_steps[i] < 0 && pred[i] != y[i]) run.min_steps[i] = k;
        }
    }
    for (auto& k : run.min_steps)
        if (k < 0) k = spec.iterations;
    return run;
}

// Per-sample black-box loss for every row of `points`, all belonging to class y.
std::vector<double> black_box_losses(const Classifier& frozen, const Tensor& points, int y, LossMode mode) {
    std::vector<int> labels(points.dim(0), y);
    Tensor logits = frozen.forward(points);
    Tensor per_sample = mode == LossMode::CW_MARGIN ? cw_margin(logits, labels)
                                                    : cross_entropy_per_sample(logits, labels);
    return std::vector<double>(per_sample.data().begin(), per_sample.data().end());
}

std::vector<double> spsa_estimate_batched(const std::function<std::vector<double>(const Tensor&)>& batch_loss,
                                          std::span<const double> x, double perturb, int samples, Rng& rng) {
    const std::size_t d = x.size();
    const auto s = static_cast<std::size_t>(samples);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> dirs(s * d);
    for (auto& v : dirs) v = coin(rng) ? 1.0 : -1.0;
    std::vector<double> points(2 * s * d);
    for (std::size_t k = 0; k < s; ++k)
        for (std::size_t j = 0; j < d; ++j) {
            points[(2 * k) * d + j] = x[j] + perturb * dirs[k * d + j];
            points[(2 * k + 1) * d + j] = x[j] - perturb * dirs[k * d + j];
        }
    const auto losses = batch_loss(Tensor({2 * s, d}, std::move(points)));
    std::vector<double> g(d, 0.0);
    for (std::size_t k = 0; k < s; ++k) {
        const double slope = (losses[2 * k] - losses[2 * k + 1]) / (2.0 * perturb);
        // Rademacher directions are their own inverse.
        for (std::size_t j = 0; j < d; ++j) g[j] += slope * dirs[k * d + j];
    }
    for (auto& v : g) v /= static_cast<double>(s);
    return g;
}

}  // namespace

Tensor project_linf(const Tensor& x_adv, const Tensor& x_nat, double epsilon, const std::optional<Bounds>& bounds) {
    if (!(epsilon > 0.0)) throw ConfigError("project_linf: epsilon must be > 0");
    if (x_adv.shape() != x_nat.shape()) throw ShapeError("project_linf: shape mismatch");
    std::vector<double> out(x_adv.data().begin(), x_adv.data().end());
    project_in_place(out, x_nat.data(), epsilon, bounds);
    return Tensor(x_adv.shape(), std::move(out));
}

Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec) {
    spec.validate();
    require_batch(x, y, model);
    if (spec.epsilon == 0.0) return x.detach();
    const auto frozen = model.frozen();
    std::vector<double> cur(x.data().begin(), x.data().end());
    const auto g = input_gradient(frozen, cur, x.shape(), y, LossMode::CE, {});
    for (std::size_t i = 0; i < cur.size(); ++i) {
        double v = cur[i] + spec.epsilon * sign_of(g[i]);
        if (spec.bounds) v = std::clamp(v, spec.bounds->lo, spec.bounds->hi);
        cur[i] = v;
    }
    return Tensor(x.shape(), std::move(cur));
}

Tensor pgd(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec,
           const Tensor& reference_probs) {
    LossMode mode = spec.loss_mode;
    if (mode == LossMode::KL) {
        if (!reference_probs.defined())
            throw ConfigError("PGD with KL loss requires reference (natural) probabilities");
        if (reference_probs.shape() != Shape{x.dim(0), model.num_classes()})
            throw ShapeError("reference probabilities must be [n, C]");
    }
    auto run = run_pgd(model, x, y, spec, mode, reference_probs.defined() ? reference_probs.detach() : Tensor{}, false);
    return Tensor(x.shape(), std::move(run.x_adv));
}

PgdTrace pgd_with_steps(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec) {
    auto run = run_pgd(model, x, y, spec, LossMode::CE, {}, true);
    return {Tensor(x.shape(), std::move(run.x_adv)), std::move(run.min_steps)};
}

std::vector<int> min_pgd_steps(const Classifier& model, const Tensor& x, std::span<const int> y,
                               const AttackSpec& spec) {
    return pgd_with_steps(model, x, y, spec).min_steps;
}

Tensor cw_pgd(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec) {
    auto run = run_pgd(model, x, y, spec, LossMode::CW_MARGIN, {}, false);
    return Tensor(x.shape(), std::move(run.x_adv));
}

std::vector<double> spsa_gradient_estimate(const std::function<double(std::span<const double>)>& loss,
                                           std::span<const double> x, double perturb, int samples, Rng& rng) {
    if (samples < 2) throw ConfigError("spsa: samples must be >= 2");
    auto batch_loss = [&](const Tensor& points) {
        std::vector<double> out(points.dim(0));
        for (std::size_t r = 0; r < out.size(); ++r) out[r] = loss(points.row(r));
        return out;
    };
    return spsa_estimate_batched(batch_loss, x, perturb, samples, rng);
}

Tensor spsa(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec) {
    spec.validate();
    require_batch(x, y, model);
    if (spec.epsilon == 0.0) return x.detach();
    const LossMode mode = spec.loss_mode == LossMode::CW_MARGIN ? LossMode::CW_MARGIN : LossMode::CE;
    const auto frozen = model.frozen();
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.data().begin(), x.data().end());

    // Adam ascent on the estimated gradient.
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = sample_rng(spec.seed, i);
        const auto x_nat = x.row(i);
        std::vector<double> cur(x_nat.begin(), x_nat.end());
        std::vector<double> m(d, 0.0), v(d, 0.0);
        auto batch_loss = [&](const Tensor& points) { return black_box_losses(frozen, points, y[i], mode); };
        for (int t = 1; t <= spec.iterations; ++t) {
            const auto g = spsa_estimate_batched(batch_loss, cur, spec.spsa_perturb, spec.spsa_samples, rng);
            const double c1 = 1.0 - std::pow(kBeta1, t), c2 = 1.0 - std::pow(kBeta2, t);
            for (std::size_t j = 0; j < d; ++j) {
                m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
                v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
                cur[j] += spec.spsa_lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + kAdamEps);
            }
            project_in_place(cur, x_nat, spec.epsilon, spec.bounds);
        }
        std::copy(cur.begin(), cur.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return Tensor(x.shape(), std::move(out));
}

Tensor run_attack(const Classifier& model, const Tensor& x, std::span<const int> y, const AttackSpec& spec,
                  const Tensor& reference_probs) {
    switch (spec.family) {
        case AttackFamily::FGSM: return fgsm(model, x, y, spec);
        case AttackFamily::PGD: return pgd(model, x, y, spec, reference_probs);
        case AttackFamily::CW_PGD: return cw_pgd(model, x, y, spec);
        case AttackFamily::SPSA: return spsa(model, x, y, spec);
    }
    throw ConfigError("unknown attack family");
}

}  // namespace virlab
