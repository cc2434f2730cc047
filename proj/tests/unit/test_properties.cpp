// Sampled properties of attacks, objectives, data and short training runs.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "virlab/attacks.hpp"
#include "virlab/config.hpp"
#include "virlab/data.hpp"
#include "virlab/gmm.hpp"
#include "virlab/objectives.hpp"
#include "virlab/train.hpp"

using namespace virlab;

namespace {

Tensor uniform_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n * d);
    for (auto& x : v) x = u(rng);
    return Tensor({n, d}, v);
}

double ce_sum(const Classifier& m, const Tensor& x, const std::vector<int>& y) {
    return cross_entropy(m.forward(x), y).item();
}

// Two Gaussian classes, small enough to train in well under a second.
TrainConfig two_class_config(double separation, double eps, std::uint64_t seed) {
    TrainConfig c = desk_profile();
    c.seed = seed;
    c.epochs = 20;
    c.optimizer.milestones = {15};
    c.batch_size = 64;
    c.hidden = {16};
    c.data.seed = 40 + seed;
    c.data.multiclass.variances = {1.0, 1.0};
    c.data.multiclass.separation = separation;
    c.data.multiclass.d = 4;
    c.data.multiclass.train_per_class = 200;
    c.data.multiclass.test_per_class = 200;
    c.objective.family = ObjectiveFamily::AT;
    c.objective.weight_scheme = WeightScheme::uniform();
    c.attack_train = AttackSpec::pgd(eps, 0.125, 10);
    c.attack_train.bounds.reset();
    auto pgd10 = AttackSpec::pgd(eps > 0.0 ? eps : 0.5, (eps > 0.0 ? eps : 0.5) / 4.0, 10);
    pgd10.name = "pgd10";
    pgd10.bounds.reset();
    c.attack_eval = {pgd10};
    c.logging.eval_every = c.epochs;
    c.logging.weights_every = 0;
    return c;
}

}  // namespace

TEST_CASE("fgsm on a 1-d logistic model steps against the positive weight") {
    // z = (0, 2x): class 1 gains with x, so the attack lowers x.
    const auto m = make_classifier(Architecture{{1, 2}}, {{0.0, 2.0}}, {{0.0, 0.0}});
    auto spec = AttackSpec::fgsm(0.1);
    spec.bounds.reset();
    const Tensor adv = fgsm(m, Tensor({1, 1}, {0.3}), std::vector<int>{1}, spec);
    CHECK(adv[0] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("fgsm raises the loss of random linear models") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int raised = 0;
    const int cases = 500;
    for (int t = 0; t < cases; ++t) {
        const std::size_t d = 1 + rng() % 6;
        const auto m = init_classifier(Architecture{{d, 2}}, rng());
        std::vector<double> xs(d);
        for (auto& v : xs) v = u(rng);
        const Tensor x({1, d}, xs);
        const std::vector<int> y{static_cast<int>(rng() % 2)};
        auto spec = AttackSpec::fgsm(0.01 + 0.3 * std::abs(u(rng)));
        spec.bounds.reset();
        raised += ce_sum(m, fgsm(m, x, y, spec), y) >= ce_sum(m, x, y);
    }
    CHECK(raised >= cases * 95 / 100);
}

TEST_CASE("pgd-10 reaches at least the fgsm loss on a linear model") {
    const auto m = init_classifier(Architecture{{6, 2}}, 5);
    const Tensor x = uniform_batch(64, 6, 6);
    std::vector<int> y(64);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    auto f = AttackSpec::fgsm(0.1);
    auto p = AttackSpec::pgd(0.1, 0.025, 10);
    f.bounds.reset();
    p.bounds.reset();
    p.seed = 3;
    const Tensor xf = fgsm(m, x, y, f), xp = pgd(m, x, y, p);
    const Tensor lf = cross_entropy_per_sample(m.forward(xf), y), lp = cross_entropy_per_sample(m.forward(xp), y);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(lp[i] >= lf[i] - 1e-12);
}

TEST_CASE("a larger budget never needs more pgd steps") {
    // z = (x0 - 0.5, 0.5 - x0); fixed step and no random start keep the path shared.
    const auto m = make_classifier(Architecture{{2, 2}}, {{1.0, -1.0, 0.0, 0.0}}, {{-0.5, 0.5}});
    std::vector<double> xs;
    for (int i = 0; i < 40; ++i) {
        xs.push_back(0.5 + 0.01 * i);
        xs.push_back(0.3);
    }
    const Tensor x({40, 2}, xs);
    const std::vector<int> y(40, 0);
    std::vector<int> prev(40, 1 << 20);
    for (double eps : {0.02, 0.05, 0.1, 0.2, 0.3, 0.5}) {
        auto spec = AttackSpec::pgd(eps, 0.02, 30);
        spec.random_start = false;
        spec.bounds.reset();
        const auto k = min_pgd_steps(m, x, y, spec);
        for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] <= prev[i]);
        prev = k;
    }
}

TEST_CASE("cw-pgd-20 misclassifies at least as often as fgsm on a 3-class linear model") {
    const auto m = init_classifier(Architecture{{5, 3}}, 17);
    const Tensor x = uniform_batch(600, 5, 18);
    const auto y = argmax_rows(m.forward(x));
    auto f = AttackSpec::fgsm(0.15);
    auto c = AttackSpec::cw_pgd(0.15, 0.15 / 8.0, 20);
    c.seed = 4;
    const auto rate = [&](const Tensor& xa) {
        const auto p = argmax_rows(m.forward(xa));
        double wrong = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) wrong += p[i] != y[i];
        return wrong / static_cast<double>(p.size());
    };
    const double r_f = rate(fgsm(m, x, y, f)), r_c = rate(cw_pgd(m, x, y, c));
    CHECK(r_f > 0.0);
    CHECK(r_c >= r_f);
}

TEST_CASE("spsa estimate aligns with the gradient of a quadratic") {
    const std::vector<double> a{1.0, 2.0, 0.5, 3.0, 1.5}, b{0.3, -0.2, 0.1, 0.0, -0.4};
    const auto loss = [&](std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * x[i] * x[i] + b[i] * x[i];
        return s;
    };
    const std::vector<double> x{0.2, -0.1, 0.4, 0.05, 0.3};
    Rng rng(9);
    const auto g = spsa_gradient_estimate(loss, x, 1e-3, 10000, rng);
    double dot = 0.0, ng = 0.0, nt = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = 2.0 * a[i] * x[i] + b[i];
        dot += g[i] * t;
        ng += g[i] * g[i];
        nt += t * t;
    }
    CHECK(dot / std::sqrt(ng * nt) > 0.95);
}

TEST_CASE("weighted objectives match per-sample sums") {
    const auto model = init_classifier(Architecture{{3, 6, 2}}, 31);
    const Tensor x = uniform_batch(2, 3, 32), xa = uniform_batch(2, 3, 33);
    const std::vector<int> y{0, 1};
    const Tensor ce_adv = cross_entropy_per_sample(model.forward(xa), y);
    CHECK(std::abs(vir_at_loss(model, xa, y, std::vector<double>{2.0, 0.0}).item() - ce_adv[0]) <= 1e-12);

    const Tensor ce = cross_entropy_per_sample(model.forward(x), y);
    const Tensor kl = kl_from_logits(model.forward(x), model.forward(xa));
    const double t = 3.0;
    const double manual_tr = (ce[0] + t * kl[0] + ce[1] + t * kl[1]) / 2.0;
    CHECK(std::abs(trades_loss(model, x, xa, y, t).item() - manual_tr) <= 1e-12);
    const double manual_vtr = (ce[0] + ce[1] + t * 2.0 * kl[1]) / 2.0;
    CHECK(std::abs(vir_trades_loss(model, x, xa, y, t, std::vector<double>{0.0, 2.0}).item() - manual_vtr) <= 1e-12);

    const double big = 1e6;
    const double loss = trades_loss(model, x, xa, y, big).item();
    const double kl_mean = (kl[0] + kl[1]) / 2.0;
    CHECK(kl_mean > 0.0);
    CHECK(std::abs(loss - big * kl_mean) / loss < 1e-3);
}

TEST_CASE("class risks converge as the variances equalize") {
    const auto r = gmm::theorem1_risks({4, 1.0, 2.0, 1.0001, 0.5});
    CHECK(std::abs((1.0 - r.minus) - (1.0 - r.plus)) < 0.01);
}

TEST_CASE("synthetic variance ratio and per-epoch permutations") {
    const std::vector<std::size_t> n{10000, 10000};
    const std::vector<double> var{1.0, 4.0};
    const auto ds = synth_multiclass(2, n, var, 3.0, 3, 5);
    // Per-coordinate variance, averaged over coordinates.
    const std::size_t d = ds.dim();
    std::vector<double> s(2 * d, 0.0), s2(2 * d, 0.0), cnt(2, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto c = static_cast<std::size_t>(ds.labels[i]);
        cnt[c] += 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = ds.features.at(i, j);
            s[c * d + j] += v;
            s2[c * d + j] += v * v;
        }
    }
    const auto variance = [&](std::size_t c) {
        double v = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double m = s[c * d + j] / cnt[c];
            v += s2[c * d + j] / cnt[c] - m * m;
        }
        return v / static_cast<double>(d);
    };
    CHECK(variance(1) / variance(0) == doctest::Approx(4.0).epsilon(0.1));

    std::vector<std::vector<std::size_t>> perms;
    for (int e = 1; e <= 10; ++e) perms.push_back(epoch_permutation(100, 7, e));
    for (std::size_t i = 0; i < perms.size(); ++i)
        for (std::size_t j = i + 1; j < perms.size(); ++j) CHECK(perms[i] != perms[j]);
}

TEST_CASE("a linear model separates well-separated equal-variance classes") {
    auto c = two_class_config(10.0, 0.0, 1);
    c.hidden = {};
    const auto r = train(c);
    CHECK(r.final_eval.clean.accuracy > 0.99);
}

TEST_CASE("uniform adversarial training beats chance under attack") {
    const auto r = train(two_class_config(6.0, 1.0, 2));
    CHECK(r.final_eval.attacks[0].accuracy > 0.5);
}

TEST_CASE("robust accuracy does not exceed clean accuracy") {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const auto r = train(two_class_config(4.0, 0.5 * s, s));
        CAPTURE(s);
        CHECK(r.final_eval.attacks[0].accuracy <= r.final_eval.clean.accuracy);
    }
}

TEST_CASE("a dominant beta reduces VIR training to uniform training") {
    // Weights ~ beta scale the gradient; lr / beta and wd * beta undo the scale.
    const double beta = 1e5;
    const auto uniform = two_class_config(4.0, 1.0, 3);
    auto vir = uniform;
    vir.objective.family = ObjectiveFamily::VIR_AT;
    vir.objective.weight_scheme = WeightScheme::vir_at();
    vir.objective.weight_scheme.beta = beta;
    vir.objective.weight_scheme.burn_in_epoch = 0;
    vir.optimizer.base_lr /= beta;
    vir.optimizer.weight_decay *= beta;
    double max_score = 0.0;
    auto [tr, te] = load_data(vir.data);
    const auto rv = train(vir, tr, te, [&](int, std::size_t, const BatchWeights& bw) {
        for (const auto& rec : bw.records) max_score = std::max(max_score, rec.s_v * rec.s_d);
    });
    const auto ru = train(uniform, tr, te);
    CHECK(beta >= 100.0 * max_score);
    CHECK(std::abs(rv.final_eval.attacks[0].accuracy - ru.final_eval.attacks[0].accuracy) <= 0.02);
}
