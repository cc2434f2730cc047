// Acceptance gate: one line per criterion, non-zero exit if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "virlab/attacks.hpp"
#include "virlab/config.hpp"
#include "virlab/error.hpp"
#include "virlab/gmm.hpp"
#include "virlab/objectives.hpp"
#include "virlab/report.hpp"
#include "virlab/reweighting.hpp"
#include "virlab/train.hpp"

using namespace virlab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

// -- 1 ----------------------------------------------------------------------

Outcome weight_table() {
    struct Row {
        const char* what;
        double got;
        double want;
    };
    const std::vector<double> p75{0.75, 0.25}, p25{0.25, 0.75}, p91{0.9, 0.1}, half{0.5, 0.5}, one{1.0, 0.0};
    // High-precision references from tests/oracles/closed_forms.py.
    const std::vector<Row> rows{
        {"s_v(0.5; 7, 10)", s_v(0.5, 7.0, 10.0), 0.04716562899359827},
        {"s_v(1; 7, 10)", s_v(1.0, 7.0, 10.0), 0.00031779950833739396},
        {"s_v(0.5; 8, 3)", s_v(0.5, 8.0, 3.0), 1.7850412811874386},
        {"s_d([.75,.25] || [.25,.75])", s_d(p75, p25), 0.54930614433405485},
        {"s_d([.9,.1] || [.5,.5])", s_d(p91, half), 0.36806420716849707},
        {"s_d([.5,.5] || [.9,.1])", s_d(half, p91), 0.51082562376599068},
        {"s_d([1,0] || [.5,.5])", s_d(one, half), 0.69314718055994531},
        {"vir(7, 0.5, 0.007)", vir_weight(7.0, 0.5, 0.007), 3.507},
        {"vir-trades(s_v(0.5), ln2, 1.6)", vir_weight(s_v(0.5, 8.0, 3.0), std::log(2.0), 1.6), 2.8372963312381856},
        {"gairat(0; 10, -1)", gairat_weight(0, 10, -1.0), 0.99966464986953352},
        {"gairat(5; 10, -1)", gairat_weight(5, 10, -1.0), 0.11920292202211756},
        {"gairat(10; 10, -1)", gairat_weight(10, 10, -1.0), 6.1441746022147178e-6},
        {"mail(pm=1; 10, 0)", mail_weight(1.0, 10.0, 0.0), 4.5397868702434395e-5},
        {"mail(pm=-1; 10, 0)", mail_weight(-1.0, 10.0, 0.0), 0.99995460213129757},
        {"mail margin [.2,.7,.1], y=1", mail_margin(std::vector<double>{0.2, 0.7, 0.1}, 1), 0.5},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : rows) {
        const double e = rel(r.got, r.want);
        if (e > worst) {
            worst = e;
            worst_name = r.what;
        }
    }
    const bool asym = s_d(p91, half) != s_d(half, p91);
    const bool monotone = vir_weight(s_v(0.2, 7.0, 10.0), 0.3, 0.007) > vir_weight(s_v(0.8, 7.0, 10.0), 0.3, 0.007);
    Outcome o;
    o.pass = worst <= 1e-9 && asym && monotone;
    o.detail = std::to_string(rows.size()) + " values, max rel err " + fmt("%.2e", worst) +
               (worst_name.empty() ? "" : " (" + worst_name + ")");
    return o;
}

// -- 2 ----------------------------------------------------------------------

Outcome gradient_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, testing::gradient_check(1000 + seed).worst());
    return {worst < 1e-4, "100 networks x {CE, TRADES, VIR-TRADES}, max rel err " + fmt("%.2e", worst)};
}

// -- 3 ----------------------------------------------------------------------

Outcome theorem() {
    const gmm::GmmSpec spec{4, 1.0, 2.0, 2.0, 0.5};
    const auto r = gmm::theorem1_risks(spec);
    const bool closed_ok = rel(r.minus, 0.1079351917301015) < 1e-9 && rel(r.plus, 0.35152444002085828) < 1e-9 &&
                           std::abs(r.minus - 0.10790) < 1e-4 && std::abs(r.plus - 0.35152) < 1e-5;
    const auto mc = gmm::monte_carlo_risks(gmm::optimal_linear(spec), spec, 1000000, 20240);
    const double z_minus = std::abs(mc.minus - r.minus) / mc.se_minus;
    const double z_plus = std::abs(mc.plus - r.plus) / mc.se_plus;
    bool ordering = true;
    for (double k : {1.5, 2.0, 4.0}) {
        const auto rk = gmm::theorem1_risks({4, 1.0, 2.0, k, 0.5});
        ordering = ordering && rk.minus < rk.plus && (1.0 - rk.minus) > (1.0 - rk.plus);
    }
    Outcome o;
    o.pass = closed_ok && z_minus <= 5.0 && z_plus <= 5.0 && ordering;
    char buf[256];
    std::snprintf(buf, sizeof buf, "R-=%.7f R+=%.7f; MC n=1e6 z=(%.2f, %.2f); ordering K in {1.5,2,4} %s", r.minus,
                  r.plus, z_minus, z_plus, ordering ? "holds" : "violated");
    o.detail = buf;
    return o;
}

// -- 4 ----------------------------------------------------------------------

Outcome thresholds() {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const gmm::GmmSpec s{1 + static_cast<int>(rng() % 64), 0.05 + 3.0 * u(rng), 0.1 + 4.0 * u(rng),
                             1.01 + 7.0 * u(rng), 0.5};
        worst = std::max(worst, std::abs(gmm::threshold_from_plus(s) - gmm::threshold_from_minus(s)));
    }
    return {worst <= 1e-9, "100 random specs, max |c+ - c-| = " + fmt("%.2e", worst)};
}

// -- 5 ----------------------------------------------------------------------

Outcome reduction() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_at = 0.0, worst_tr = 0.0;
    for (int b = 0; b < 50; ++b) {
        const std::size_t d = 2 + rng() % 6, c = 2 + rng() % 4, n = 1 + rng() % 16;
        const auto model = init_classifier(Architecture{{d, 4 + rng() % 12, c}}, rng());
        std::vector<double> xs(n * d);
        for (auto& v : xs) v = u(rng);
        std::vector<int> y(n);
        for (auto& v : y) v = static_cast<int>(rng() % c);
        const Tensor x({n, d}, xs);
        auto spec = AttackSpec::pgd(0.1, 0.025, 5);
        spec.seed = rng();
        const Tensor x_adv = pgd(model, x, y, spec);

        auto scheme = WeightScheme::vir_at();
        scheme.burn_in_epoch = 1000;  // weights forced to exactly 1
        const auto bw = batch_weights(scheme, 1, model, x, x_adv, y);

        ObjectiveSpec at, vir_at, tr, vir_tr;
        at.family = ObjectiveFamily::AT;
        vir_at.family = ObjectiveFamily::VIR_AT;
        tr.family = ObjectiveFamily::TRADES;
        vir_tr.family = ObjectiveFamily::VIR_TRADES;
        const double l_at = objective_loss(at, model, x, x_adv, y, bw.weights).item();
        const double l_vat = objective_loss(vir_at, model, x, x_adv, y, bw.weights).item();
        const double l_tr = objective_loss(tr, model, x, x_adv, y, bw.weights).item();
        const double l_vtr = objective_loss(vir_tr, model, x, x_adv, y, bw.weights).item();
        worst_at = std::max(worst_at, std::abs(l_at - l_vat));
        worst_tr = std::max(worst_tr, std::abs(l_tr - l_vtr));
    }
    return {worst_at <= 1e-12 && worst_tr <= 1e-12,
            "50 batches, max |VIR-AT - AT| = " + fmt("%.1e", worst_at) + ", max |VIR-TRADES - TRADES| = " +
                fmt("%.1e", worst_tr)};
}

// -- 6 ----------------------------------------------------------------------

Outcome burn_in() {
    const TrainConfig cfg = desk_profile();
    const auto r = train(cfg);
    const int burn = cfg.objective.weight_scheme.burn_in_epoch;
    int checked = 0;
    bool exact = true;
    for (const auto& row : r.metrics.rows) {
        if (row.epoch > burn) continue;
        ++checked;
        for (std::size_t c = 0; c < row.class_weight.size(); ++c)
            exact = exact && row.class_weight[c] == static_cast<double>(r.class_counts[c]);
    }
    int nonuniform_epochs = 0;
    for (int e = burn + 1; e <= cfg.epochs; ++e) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& rec : r.weights)
            if (rec.epoch == e) {
                lo = std::min(lo, rec.weight);
                hi = std::max(hi, rec.weight);
            }
        nonuniform_epochs += hi > lo;
    }
    return {exact && checked == burn && nonuniform_epochs >= 1,
            std::to_string(checked) + " burn-in epochs exact, " + std::to_string(nonuniform_epochs) + "/" +
                std::to_string(cfg.epochs - burn) + " later epochs non-uniform"};
}

// -- 7 ----------------------------------------------------------------------

Outcome attack_contracts() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const AttackFamily families[] = {AttackFamily::FGSM, AttackFamily::PGD, AttackFamily::CW_PGD, AttackFamily::SPSA};
    std::string detail;
    bool all = true;
    for (const auto fam : families) {
        int violations = 0, nondet = 0;
        double worst_excess = -INFINITY;
        for (int t = 0; t < 1000; ++t) {
            const std::size_t d = 1 + rng() % 8, c = 2 + rng() % 4, n = 1 + rng() % 4;
            const auto model = init_classifier(Architecture{{d, 2 + rng() % 10, c}}, rng());
            AttackSpec spec;
            spec.family = fam;
            spec.epsilon = t % 50 == 0 ? 0.0 : 0.3 * u(rng) + 1e-6;
            spec.step_size = spec.epsilon > 0.0 ? spec.epsilon * (0.1 + 0.5 * u(rng)) : 0.01;
            spec.iterations = fam == AttackFamily::FGSM ? 1 : 1 + static_cast<int>(rng() % 6);
            spec.spsa_samples = 4 + static_cast<int>(rng() % 13);
            spec.random_start = rng() % 2 == 0;
            spec.seed = rng();
            const bool bounded = rng() % 4 != 0;
            if (bounded) spec.bounds = Bounds{0.0, 1.0};
            else spec.bounds.reset();
            std::vector<double> xs(n * d);
            for (auto& v : xs) v = bounded ? u(rng) : 4.0 * u(rng) - 2.0;
            std::vector<int> y(n);
            for (auto& v : y) v = static_cast<int>(rng() % c);
            const Tensor x({n, d}, xs);
            const Tensor a = run_attack(model, x, y, spec);
            const Tensor b = run_attack(model, x, y, spec);
            for (std::size_t i = 0; i < a.numel(); ++i) {
                const double excess = std::abs(a[i] - x[i]) - spec.epsilon;
                worst_excess = std::max(worst_excess, excess);
                if (excess > 1e-12) ++violations;
                if (bounded && (a[i] < 0.0 || a[i] > 1.0)) ++violations;
                if (a[i] != b[i]) ++nondet;
            }
        }
        all = all && violations == 0 && nondet == 0;
        detail += to_string(fam) + ":" + (violations == 0 && nondet == 0 ? "ok" : "bad") + " ";
        (void)worst_excess;
    }
    detail += "(1000 cases each)";
    return {all, detail};
}

// -- 8 ----------------------------------------------------------------------

TrainConfig two_class(std::uint64_t seed, double eps_train) {
    TrainConfig c = desk_profile();
    const double sep = 4.0, eps = 0.25 * sep;
    c.seed = seed;
    c.data.seed = 800 + seed;
    c.data.multiclass.variances = {1.0, 1.0};
    c.data.multiclass.separation = sep;
    c.data.multiclass.d = 10;
    c.data.multiclass.train_per_class = 1000;
    c.data.multiclass.test_per_class = 500;
    c.objective.family = ObjectiveFamily::AT;
    c.objective.weight_scheme = WeightScheme::uniform();
    c.attack_train = AttackSpec::pgd(eps_train, eps / 4.0, 10);
    c.attack_train.bounds.reset();
    auto pgd20 = AttackSpec::pgd(eps, eps / 8.0, 20);
    pgd20.name = "pgd20";
    pgd20.bounds.reset();
    c.attack_eval = {pgd20};
    c.logging.eval_every = c.epochs;
    c.logging.weights_every = 0;
    return c;
}

Outcome efficacy() {
    double gain = 0.0, min_clean = 1.0;
    std::string per_seed;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto clean = train(two_class(s, 0.0));
        const auto robust = train(two_class(s, 1.0));
        min_clean = std::min(min_clean, clean.final_eval.clean.accuracy);
        const double g = robust.final_eval.attacks[0].accuracy - clean.final_eval.attacks[0].accuracy;
        gain += g / 3.0;
        per_seed += fmt(" %.3f", g);
    }
    return {gain >= 0.20 && min_clean >= 0.95,
            "clean-trained clean acc >= " + fmt("%.3f", min_clean) + ", PGD-20 gain per seed" + per_seed +
                ", mean " + fmt("%.3f", gain)};
}

// -- 9 ----------------------------------------------------------------------

Outcome class_weights() {
    int hits = 0, total = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        TrainConfig c = desk_profile();
        c.seed = s;
        c.data.seed = 900 + s;
        c.logging.eval_every = c.epochs;
        c.logging.weights_every = 0;
        const auto r = train(c);
        const std::size_t high = static_cast<std::size_t>(
            std::max_element(c.data.multiclass.variances.begin(), c.data.multiclass.variances.end()) -
            c.data.multiclass.variances.begin());
        for (const auto& row : r.metrics.rows) {
            if (row.epoch <= c.objective.weight_scheme.burn_in_epoch) continue;
            std::vector<double> mean(row.class_weight.size());
            for (std::size_t k = 0; k < mean.size(); ++k)
                mean[k] = row.class_weight[k] / static_cast<double>(r.class_counts[k]);
            ++total;
            hits += static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin()) == high;
        }
    }
    const double frac = static_cast<double>(hits) / static_cast<double>(total);
    return {frac >= 0.9, "high-variance class has the largest mean weight in " + std::to_string(hits) + "/" +
                             std::to_string(total) + " post-burn-in epochs (5 seeds)"};
}

// -- 10 ---------------------------------------------------------------------

Outcome ablations() {
    std::vector<std::string> logs;
    double worst = 0.0;
    std::size_t batches_checked = 0;
    bool all_ran = true;
    for (const auto ab : {Ablation::FULL, Ablation::SV_ONLY, Ablation::SD_ONLY}) {
        TrainConfig c = desk_profile();
        c.objective.ablation = ab;
        c.logging.eval_every = c.epochs;
        const int burn = c.objective.weight_scheme.burn_in_epoch;
        const double beta = c.objective.weight_scheme.beta;
        BatchObserver check;
        if (ab == Ablation::FULL)
            check = [&](int epoch, std::size_t, const BatchWeights& bw) {
                if (epoch <= burn) return;
                std::vector<double> sv, sd;
                for (const auto& r : bw.records) {
                    sv.push_back(r.s_v);
                    sd.push_back(r.s_d);
                }
                const auto only_v = ablation_weights(c.objective.weight_scheme, Ablation::SV_ONLY, sv, sd);
                const auto only_d = ablation_weights(c.objective.weight_scheme, Ablation::SD_ONLY, sv, sd);
                for (std::size_t i = 0; i < sv.size(); ++i)
                    worst = std::max(worst, std::abs(bw.weights[i] - (only_v[i] * only_d[i] + beta)));
                ++batches_checked;
            };
        try {
            auto [tr, te] = load_data(c.data);
            const auto r = train(c, tr, te, check);
            logs.push_back(weights_csv(r.weights));
        } catch (const Error& e) {
            all_ran = false;
            logs.emplace_back();
        }
    }
    const bool distinct = logs[0] != logs[1] && logs[0] != logs[2] && logs[1] != logs[2];
    return {all_ran && distinct && batches_checked > 0 && worst <= 1e-12,
            std::string("3 configurations ran, logs ") + (distinct ? "distinct" : "NOT distinct") + ", FULL vs SV*SD+beta over " +
                std::to_string(batches_checked) + " batches max diff " + fmt("%.1e", worst)};
}

// -- 11 ---------------------------------------------------------------------

Outcome determinism() {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "virlab_acceptance_determinism";
    fs::remove_all(root);
    bool same = true;
    std::string detail;
    for (const auto fam : {ObjectiveFamily::VIR_AT, ObjectiveFamily::VIR_TRADES}) {
        TrainConfig c = desk_profile();
        c.objective.family = fam;
        if (fam == ObjectiveFamily::VIR_TRADES) {
            c.objective.weight_scheme = WeightScheme::vir_trades();
            c.objective.weight_scheme.burn_in_epoch = 18;
        }
        const auto a = root / (to_string(fam) + "_a"), b = root / (to_string(fam) + "_b");
        write_run(train(c), c, a);
        write_run(train(c), c, b);
        for (const char* f : {"metrics.csv", "weights.csv", "model.ckpt"}) {
            const bool eq = read_text(a / f) == read_text(b / f);
            same = same && eq;
            if (!eq) detail += std::string(f) + " differs (" + to_string(fam) + "); ";
        }
    }
    fs::remove_all(root);
    return {same, same ? "metrics.csv, weights.csv, model.ckpt byte-identical for VIR_AT and VIR_TRADES" : detail};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "weight-function value table", 1.0, weight_table},
        {2, "gradient oracle", 60.0, gradient_oracle},
        {3, "class-wise risk closed forms", 30.0, theorem},
        {4, "threshold consistency", 1.0, thresholds},
        {5, "reduction regression", 10.0, reduction},
        {6, "burn-in invariant", 600.0, burn_in},
        {7, "attack contracts", 120.0, attack_contracts},
        {8, "adversarial training efficacy", 600.0, efficacy},
        {9, "high-variance class weighting", 600.0, class_weights},
        {10, "ablation harness parity", 600.0, ablations},
        {11, "determinism", 600.0, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("[%s] %2d %-32s %s (%.2fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs,
                    in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
