// virlab: train, attack and evaluate reweighted adversarial training runs.
//
// Settings resolve as flag > config file > profile default.
// Exit codes: 0 success, 2 configuration error, 3 runtime or numeric abort, 4 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "virlab/config.hpp"
#include "virlab/error.hpp"
#include "virlab/gmm.hpp"
#include "virlab/report.hpp"
#include "virlab/train.hpp"

namespace {

using namespace virlab;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

struct RunOptions {
    std::string config_path;
    std::string profile_name = "desk";
    std::string out;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<std::vector<int>> milestones;
    std::optional<std::string> objective;
    std::optional<std::string> weights;
    std::optional<std::string> ablation;
    std::optional<double> alpha, gamma, beta, trade_off;
    std::optional<int> burn_in;
    std::optional<int> eval_every, weights_every;
    std::optional<std::size_t> eval_limit;
};

void add_config_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("-c,--config", o.config_path, "JSON config file");
    cmd->add_option("--profile", o.profile_name, "Defaults to start from: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
}

void add_train_options(CLI::App* cmd, RunOptions& o) {
    add_config_options(cmd, o);
    cmd->add_option("--epochs", o.epochs);
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--batch-size", o.batch_size);
    cmd->add_option("--lr", o.lr, "Base learning rate");
    cmd->add_option("--milestones", o.milestones, "Epochs at which the rate decays, e.g. 20,25")->delimiter(',');
    cmd->add_option("--objective", o.objective, "AT, VIR_AT, TRADES or VIR_TRADES");
    cmd->add_option("--weights", o.weights, "VIR, GAIRAT, MAIL or UNIFORM");
    cmd->add_option("--ablation", o.ablation, "FULL, SV_ONLY or SD_ONLY");
    cmd->add_option("--alpha", o.alpha);
    cmd->add_option("--gamma", o.gamma);
    cmd->add_option("--beta", o.beta);
    cmd->add_option("--trade-off", o.trade_off, "Coefficient on the KL term of TRADES objectives");
    cmd->add_option("--burn-in", o.burn_in, "Last epoch with unit weights");
    cmd->add_option("--eval-every", o.eval_every);
    cmd->add_option("--weights-every", o.weights_every, "Weight-log cadence in epochs; 0 disables");
    cmd->add_option("--eval-limit", o.eval_limit, "Evaluate on at most this many test samples");
}

TrainConfig resolve(const RunOptions& o) {
    TrainConfig c = profile(o.profile_name);
    if (!o.config_path.empty()) c = load_config(o.config_path, c);
    auto& ws = c.objective.weight_scheme;
    // Switching family restores that family's hyperparameters; burn-in is kept.
    if (o.objective) {
        const auto family = objective_family_from_string(*o.objective);
        if (family != c.objective.family) {
            const int burn_in = ws.burn_in_epoch;
            if (family == ObjectiveFamily::VIR_TRADES) ws = WeightScheme::vir_trades();
            if (family == ObjectiveFamily::VIR_AT) ws = WeightScheme::vir_at();
            ws.burn_in_epoch = burn_in;
            c.objective.family = family;
        }
    }
    if (o.weights) {
        const auto family = weight_family_from_string(*o.weights);
        if (family != ws.family) {
            const int burn_in = ws.burn_in_epoch;
            switch (family) {
                case WeightFamily::VIR:
                    ws = c.objective.family == ObjectiveFamily::VIR_TRADES ? WeightScheme::vir_trades()
                                                                            : WeightScheme::vir_at();
                    break;
                case WeightFamily::GAIRAT: ws = WeightScheme::gairat(c.attack_train.iterations); break;
                case WeightFamily::MAIL: ws = WeightScheme::mail(); break;
                case WeightFamily::UNIFORM: ws = WeightScheme::uniform(); break;
            }
            ws.burn_in_epoch = burn_in;
        }
    }
    if (o.ablation) c.objective.ablation = ablation_from_string(*o.ablation);
    if (o.alpha) ws.alpha = *o.alpha;
    if (o.gamma) ws.gamma = *o.gamma;
    if (o.beta) ws.beta = *o.beta;
    if (o.burn_in) ws.burn_in_epoch = *o.burn_in;
    if (o.trade_off) c.objective.trade_off = *o.trade_off;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.seed) c.seed = *o.seed;
    if (o.batch_size) c.batch_size = *o.batch_size;
    if (o.lr) c.optimizer.base_lr = *o.lr;
    if (o.milestones) c.optimizer.milestones = *o.milestones;
    if (o.eval_every) c.logging.eval_every = *o.eval_every;
    if (o.weights_every) c.logging.weights_every = *o.weights_every;
    if (o.eval_limit) c.logging.eval_limit = *o.eval_limit;
    if (!o.out.empty()) c.output_dir = o.out;
    c.validate();
    return c;
}

Classifier load_model_for(const std::string& path, const Dataset& data) {
    auto ckpt = load_checkpoint(path);
    if (ckpt.model.input_dim() != data.dim())
        throw ConfigError("checkpoint expects " + std::to_string(ckpt.model.input_dim()) + " features, data has " +
                          std::to_string(data.dim()));
    if (ckpt.model.num_classes() < data.num_classes)
        throw ConfigError("checkpoint has fewer classes than the data");
    return std::move(ckpt.model);
}

void print_summary(const EvalReport& rep) {
    std::printf("clean: %.4f\n", rep.clean.accuracy);
    for (const auto& a : rep.attacks) std::printf("%s: %.4f\n", a.name.c_str(), a.accuracy);
}

int cmd_train(const RunOptions& o, bool print_config) {
    const TrainConfig c = resolve(o);
    if (print_config) {
        std::cout << dump_config(c);
        return 0;
    }
    const auto result = train(c);
    write_run(result, c, c.output_dir);
    print_summary(result.final_eval);
    std::printf("artifacts written to %s\n", c.output_dir.c_str());
    return 0;
}

int cmd_eval(const RunOptions& o, const std::string& checkpoint) {
    const TrainConfig c = resolve(o);
    const auto [train_data, test_data] = load_data(c.data);
    const Classifier model = load_model_for(checkpoint, test_data);
    const auto rep = evaluate(model, test_data, c.attack_eval, c.eval_seed, c.logging.eval_limit);
    print_summary(rep);
    if (o.out.empty()) return 0;
    std::filesystem::create_directories(o.out);
    std::ostringstream csv;
    csv << "condition,accuracy";
    for (std::size_t k = 0; k < rep.clean.class_accuracy.size(); ++k) csv << ",class_acc_" << k;
    csv << '\n';
    std::vector<const ConditionResult*> all{&rep.clean};
    for (const auto& a : rep.attacks) all.push_back(&a);
    for (const auto* r : all) {
        csv << r->name << ',' << format_double(r->accuracy);
        for (double v : r->class_accuracy) csv << ',' << format_double(v);
        csv << '\n';
        write_text(std::filesystem::path(o.out) / ("confusion_" + r->name + ".csv"), confusion_csv(r->confusion));
    }
    write_text(std::filesystem::path(o.out) / "eval.csv", csv.str());
    return 0;
}

int cmd_attack(const RunOptions& o, const std::string& checkpoint, const std::string& attack_name,
               const std::string& split, const std::string& out_file, std::size_t limit) {
    const TrainConfig c = resolve(o);
    auto [train_data, test_data] = load_data(c.data);
    Dataset data = split == "train" ? std::move(train_data) : std::move(test_data);
    if (limit > 0 && limit < data.size()) {
        std::vector<std::size_t> idx(limit);
        for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
        data = data.subset(idx);
    }
    const Classifier model = load_model_for(checkpoint, data);
    std::optional<AttackSpec> spec;
    if (attack_name == "train") {
        spec = c.attack_train;
        if (spec->loss_mode == LossMode::KL) spec->loss_mode = LossMode::CE;
    }
    for (const auto& a : c.attack_eval)
        if (a.name == attack_name) spec = a;
    if (!spec) throw ConfigError("no attack named '" + attack_name + "' in the configuration");
    Dataset adv = data;
    adv.features = attack_dataset(model, data, *spec, c.eval_seed);
    save_csv(adv, out_file);
    const auto pred = model.predict(adv.features);
    const auto score = score_predictions(spec->name, adv.labels, pred, std::max(adv.num_classes, model.num_classes()));
    std::printf("%s: accuracy %.4f on %zu adversarial examples written to %s\n", spec->name.c_str(), score.accuracy,
                adv.size(), out_file.c_str());
    return 0;
}

int cmd_theory(int d, double eta, double sigma, const std::vector<double>& ks, std::size_t n, std::uint64_t seed,
               const std::string& out_file) {
    std::vector<TheoryRow> rows;
    for (double k : ks) {
        gmm::GmmSpec spec{d, eta, sigma, k, 0.5};
        rows.push_back(theory_row(spec, n, seed));
    }
    const std::string csv = theory_csv(rows);
    if (out_file.empty()) std::cout << csv;
    else write_text(out_file, csv);
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.pass_mc && r.pass_ordering && r.pass_threshold;
    std::fprintf(stderr, "theory checks: %s\n", ok ? "pass" : "FAIL");
    return 0;
}

int cmd_sweep(const RunOptions& o, const SweepGrid& grid) {
    const TrainConfig c = resolve(o);
    const auto [train_data, test_data] = load_data(c.data);
    const std::filesystem::path root = c.output_dir;
    std::size_t index = 0;
    const auto result = sweep(c, grid, train_data, test_data, [&](const SweepRow& row, const TrainResult& r) {
        TrainConfig run_cfg = c;
        run_cfg.objective.weight_scheme.alpha = row.alpha;
        run_cfg.objective.weight_scheme.gamma = row.gamma;
        run_cfg.objective.weight_scheme.beta = row.beta;
        write_run(r, run_cfg, root / ("run_" + std::to_string(index++)));
    });
    std::filesystem::create_directories(root);
    write_text(root / "sweep.csv", sweep_csv(result));
    std::size_t failed = 0;
    for (const auto& r : result.rows) failed += !r.ok;
    std::printf("%zu runs, %zu failed; table written to %s\n", result.rows.size(), failed,
                (root / "sweep.csv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reweighted adversarial training laboratory"};
    app.require_subcommand(1);

    RunOptions train_opts;
    bool print_config = false;
    auto* train_cmd = app.add_subcommand("train", "Train a classifier and write run artifacts");
    add_train_options(train_cmd, train_opts);
    train_cmd->add_option("-o,--out", train_opts.out, "Output directory");
    train_cmd->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    RunOptions eval_opts;
    std::string eval_ckpt;
    auto* eval_cmd = app.add_subcommand("eval", "Clean and attacked accuracy of a checkpoint");
    add_config_options(eval_cmd, eval_opts);
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--eval-limit", eval_opts.eval_limit);
    eval_cmd->add_option("-o,--out", eval_opts.out, "Directory for eval.csv and confusion matrices");

    RunOptions attack_opts;
    std::string attack_ckpt, attack_name, attack_split = "test", attack_out;
    std::size_t attack_limit = 0;
    auto* attack_cmd = app.add_subcommand("attack", "Write adversarial examples as a CSV dataset");
    add_config_options(attack_cmd, attack_opts);
    attack_cmd->add_option("--checkpoint", attack_ckpt)->required();
    attack_cmd->add_option("--attack", attack_name, "Name of an evaluation attack, or 'train'")->required();
    attack_cmd->add_option("--split", attack_split)->check(CLI::IsMember({"train", "test"}));
    attack_cmd->add_option("--limit", attack_limit, "Attack only the first n samples");
    attack_cmd->add_option("-o,--out", attack_out, "Output CSV")->required();

    int th_d = 4;
    double th_eta = 1.0, th_sigma = 2.0;
    std::vector<double> th_k{1.5, 2.0, 4.0};
    std::size_t th_n = 1000000;
    std::uint64_t th_seed = 0;
    std::string th_out;
    auto* theory_cmd = app.add_subcommand("theory", "Closed-form class risks of the two-class mixture vs Monte Carlo");
    theory_cmd->add_option("--d", th_d);
    theory_cmd->add_option("--eta", th_eta);
    theory_cmd->add_option("--sigma", th_sigma);
    theory_cmd->add_option("--k", th_k, "Variance ratios, e.g. --k 1.5 2 4");
    theory_cmd->add_option("--n", th_n, "Monte Carlo sample size (>= 10000)");
    theory_cmd->add_option("--seed", th_seed);
    theory_cmd->add_option("-o,--out", th_out, "Output CSV (stdout if omitted)");

    RunOptions sweep_opts;
    SweepGrid grid;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train over a grid of alpha/gamma/beta values");
    add_train_options(sweep_cmd, sweep_opts);
    sweep_cmd->add_option("--alpha-grid", grid.alpha)->delimiter(',');
    sweep_cmd->add_option("--gamma-grid", grid.gamma)->delimiter(',');
    sweep_cmd->add_option("--beta-grid", grid.beta)->delimiter(',');
    sweep_cmd->add_option("-o,--out", sweep_opts.out, "Output directory");

    std::string report_run, report_out;
    auto* report_cmd = app.add_subcommand("report", "Rebuild summary CSVs from a run directory");
    report_cmd->add_option("--run", report_run, "Run directory")->required();
    report_cmd->add_option("-o,--out", report_out, "Output directory (defaults to the run directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_opts, print_config);
        if (*eval_cmd) return cmd_eval(eval_opts, eval_ckpt);
        if (*attack_cmd) return cmd_attack(attack_opts, attack_ckpt, attack_name, attack_split, attack_out, attack_limit);
        if (*theory_cmd) return cmd_theory(th_d, th_eta, th_sigma, th_k, th_n, th_seed, th_out);
        if (*sweep_cmd) return cmd_sweep(sweep_opts, grid);
        if (*report_cmd) {
            const auto files = regenerate_reports(report_run, report_out.empty() ? report_run : report_out);
            for (const auto& f : files) std::printf("%s\n", f.string().c_str());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
