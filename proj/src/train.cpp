#include "virlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "virlab/attacks.hpp"
#include "virlab/error.hpp"
#include "virlab/objectives.hpp"
#include "virlab/optim.hpp"
#include "virlab/random.hpp"
#include "virlab/report.hpp"

namespace virlab {

namespace {

// Evaluation chunk; a power of two so that (seed ^ chunk_start) ^ i equals
// seed ^ (chunk_start + i) and per-sample streams match an unchunked run.
constexpr std::size_t kEvalChunk = 256;

Tensor rows_of(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t d = x.dim(1);
    const auto src = x.data();
    return Tensor({end - begin, d}, std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin * d),
                                                        src.begin() + static_cast<std::ptrdiff_t>(end * d)));
}

Dataset head(const Dataset& data, std::size_t limit) {
    if (limit == 0 || limit >= data.size()) return data;
    std::vector<std::size_t> idx(limit);
    for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
    return data.subset(idx);
}

std::vector<int> attacked_predictions(const Classifier& model, const Dataset& data, const AttackSpec& spec,
                                      std::uint64_t eval_seed, std::vector<double>* adv_out) {
    std::vector<int> pred;
    pred.reserve(data.size());
    const std::uint64_t base = derive_seed(eval_seed, {spec.seed});
    for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
        const std::size_t end = std::min(start + kEvalChunk, data.size());
        const Tensor x = rows_of(data.features, start, end);
        const std::span<const int> y(data.labels.data() + start, end - start);
        AttackSpec s = spec;
        s.seed = base ^ static_cast<std::uint64_t>(start);
        const Tensor x_adv = run_attack(model, x, y, s);
        const auto p = model.predict(x_adv);
        pred.insert(pred.end(), p.begin(), p.end());
        if (adv_out) adv_out->insert(adv_out->end(), x_adv.data().begin(), x_adv.data().end());
    }
    return pred;
}

}  // namespace

ConditionResult score_predictions(const std::string& name, std::span<const int> labels, std::span<const int> predicted,
                                  std::size_t num_classes) {
    if (labels.size() != predicted.size()) throw ShapeError("score_predictions: label/prediction count mismatch");
    if (labels.empty()) throw ConfigError("cannot score an empty dataset");
    ConditionResult r;
    r.name = name;
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i], p = predicted[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes || p < 0 || static_cast<std::size_t>(p) >= num_classes)
            throw IndexError("score_predictions: class index out of range");
        ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
        correct += y == p;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    r.class_accuracy.assign(num_classes, 0.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t row = 0;
        for (std::size_t v : r.confusion[c]) row += v;
        if (row > 0) r.class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
    }
    return r;
}

double EvalReport::worst_robust() const {
    if (attacks.empty()) return clean.accuracy;
    double w = attacks.front().accuracy;
    for (const auto& a : attacks) w = std::min(w, a.accuracy);
    return w;
}

EvalReport evaluate(const Classifier& model, const Dataset& full, std::span<const AttackSpec> attacks,
                    std::uint64_t eval_seed, std::size_t limit) {
    if (full.size() == 0) throw ConfigError("evaluate: empty dataset");
    const Dataset data = head(full, limit);
    const std::size_t classes = std::max(full.num_classes, model.num_classes());
    EvalReport rep;
    rep.clean = score_predictions("clean", data.labels, model.predict(data.features), classes);
    for (const auto& spec : attacks) {
        spec.validate();
        const auto pred = attacked_predictions(model, data, spec, eval_seed, nullptr);
        rep.attacks.push_back(score_predictions(spec.name, data.labels, pred, classes));
    }
    return rep;
}

Tensor attack_dataset(const Classifier& model, const Dataset& data, const AttackSpec& spec, std::uint64_t eval_seed) {
    if (data.size() == 0) throw ConfigError("attack_dataset: empty dataset");
    spec.validate();
    std::vector<double> adv;
    adv.reserve(data.features.numel());
    attacked_predictions(model, data, spec, eval_seed, &adv);
    return Tensor(data.features.shape(), std::move(adv));
}

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& test_data,
                  const BatchObserver& observer) {
    config.validate();
    train_data.validate();
    test_data.validate();
    if (train_data.size() == 0) throw ConfigError("training set is empty");
    if (test_data.size() == 0) throw ConfigError("test set is empty");
    if (train_data.dim() != test_data.dim()) throw ConfigError("train and test feature dimensions differ");
    const std::size_t classes = std::max(train_data.num_classes, test_data.num_classes);
    if (classes < 2) throw ConfigError("training needs at least two classes");

    Architecture arch;
    arch.widths.push_back(train_data.dim());
    arch.widths.insert(arch.widths.end(), config.hidden.begin(), config.hidden.end());
    arch.widths.push_back(classes);
    Classifier model = init_classifier(arch, derive_seed(config.seed, {0x1417}));
    SgdMomentum optimizer(config.optimizer.momentum, config.optimizer.weight_decay);

    const ObjectiveSpec& obj = config.objective;
    const WeightScheme scheme = obj.weight_scheme;
    const bool gairat = obj.is_weighted() && scheme.family == WeightFamily::GAIRAT;
    const WeightScheme log_scheme = obj.is_weighted() ? scheme : WeightScheme::uniform();

    MetricsLog log;
    log.num_classes = classes;
    for (const auto& a : config.attack_eval) log.attack_names.push_back(a.name);

    std::vector<WeightRecord> weight_log;
    std::vector<double> step_losses;
    std::optional<EvalReport> last_eval;
    int best_epoch = 0;
    double best_robust = -1.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = lr_at(epoch, config.optimizer);
        const bool log_weights = config.logging.weights_every > 0 && epoch % config.logging.weights_every == 0;
        const bool active = epoch > scheme.burn_in_epoch;
        std::vector<double> class_weight(classes, 0.0);
        double loss_sum = 0.0;

        const auto parts = batches(train_data, config.batch_size, config.seed, epoch);
        for (std::size_t b = 0; b < parts.size(); ++b) try {
            const Batch& batch = parts[b];
            AttackSpec atk = config.attack_train;
            atk.seed = derive_seed(config.seed, {0xa77ac, static_cast<std::uint64_t>(epoch), b});

            Tensor x_adv;
            std::optional<std::vector<int>> k_values;
            if (obj.is_trades()) {
                atk.loss_mode = LossMode::KL;
                const Tensor ref = softmax(model.frozen().forward(batch.x.detach()));
                x_adv = run_attack(model, batch.x, batch.y, atk, ref);
            } else if (gairat) {
                auto trace = pgd_with_steps(model, batch.x, batch.y, atk);
                x_adv = std::move(trace.x_adv);
                k_values = std::move(trace.min_steps);
            } else {
                x_adv = run_attack(model, batch.x, batch.y, atk);
            }

            std::optional<std::span<const int>> k_span;
            if (k_values) k_span = std::span<const int>(*k_values);
            BatchWeights bw = batch_weights(log_scheme, epoch, model, batch.x, x_adv, batch.y, k_span, batch.indices);
            if (obj.is_weighted() && scheme.family == WeightFamily::VIR && obj.ablation != Ablation::FULL && active) {
                std::vector<double> sv(bw.records.size()), sd(bw.records.size());
                for (std::size_t i = 0; i < sv.size(); ++i) {
                    sv[i] = bw.records[i].s_v;
                    sd[i] = bw.records[i].s_d;
                }
                bw.weights = ablation_weights(scheme, obj.ablation, sv, sd);
                for (std::size_t i = 0; i < sv.size(); ++i) bw.records[i].weight = bw.weights[i];
            }

            const Tensor loss = objective_loss(obj, model, batch.x, x_adv, batch.y, bw.weights);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NumericError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b));
            model.zero_grad();
            backward(loss);
            optimizer.step(model, lr);

            step_losses.push_back(value);
            loss_sum += value * static_cast<double>(batch.y.size());
            for (std::size_t i = 0; i < batch.y.size(); ++i)
                class_weight[static_cast<std::size_t>(batch.y[i])] += bw.weights[i];
            if (log_weights) weight_log.insert(weight_log.end(), bw.records.begin(), bw.records.end());
            if (observer) observer(epoch, b, bw);
        } catch (const DomainError& e) {
            // Non-finite logits surface as domain errors inside softmax.
            throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                               ": " + e.what());
        }

        EpochMetrics row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = loss_sum / static_cast<double>(train_data.size());
        row.class_weight = std::move(class_weight);
        if (epoch % config.logging.eval_every == 0 || epoch == config.epochs) {
            last_eval = evaluate(model, test_data, config.attack_eval, config.eval_seed, config.logging.eval_limit);
            row.clean_acc = last_eval->clean.accuracy;
            for (const auto& a : last_eval->attacks) row.robust_acc.push_back(a.accuracy);
            row.class_acc = last_eval->clean.class_accuracy;
            const double robust = last_eval->worst_robust();
            if (robust > best_robust) {
                best_robust = robust;
                best_epoch = epoch;
            }
        }
        row.best_epoch = best_epoch;
        row.best_robust = std::max(best_robust, 0.0);
        log.rows.push_back(std::move(row));
    }

    return TrainResult{std::move(model), std::move(log), std::move(weight_log), std::move(step_losses),
                       std::move(*last_eval), train_data.class_counts()};
}

TrainResult train(const TrainConfig& config) {
    config.validate();
    auto [train_data, test_data] = load_data(config.data);
    return train(config, train_data, test_data);
}

void write_run(const TrainResult& result, const TrainConfig& config, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    write_text(dir / "config.json", dump_config(config));
    write_text(dir / "metrics.csv", metrics_csv(result.metrics));
    write_text(dir / "weights.csv", weights_csv(result.weights));
    write_text(dir / "confusion_clean.csv", confusion_csv(result.final_eval.clean.confusion));
    for (const auto& a : result.final_eval.attacks)
        write_text(dir / ("confusion_" + a.name + ".csv"), confusion_csv(a.confusion));
    save_checkpoint(result.model, dir / "model.ckpt", config.epochs, {});
}

SweepResult sweep(const TrainConfig& base, const SweepGrid& grid, const Dataset& train_data, const Dataset& test_data,
                  const std::function<void(const SweepRow&, const TrainResult&)>& on_run) {
    const auto& ws = base.objective.weight_scheme;
    const auto axis = [](const std::vector<double>& v, double fallback) {
        return v.empty() ? std::vector<double>{fallback} : v;
    };
    SweepResult out;
    for (const auto& a : base.attack_eval) out.attack_names.push_back(a.name);
    for (double alpha : axis(grid.alpha, ws.alpha))
        for (double gamma : axis(grid.gamma, ws.gamma))
            for (double beta : axis(grid.beta, ws.beta)) {
                SweepRow row;
                row.alpha = alpha;
                row.gamma = gamma;
                row.beta = beta;
                TrainConfig cfg = base;
                cfg.objective.weight_scheme.alpha = alpha;
                cfg.objective.weight_scheme.gamma = gamma;
                cfg.objective.weight_scheme.beta = beta;
                try {
                    const TrainResult r = train(cfg, train_data, test_data);
                    row.ok = true;
                    row.clean_acc = r.final_eval.clean.accuracy;
                    for (const auto& a : r.final_eval.attacks) row.robust_acc.push_back(a.accuracy);
                    row.best_epoch = r.metrics.rows.back().best_epoch;
                    row.best_robust = r.metrics.rows.back().best_robust;
                    if (on_run) on_run(row, r);
                } catch (const std::exception& e) {
                    row.ok = false;
                    row.error = e.what();
                }
                out.rows.push_back(std::move(row));
            }
    return out;
}

}  // namespace virlab
