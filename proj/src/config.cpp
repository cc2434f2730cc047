#include "virlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "virlab/error.hpp"

namespace virlab {

using nlohmann::json;

namespace {

// Reads fields out of a JSON object and rejects any key nobody asked for.
class Fields {
public:
    Fields(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
        if (!doc_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    template <typename T>
    void get_optional(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        T v{};
        try {
            v = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
        out = v;
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const {
        for (const auto& [key, _] : doc_.items())
            if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }

private:
    const json& doc_;
    std::string where_;
    std::set<std::string> seen_;
};

json bounds_json(const std::optional<Bounds>& b) {
    if (!b) return nullptr;
    return json::array({b->lo, b->hi});
}

std::optional<Bounds> bounds_from(const json& j, const std::string& where) {
    if (j.is_null()) return std::nullopt;
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(where + ": bounds must be null or [lo, hi]");
    Bounds b{j[0].get<double>(), j[1].get<double>()};
    if (!(b.lo < b.hi)) throw ConfigError(where + ": bounds need lo < hi");
    return b;
}

template <typename T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename E, typename Parse>
void get_enum(Fields& f, const std::string& key, E& out, Parse parse) {
    std::string s;
    bool present = false;
    if (const json* j = f.child(key)) {
        if (!j->is_string()) throw ConfigError(f.path(key) + ": expected a string");
        s = j->get<std::string>();
        present = true;
    }
    if (present) out = parse(s);
}

}  // namespace

std::string to_string(DataSource s) {
    switch (s) {
        case DataSource::GMM: return "gmm";
        case DataSource::MULTICLASS: return "multiclass";
        case DataSource::IDX: return "idx";
        case DataSource::CSV: return "csv";
    }
    return "?";
}

DataSource data_source_from_string(const std::string& s) {
    if (s == "gmm") return DataSource::GMM;
    if (s == "multiclass") return DataSource::MULTICLASS;
    if (s == "idx") return DataSource::IDX;
    if (s == "csv") return DataSource::CSV;
    throw ConfigError("unknown data source '" + s + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    optimizer.validate(epochs);
    objective.validate();
    attack_train.validate();
    if (objective.is_trades() && attack_train.family != AttackFamily::PGD && attack_train.family != AttackFamily::FGSM)
        throw ConfigError("TRADES objectives need a PGD or FGSM training attack");
    if (objective.weight_scheme.family == WeightFamily::GAIRAT && objective.is_weighted() &&
        attack_train.family != AttackFamily::PGD)
        throw ConfigError("GAIRAT weights need a PGD training attack");
    std::set<std::string> names;
    for (const auto& a : attack_eval) {
        a.validate();
        if (a.loss_mode == LossMode::KL) throw ConfigError("evaluation attack '" + a.name + "' cannot use KL loss");
        if (a.name.empty()) throw ConfigError("evaluation attacks need a name");
        if (a.name == "clean") throw ConfigError("'clean' is reserved and cannot name an attack");
        if (!names.insert(a.name).second) throw ConfigError("duplicate evaluation attack name '" + a.name + "'");
    }
    for (std::size_t h : hidden)
        if (h == 0) throw ConfigError("hidden widths must be >= 1");
    if (logging.eval_every < 1) throw ConfigError("logging.eval_every must be >= 1");
    if (logging.weights_every < 0) throw ConfigError("logging.weights_every must be >= 0");
    switch (data.source) {
        case DataSource::GMM:
            data.gmm.spec.validate();
            if (data.gmm.train_n < 2 || data.gmm.test_n < 1) throw ConfigError("gmm data sizes too small");
            break;
        case DataSource::MULTICLASS:
            if (data.multiclass.variances.size() < 2) throw ConfigError("multiclass data needs >= 2 classes");
            if (data.multiclass.train_per_class < 1 || data.multiclass.test_per_class < 1)
                throw ConfigError("multiclass per-class sizes must be >= 1");
            break;
        case DataSource::IDX:
            if (data.idx.train_images.empty() || data.idx.train_labels.empty() || data.idx.test_images.empty() ||
                data.idx.test_labels.empty())
                throw ConfigError("idx data needs train/test image and label paths");
            break;
        case DataSource::CSV:
            if (data.csv.train.empty() || data.csv.test.empty()) throw ConfigError("csv data needs train and test paths");
            break;
    }
}

TrainConfig desk_profile() {
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = 64;
    c.optimizer.base_lr = 0.05;
    c.optimizer.weight_decay = 5e-4;
    c.optimizer.milestones = {20, 25};
    c.objective.family = ObjectiveFamily::VIR_AT;
    c.objective.weight_scheme = WeightScheme::vir_at();
    c.objective.weight_scheme.burn_in_epoch = 18;
    c.hidden = {64};
    c.data.source = DataSource::MULTICLASS;

    // Perturbation budget is a quarter of the class separation.
    const double eps = 0.25 * c.data.multiclass.separation;
    c.attack_train = AttackSpec::pgd(eps, eps / 4.0, 10);
    c.attack_train.name = "pgd10";
    c.attack_train.bounds.reset();
    auto pgd20 = AttackSpec::pgd(eps, eps / 8.0, 20);
    pgd20.name = "pgd20";
    pgd20.bounds.reset();
    auto fgsm = AttackSpec::fgsm(eps);
    fgsm.name = "fgsm";
    fgsm.bounds.reset();
    c.attack_eval = {fgsm, pgd20};
    c.output_dir = "run";
    return c;
}

TrainConfig paper_profile() {
    TrainConfig c;
    c.epochs = 115;
    c.batch_size = 128;
    c.optimizer = OptimizerConfig{};
    c.optimizer.base_lr = 0.01;
    c.optimizer.weight_decay = 3.5e-3;
    c.optimizer.milestones = {75, 90};
    c.objective.family = ObjectiveFamily::VIR_AT;
    c.objective.weight_scheme = WeightScheme::vir_at();
    c.objective.weight_scheme.burn_in_epoch = 75;
    c.hidden = {256, 256};
    c.attack_train = AttackSpec::pgd(8.0 / 255.0, 2.0 / 255.0, 10);
    c.attack_train.name = "pgd10";
    auto fgsm = AttackSpec::fgsm(8.0 / 255.0);
    fgsm.name = "fgsm";
    auto pgd20 = AttackSpec::pgd(8.0 / 255.0, 2.0 / 255.0, 20);
    pgd20.name = "pgd20";
    auto pgd100 = AttackSpec::pgd(8.0 / 255.0, 1.0 / 255.0, 100);
    pgd100.name = "pgd100";
    auto cw = AttackSpec::cw_pgd(8.0 / 255.0, 2.0 / 255.0, 30);
    cw.name = "cw";
    auto spsa = AttackSpec::spsa(8.0 / 255.0, 100);
    spsa.name = "spsa";
    c.attack_eval = {fgsm, pgd20, pgd100, cw, spsa};
    c.data.source = DataSource::IDX;
    c.data.idx.train_images = "data/train-images-idx3-ubyte";
    c.data.idx.train_labels = "data/train-labels-idx1-ubyte";
    c.data.idx.test_images = "data/t10k-images-idx3-ubyte";
    c.data.idx.test_labels = "data/t10k-labels-idx1-ubyte";
    c.output_dir = "run";
    return c;
}

TrainConfig profile(const std::string& name) {
    if (name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

json to_json(const AttackSpec& s) {
    return json{{"name", s.name},
                {"family", to_string(s.family)},
                {"epsilon", s.epsilon},
                {"step_size", s.step_size},
                {"iterations", s.iterations},
                {"loss_mode", to_string(s.loss_mode)},
                {"bounds", bounds_json(s.bounds)},
                {"random_start", s.random_start},
                {"start_noise", s.start_noise},
                {"spsa_samples", s.spsa_samples},
                {"spsa_perturb", s.spsa_perturb},
                {"spsa_lr", s.spsa_lr},
                {"seed", s.seed}};
}

json to_json(const WeightScheme& s) {
    return json{{"family", to_string(s.family)}, {"alpha", s.alpha},
                {"gamma", s.gamma},              {"beta", s.beta},
                {"lambda_g", s.lambda_g},        {"k_pgd", s.k_pgd},
                {"burn_in_epoch", s.burn_in_epoch}, {"sv_override", opt_json(s.sv_override)},
                {"sd_override", opt_json(s.sd_override)}};
}

json to_json(const ObjectiveSpec& s) {
    return json{{"family", to_string(s.family)},
                {"trade_off", s.trade_off},
                {"ablation", to_string(s.ablation)},
                {"weights", to_json(s.weight_scheme)}};
}

json to_json(const TrainConfig& c) {
    json eval = json::array();
    for (const auto& a : c.attack_eval) eval.push_back(to_json(a));
    const auto& g = c.data.gmm;
    const auto& m = c.data.multiclass;
    return json{
        {"objective", to_json(c.objective)},
        {"attack_train", to_json(c.attack_train)},
        {"attack_eval", eval},
        {"optimizer",
         {{"base_lr", c.optimizer.base_lr},
          {"momentum", c.optimizer.momentum},
          {"weight_decay", c.optimizer.weight_decay},
          {"milestones", c.optimizer.milestones},
          {"decay_factor", c.optimizer.decay_factor}}},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"eval_seed", c.eval_seed},
        {"hidden", c.hidden},
        {"data",
         {{"source", to_string(c.data.source)},
          {"seed", c.data.seed},
          {"gmm",
           {{"d", g.spec.d},
            {"eta", g.spec.eta},
            {"sigma", g.spec.sigma},
            {"k_var", g.spec.k_var},
            {"prior", g.spec.prior},
            {"train_n", g.train_n},
            {"test_n", g.test_n}}},
          {"multiclass",
           {{"variances", m.variances},
            {"separation", m.separation},
            {"d", m.d},
            {"train_per_class", m.train_per_class},
            {"test_per_class", m.test_per_class}}},
          {"idx",
           {{"train_images", c.data.idx.train_images},
            {"train_labels", c.data.idx.train_labels},
            {"test_images", c.data.idx.test_images},
            {"test_labels", c.data.idx.test_labels},
            {"train_limit", opt_json(c.data.idx.train_limit)},
            {"test_limit", opt_json(c.data.idx.test_limit)}}},
          {"csv", {{"train", c.data.csv.train}, {"test", c.data.csv.test}, {"bounds", bounds_json(c.data.csv.bounds)}}}}},
        {"logging",
         {{"eval_every", c.logging.eval_every},
          {"weights_every", c.logging.weights_every},
          {"eval_limit", c.logging.eval_limit}}},
        {"output_dir", c.output_dir}};
}

AttackSpec attack_from_json(const json& doc, AttackSpec s) {
    Fields f(doc, "attack");
    f.get("name", s.name);
    get_enum(f, "family", s.family, attack_family_from_string);
    f.get("epsilon", s.epsilon);
    f.get("step_size", s.step_size);
    f.get("iterations", s.iterations);
    get_enum(f, "loss_mode", s.loss_mode, loss_mode_from_string);
    if (const json* b = f.child("bounds")) s.bounds = bounds_from(*b, f.path("bounds"));
    f.get("random_start", s.random_start);
    f.get("start_noise", s.start_noise);
    f.get("spsa_samples", s.spsa_samples);
    f.get("spsa_perturb", s.spsa_perturb);
    f.get("spsa_lr", s.spsa_lr);
    f.get("seed", s.seed);
    f.finish();
    return s;
}

WeightScheme weight_scheme_from_json(const json& doc, WeightScheme s) {
    Fields f(doc, "weights");
    get_enum(f, "family", s.family, weight_family_from_string);
    f.get("alpha", s.alpha);
    f.get("gamma", s.gamma);
    f.get("beta", s.beta);
    f.get("lambda_g", s.lambda_g);
    f.get("k_pgd", s.k_pgd);
    f.get("burn_in_epoch", s.burn_in_epoch);
    f.get_optional("sv_override", s.sv_override);
    f.get_optional("sd_override", s.sd_override);
    f.finish();
    return s;
}

ObjectiveSpec objective_from_json(const json& doc, ObjectiveSpec s) {
    Fields f(doc, "objective");
    get_enum(f, "family", s.family, objective_family_from_string);
    f.get("trade_off", s.trade_off);
    get_enum(f, "ablation", s.ablation, ablation_from_string);
    if (const json* w = f.child("weights")) s.weight_scheme = weight_scheme_from_json(*w, s.weight_scheme);
    f.finish();
    return s;
}

TrainConfig config_from_json(const json& doc, TrainConfig c) {
    Fields f(doc, "config");
    if (const json* o = f.child("objective")) c.objective = objective_from_json(*o, c.objective);
    if (const json* a = f.child("attack_train")) c.attack_train = attack_from_json(*a, c.attack_train);
    if (const json* list = f.child("attack_eval")) {
        if (!list->is_array()) throw ConfigError("config.attack_eval: expected an array");
        c.attack_eval.clear();
        for (const auto& a : *list) c.attack_eval.push_back(attack_from_json(a));
    }
    if (const json* o = f.child("optimizer")) {
        Fields g(*o, "optimizer");
        g.get("base_lr", c.optimizer.base_lr);
        g.get("momentum", c.optimizer.momentum);
        g.get("weight_decay", c.optimizer.weight_decay);
        g.get("milestones", c.optimizer.milestones);
        g.get("decay_factor", c.optimizer.decay_factor);
        g.finish();
    }
    f.get("epochs", c.epochs);
    f.get("batch_size", c.batch_size);
    f.get("seed", c.seed);
    f.get("eval_seed", c.eval_seed);
    f.get("hidden", c.hidden);
    if (const json* d = f.child("data")) {
        Fields g(*d, "data");
        get_enum(g, "source", c.data.source, data_source_from_string);
        g.get("seed", c.data.seed);
        if (const json* j = g.child("gmm")) {
            Fields h(*j, "data.gmm");
            h.get("d", c.data.gmm.spec.d);
            h.get("eta", c.data.gmm.spec.eta);
            h.get("sigma", c.data.gmm.spec.sigma);
            h.get("k_var", c.data.gmm.spec.k_var);
            h.get("prior", c.data.gmm.spec.prior);
            h.get("train_n", c.data.gmm.train_n);
            h.get("test_n", c.data.gmm.test_n);
            h.finish();
        }
        if (const json* j = g.child("multiclass")) {
            Fields h(*j, "data.multiclass");
            h.get("variances", c.data.multiclass.variances);
            h.get("separation", c.data.multiclass.separation);
            h.get("d", c.data.multiclass.d);
            h.get("train_per_class", c.data.multiclass.train_per_class);
            h.get("test_per_class", c.data.multiclass.test_per_class);
            h.finish();
        }
        if (const json* j = g.child("idx")) {
            Fields h(*j, "data.idx");
            h.get("train_images", c.data.idx.train_images);
            h.get("train_labels", c.data.idx.train_labels);
            h.get("test_images", c.data.idx.test_images);
            h.get("test_labels", c.data.idx.test_labels);
            h.get_optional("train_limit", c.data.idx.train_limit);
            h.get_optional("test_limit", c.data.idx.test_limit);
            h.finish();
        }
        if (const json* j = g.child("csv")) {
            Fields h(*j, "data.csv");
            h.get("train", c.data.csv.train);
            h.get("test", c.data.csv.test);
            if (const json* b = h.child("bounds")) c.data.csv.bounds = bounds_from(*b, "data.csv.bounds");
            h.finish();
        }
        g.finish();
    }
    if (const json* l = f.child("logging")) {
        Fields g(*l, "logging");
        g.get("eval_every", c.logging.eval_every);
        g.get("weights_every", c.logging.weights_every);
        g.get("eval_limit", c.logging.eval_limit);
        g.finish();
    }
    f.get("output_dir", c.output_dir);
    f.finish();
    return c;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(doc, std::move(base));
}

std::string dump_config(const TrainConfig& config) { return to_json(config).dump(2) + "\n"; }

std::pair<Dataset, Dataset> load_data(const DataConfig& d) {
    Dataset train, test;
    switch (d.source) {
        case DataSource::GMM:
            train = gmm_dataset(d.gmm.spec, d.gmm.train_n, derive_seed(d.seed, {1}));
            test = gmm_dataset(d.gmm.spec, d.gmm.test_n, derive_seed(d.seed, {2}));
            break;
        case DataSource::MULTICLASS: {
            const auto& m = d.multiclass;
            const std::size_t c = m.variances.size();
            const std::vector<std::size_t> tr(c, m.train_per_class), te(c, m.test_per_class);
            train = synth_multiclass(c, tr, m.variances, m.separation, m.d, derive_seed(d.seed, {1}));
            test = synth_multiclass(c, te, m.variances, m.separation, m.d, derive_seed(d.seed, {2}));
            break;
        }
        case DataSource::IDX:
            train = load_idx(d.idx.train_images, d.idx.train_labels, d.idx.train_limit);
            test = load_idx(d.idx.test_images, d.idx.test_labels, d.idx.test_limit);
            break;
        case DataSource::CSV:
            train = load_csv(d.csv.train, d.csv.bounds);
            test = load_csv(d.csv.test, d.csv.bounds);
            break;
    }
    if (train.dim() != test.dim()) throw ConfigError("train and test feature dimensions differ");
    const std::size_t classes = std::max(train.num_classes, test.num_classes);
    train.num_classes = test.num_classes = classes;
    return {std::move(train), std::move(test)};
}

}  // namespace virlab
