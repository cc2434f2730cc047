#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "virlab/attacks.hpp"
#include "virlab/classifier.hpp"
#include "virlab/config.hpp"
#include "virlab/error.hpp"
#include "virlab/gmm.hpp"
#include "virlab/report.hpp"
#include "virlab/reweighting.hpp"
#include "virlab/train.hpp"

namespace py = pybind11;
using namespace virlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() == 1) return Tensor({1, static_cast<std::size_t>(a.shape(0))}, std::vector<double>(a.data(), a.data() + a.size()));
    if (a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array");
    return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                  std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

}  // namespace

PYBIND11_MODULE(_virlab, m) {
    m.doc() = "Reweighted adversarial training core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

    m.def("s_v", &s_v, py::arg("prob_true"), py::arg("alpha") = 7.0, py::arg("gamma") = 10.0);
    m.def(
        "s_d", [](const Array& p, const Array& q) { return s_d(to_vector(p), to_vector(q)); }, py::arg("p_nat"),
        py::arg("p_adv"));
    m.def("vir_weight", &vir_weight, py::arg("s_v"), py::arg("s_d"), py::arg("beta") = 0.007);
    m.def("gairat_weight", &gairat_weight, py::arg("k"), py::arg("k_pgd") = 10, py::arg("lambda_g") = -1.0);
    m.def(
        "mail_margin", [](const Array& p, int y) { return mail_margin(to_vector(p), y); }, py::arg("p_adv"),
        py::arg("y"));
    m.def("mail_weight", &mail_weight, py::arg("margin"), py::arg("gamma") = 10.0, py::arg("beta") = 0.0);
    m.def(
        "softmax", [](const Array& logits) { return to_array(softmax(to_tensor(logits))); }, py::arg("logits"));
    m.def(
        "kl_divergence",
        [](const Array& p, const Array& q) {
            const auto kl = kl_divergence(to_tensor(p), to_tensor(q));
            return std::vector<double>(kl.data().begin(), kl.data().end());
        },
        py::arg("p"), py::arg("q"), "Row-wise KL(p || q) of probability rows.");

    m.def(
        "theorem_risks",
        [](int d, double eta, double sigma, double k) {
            const auto r = gmm::theorem1_risks({d, eta, sigma, k, 0.5});
            return py::make_tuple(r.minus, r.plus);
        },
        py::arg("d"), py::arg("eta"), py::arg("sigma"), py::arg("k"),
        "Class-wise natural risks (R-, R+) of the optimal linear classifier.");
    m.def(
        "thresholds",
        [](int d, double eta, double sigma, double k) {
            const gmm::GmmSpec s{d, eta, sigma, k, 0.5};
            return py::make_tuple(gmm::threshold_from_plus(s), gmm::threshold_from_minus(s));
        },
        py::arg("d"), py::arg("eta"), py::arg("sigma"), py::arg("k"));
    m.def(
        "theory_row",
        [](int d, double eta, double sigma, double k, std::size_t n, std::uint64_t seed) {
            const auto r = theory_row({d, eta, sigma, k, 0.5}, n, seed);
            py::dict out;
            out["r_minus"] = r.closed.minus;
            out["r_plus"] = r.closed.plus;
            out["mc_r_minus"] = r.mc.minus;
            out["mc_r_plus"] = r.mc.plus;
            out["se_minus"] = r.mc.se_minus;
            out["se_plus"] = r.mc.se_plus;
            out["pass_mc"] = r.pass_mc;
            out["pass_ordering"] = r.pass_ordering;
            out["pass_threshold"] = r.pass_threshold;
            return out;
        },
        py::arg("d"), py::arg("eta"), py::arg("sigma"), py::arg("k"), py::arg("n") = 100000, py::arg("seed") = 0);

    py::class_<Classifier>(m, "Classifier")
        .def(py::init([](std::vector<std::size_t> widths, std::uint64_t seed) {
                 return init_classifier(Architecture{std::move(widths)}, seed);
             }),
             py::arg("widths"), py::arg("seed") = 0)
        .def_property_readonly("widths", [](const Classifier& c) { return c.arch().widths; })
        .def_property_readonly("parameter_count", &Classifier::parameter_count)
        .def("forward", [](const Classifier& c, const Array& x) { return to_array(c.frozen().forward(to_tensor(x))); })
        .def("predict", [](const Classifier& c, const Array& x) { return c.predict(to_tensor(x)); })
        .def(
            "save", [](const Classifier& c, const std::filesystem::path& p) { save_checkpoint(c, p); }, py::arg("path"))
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; }, py::arg("path"));

    m.def(
        "attack",
        [](const Classifier& model, const Array& x, std::vector<int> y, const std::string& family, double epsilon,
           double step_size, int iterations, const std::string& loss_mode, std::optional<std::pair<double, double>> bounds,
           std::uint64_t seed) {
            AttackSpec spec;
            spec.name = family;
            spec.family = attack_family_from_string(family);
            spec.epsilon = epsilon;
            spec.step_size = step_size;
            spec.iterations = iterations;
            spec.loss_mode = loss_mode_from_string(loss_mode);
            spec.bounds = bounds ? std::optional<Bounds>(Bounds{bounds->first, bounds->second}) : std::nullopt;
            spec.seed = seed;
            spec.validate();
            return to_array(run_attack(model, to_tensor(x), y, spec));
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("family") = "PGD", py::arg("epsilon") = 8.0 / 255.0,
        py::arg("step_size") = 2.0 / 255.0, py::arg("iterations") = 10, py::arg("loss_mode") = "CE",
        py::arg("bounds") = std::make_pair(0.0, 1.0), py::arg("seed") = 0);

    m.def(
        "default_config", [](const std::string& name) { return dump_config(profile(name)); },
        py::arg("profile") = "desk", "Resolved JSON configuration of a named profile.");

    m.def(
        "train",
        [](const std::string& config_json, std::optional<std::filesystem::path> out_dir, const std::string& base) {
            const TrainConfig cfg = config_from_json(nlohmann::json::parse(config_json), profile(base));
            TrainResult r = [&] {
                py::gil_scoped_release release;
                return train(cfg);
            }();
            if (out_dir) write_run(r, cfg, *out_dir);
            py::dict out;
            out["clean_acc"] = r.final_eval.clean.accuracy;
            py::dict robust;
            for (const auto& a : r.final_eval.attacks) robust[py::str(a.name)] = a.accuracy;
            out["robust_acc"] = robust;
            out["metrics_csv"] = metrics_csv(r.metrics);
            out["step_losses"] = r.step_losses;
            out["model"] = std::move(r.model);
            return out;
        },
        py::arg("config_json") = "{}", py::arg("out_dir") = py::none(), py::arg("profile") = "desk",
        "Train from a JSON document layered over a profile; returns accuracies, metrics CSV and the model.");
}
