#include "virlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "virlab/error.hpp"

namespace virlab {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

using detail::Node;

struct TapeAccess {
    static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

namespace {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

const Node& node_of(const Tensor& t) {
    if (!t.defined()) throw StateError("operation on undefined tensor");
    return *TapeAccess::node(t);
}

// Create the output of an op. The backward rule is attached only when some
// input participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> rule) {
    auto out = std::make_shared<Node>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    bool needs = false;
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
    if (needs) {
        out->requires_grad = true;
        for (const Tensor* in : inputs) out->inputs.push_back(TapeAccess::node(*in));
        out->backward = std::move(rule);
    }
    return TapeAccess::wrap(std::move(out));
}

// Accumulate into an input's grad only when it participates.
inline Node* grad_target(Node& self, std::size_t i) {
    Node* in = self.inputs[i].get();
    if (!in->requires_grad) return nullptr;
    in->ensure_grad();
    return in;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_finite(std::span<const double> v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x)) throw DomainError(std::string(op) + ": non-finite input");
}

template <typename F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* op, F f,
                          std::function<void(Node&)> rule) {
    require_same_shape(a, b, op);
    auto x = a.data();
    auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
    return make_result(a.shape(), std::move(out), {&a, &b}, std::move(rule));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// -- Tensor ------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::span<const double> values) {
    return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw IndexError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).data.size(); }

std::span<const double> Tensor::data() const { return node_of(*this).data; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_rank(*this, 2, "at");
    if (r >= dim(0) || c >= dim(1)) throw IndexError("at: index out of range");
    return data()[r * dim(1) + c];
}

std::span<const double> Tensor::row(std::size_t r) const {
    require_rank(*this, 2, "row");
    if (r >= dim(0)) throw IndexError("row " + std::to_string(r) + " out of range");
    return data().subspan(r * dim(1), dim(1));
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

bool Tensor::is_leaf() const { return !node_of(*this).backward; }

bool Tensor::has_grad() const {
    const auto& n = node_of(*this);
    return !n.grad.empty() || n.data.empty();
}

std::span<const double> Tensor::grad() const {
    const auto& n = node_of(*this);
    if (n.grad.size() != n.data.size()) throw StateError("tensor has no gradient");
    return n.grad;
}

void Tensor::zero_grad() {
    auto& n = *node_;
    if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    const auto& n = node_of(*this);
    return Tensor(n.shape, n.data, false);
}

std::span<double> Tensor::mutable_data() {
    if (!defined() || !is_leaf()) throw StateError("mutable_data() is only available on leaf tensors");
    return node_->data;
}

// -- primitive ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    auto x = a.data();
    auto w = b.data();
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            const double* wr = w.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += xv * wr[j];
        }
    }
    return make_result({n, m}, std::move(out), {&a, &b}, [n, k, m](Node& self) {
        const auto& g = self.grad;
        const auto& x = self.inputs[0]->data;
        const auto& w = self.inputs[1]->data;
        if (Node* da = grad_target(self, 0)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* gr = g.data() + i * m;
                    const double* wr = w.data() + p * m;
                    for (std::size_t j = 0; j < m; ++j) acc += gr[j] * wr[j];
                    da->grad[i * k + p] += acc;
                }
        }
        if (Node* db = grad_target(self, 1)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = x[i * k + p];
                    double* dr = db->grad.data() + p * m;
                    const double* gr = g.data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) dr[j] += xv * gr[j];
                }
        }
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    require_rank(a, 2, "add_bias");
    require_rank(bias, 1, "add_bias");
    const std::size_t n = a.dim(0), m = a.dim(1);
    if (bias.dim(0) != m) throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs " + shape_str(a.shape()));
    auto x = a.data();
    auto b = bias.data();
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b[j];
    return make_result({n, m}, std::move(out), {&a, &bias}, [n, m](Node& self) {
        const auto& g = self.grad;
        if (Node* da = grad_target(self, 0))
            for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i];
        if (Node* db = grad_target(self, 1))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) db->grad[j] += g[i * m + j];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "add", std::plus<>(), [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (Node* d = grad_target(self, k))
                for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "sub", std::minus<>(), [](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] += self.grad[i];
        if (Node* d = grad_target(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "mul", std::multiplies<>(), [](Node& self) {
        const auto& x = self.inputs[0]->data;
        const auto& y = self.inputs[1]->data;
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] += self.grad[i] * y[i];
        if (Node* d = grad_target(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] += self.grad[i] * x[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
    return make_result(a.shape(), std::move(out), {&a}, [c](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) d->grad[i] += c * self.grad[i];
    });
}

Tensor relu(const Tensor& a) {
    auto x = a.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
        const auto& x = self.inputs[0]->data;
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (x[i] > 0.0) d->grad[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    auto x = a.data();
    double s = 0.0;
    for (double v : x) s += v;
    return make_result({}, {s}, {&a}, [](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (double& g : d->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor row_sum(const Tensor& a) {
    require_rank(a, 2, "row_sum");
    const std::size_t n = a.dim(0), m = a.dim(1);
    auto x = a.data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += x[i * m + j];
    return make_result({n}, std::move(out), {&a}, [m](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                for (std::size_t j = 0; j < m; ++j) d->grad[i * m + j] += self.grad[i];
    });
}

Tensor pick(const Tensor& a, std::span<const int> index) {
    require_rank(a, 2, "pick");
    const std::size_t n = a.dim(0), m = a.dim(1);
    if (index.size() != n)
        throw ShapeError("pick: " + std::to_string(index.size()) + " labels for " + std::to_string(n) + " rows");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= m)
            throw IndexError("label " + std::to_string(index[i]) + " outside [0, " + std::to_string(m) + ")");
        idx[i] = static_cast<std::size_t>(index[i]);
    }
    auto x = a.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i * m + idx[i]];
    return make_result({n}, std::move(out), {&a}, [m, idx = std::move(idx)](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < idx.size(); ++i) d->grad[i * m + idx[i]] += self.grad[i];
    });
}

// -- probability primitives --------------------------------------------------

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    require_finite(logits.data(), "softmax");
    const std::size_t n = logits.dim(0), m = logits.dim(1);
    auto z = logits.data();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zr = z.data() + i * m;
        double* o = out.data() + i * m;
        const double mx = *std::max_element(zr, zr + m);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += (o[j] = std::exp(zr[j] - mx));
        for (std::size_t j = 0; j < m; ++j) o[j] /= s;
    }
    auto probs = out;
    return make_result({n, m}, std::move(out), {&logits}, [n, m, probs = std::move(probs)](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < n; ++i) {
                const double* s = probs.data() + i * m;
                const double* g = self.grad.data() + i * m;
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j) dot += g[j] * s[j];
                for (std::size_t j = 0; j < m; ++j) d->grad[i * m + j] += s[j] * (g[j] - dot);
            }
    });
}

Tensor log_softmax(const Tensor& logits) {
    require_rank(logits, 2, "log_softmax");
    require_finite(logits.data(), "log_softmax");
    const std::size_t n = logits.dim(0), m = logits.dim(1);
    auto z = logits.data();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* zr = z.data() + i * m;
        const double mx = *std::max_element(zr, zr + m);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(zr[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = zr[j] - lse;
    }
    return make_result({n, m}, std::move(out), {&logits}, [n, m](Node& self) {
        if (Node* d = grad_target(self, 0))
            for (std::size_t i = 0; i < n; ++i) {
                const double* g = self.grad.data() + i * m;
                const double* ls = self.data.data() + i * m;
                double gs = 0.0;
                for (std::size_t j = 0; j < m; ++j) gs += g[j];
                for (std::size_t j = 0; j < m; ++j) d->grad[i * m + j] += g[j] - std::exp(ls[j]) * gs;
            }
    });
}

Tensor cross_entropy_per_sample(const Tensor& logits, std::span<const int> labels) {
    return scale(pick(log_softmax(logits), labels), -1.0);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    return mean(cross_entropy_per_sample(logits, labels));
}

Tensor kl_from_logits(const Tensor& p_logits, const Tensor& q_logits) {
    require_same_shape(p_logits, q_logits, "kl_from_logits");
    auto log_p = log_softmax(p_logits);
    auto log_q = log_softmax(q_logits);
    return row_sum(mul(softmax(p_logits), sub(log_p, log_q)));
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
    require_rank(p, 2, "kl_divergence");
    require_same_shape(p, q, "kl_divergence");
    constexpr double kNormTol = 1e-9;
    constexpr double kFloor = 1e-12;
    const std::size_t n = p.dim(0), m = p.dim(1);
    auto pd = p.data();
    auto qd = q.data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double ps = 0.0, qs = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double pj = pd[i * m + j], qj = qd[i * m + j];
            if (!(pj >= 0.0) || !(qj >= 0.0)) throw DomainError("kl_divergence: negative or NaN probability");
            ps += pj;
            qs += qj;
        }
        if (std::abs(ps - 1.0) > kNormTol || std::abs(qs - 1.0) > kNormTol)
            throw DomainError("kl_divergence: row " + std::to_string(i) + " is not normalized");
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double pj = pd[i * m + j];
            if (pj == 0.0) continue;
            acc += pj * std::log(pj / std::max(qd[i * m + j], kFloor));
        }
        // Rounding can leave tiny negatives for p == q.
        out[i] = std::max(acc, 0.0);
    }
    return Tensor({n}, std::move(out));
}

Tensor cw_margin(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "cw_margin");
    const std::size_t n = logits.dim(0), m = logits.dim(1);
    if (m < 2) throw ShapeError("cw_margin: needs at least two classes");
    if (labels.size() != n) throw ShapeError("cw_margin: label count mismatch");
    auto z = logits.data();
    std::vector<double> out(n);
    std::vector<std::size_t> runner(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= m)
            throw IndexError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(m) + ")");
        truth[i] = static_cast<std::size_t>(labels[i]);
        std::size_t best = truth[i] == 0 ? 1 : 0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != truth[i] && z[i * m + j] > z[i * m + best]) best = j;
        runner[i] = best;
        out[i] = z[i * m + best] - z[i * m + truth[i]];
    }
    return make_result({n}, std::move(out), {&logits},
                       [m, runner = std::move(runner), truth = std::move(truth)](Node& self) {
                           if (Node* d = grad_target(self, 0))
                               for (std::size_t i = 0; i < truth.size(); ++i) {
                                   d->grad[i * m + runner[i]] += self.grad[i];
                                   d->grad[i * m + truth[i]] -= self.grad[i];
                               }
                       });
}

Tensor weighted_mean(const Tensor& values, std::span<const double> weights) {
    require_rank(values, 1, "weighted_mean");
    if (weights.size() != values.dim(0))
        throw ShapeError("weighted_mean: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(values.dim(0)) + " values");
    return mean(mul(values, Tensor::vector(weights)));
}

std::vector<int> argmax_rows(const Tensor& a) {
    require_rank(a, 2, "argmax_rows");
    const std::size_t n = a.dim(0), m = a.dim(1);
    auto x = a.data();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m; ++j)
            if (x[i * m + j] > x[i * m + best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
    std::vector<double> out(labels.size() * num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw IndexError("one_hot: label out of range");
        out[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return Tensor({labels.size(), num_classes}, std::move(out));
}

// -- differentiation ---------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined()) throw StateError("backward on undefined tensor");
    if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    const auto& root = TapeAccess::node(loss);
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (inputs first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward) continue;
        node->ensure_grad();
        node->backward(*node);
        // Interior buffers are not observable; release them so repeated
        // backward calls on the same graph stay exact.
        if (node != root.get()) std::vector<double>().swap(node->grad);
    }
    if (root->backward) std::vector<double>().swap(root->grad);
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    auto base = x.data();
    std::vector<double> out(base.size());
    std::vector<double> probe(base.begin(), base.end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(Tensor(x.shape(), probe));
        probe[i] = orig - h;
        const double down = f(Tensor(x.shape(), probe));
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    return Tensor(x.shape(), std::move(out));
}

}  // namespace virlab
