#pragma once

// Dense f64 tensors with a dynamically recorded reverse-mode tape.
//
// Every operation that receives at least one input requiring a gradient
// records a node holding its inputs and a local backward rule. The nodes form
// a DAG owned by the result tensor; backward() walks it in reverse
// topological order and accumulates into the grad buffers of leaves.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace virlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
public:
    /// Undefined tensor; defined() is false.
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    /// Rank-1 tensor copied from a span.
    static Tensor vector(std::span<const double> values);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    double item() const;
    double operator[](std::size_t flat_index) const { return data()[flat_index]; }
    double at(std::size_t row, std::size_t col) const;
    std::span<const double> row(std::size_t r) const;

    bool requires_grad() const;
    /// A tensor with no recorded producer (user-created or detached).
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Same values, no tape linkage, no gradient requirement.
    Tensor detach() const;

    /// In-place access for leaves only (parameter updates). Throws StateError otherwise.
    std::span<double> mutable_data();

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend struct TapeAccess;
};

// -- primitive operations ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);         // [n,k] x [k,m]
Tensor add_bias(const Tensor& a, const Tensor& bias);    // [n,m] + [m]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [n,C] -> [n], sum over columns.
Tensor row_sum(const Tensor& a);
/// [n,C] -> [n], element (i, index[i]).
Tensor pick(const Tensor& a, std::span<const int> index);

// -- probability primitives --------------------------------------------------

/// Row-wise softmax with max shift. Non-finite input -> DomainError.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

/// Per-sample -log softmax(logits)_y via log-sum-exp, shape [n].
Tensor cross_entropy_per_sample(const Tensor& logits, std::span<const int> labels);
/// Batch mean of cross_entropy_per_sample, scalar.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Per-row KL(softmax(p_logits) || softmax(q_logits)), differentiable through both, shape [n].
Tensor kl_from_logits(const Tensor& p_logits, const Tensor& q_logits);

/// Per-row KL(p || q) of probability rows, value-only (no tape), shape [n].
/// Rows must be stochastic within 1e-9 (DomainError otherwise); 0 ln 0 = 0 and
/// q is clamped below at 1e-12.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

/// Per-sample Carlini-Wagner margin max_{j != y} z_j - z_y, shape [n].
Tensor cw_margin(const Tensor& logits, std::span<const int> labels);

/// (1/n) sum_i w_i v_i for v of shape [n]; weights enter as constants.
Tensor weighted_mean(const Tensor& values, std::span<const double> weights);

/// argmax per row, ties to the lowest index.
std::vector<int> argmax_rows(const Tensor& a);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

// -- differentiation ---------------------------------------------------------

/// Populate grad of every requires_grad leaf reachable from `loss`.
/// Gradients accumulate; call zero_grad() between steps. Non-scalar -> ShapeError.
void backward(const Tensor& loss);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for each coordinate of x.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace virlab
