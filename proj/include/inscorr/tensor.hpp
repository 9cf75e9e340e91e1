#pragma once

// Dense float64 tensors with a tape-free reverse-mode autodiff graph.
//
// A Tensor is a cheap handle (shared ownership) to a graph node. Every op
// returns a new node that remembers its parents and a closure computing the
// parents' gradient contributions. backward() walks the graph once in reverse
// topological order.
//
// Gradient semantics:
//   * leaves (tensors created directly, not by an op) accumulate gradients
//     across backward() calls until zero_grad();
//   * interior nodes are reset at the start of every backward() call.
//
// relu'(0) is defined as 0.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace inscorr {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }

    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    std::size_t rank() const { return shape().size(); }

    std::span<const double> values() const;
    // Only valid on leaves; used by optimizers and attack loops to update in
    // place between graph constructions.
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t i) const { return values()[i]; }

    bool requires_grad() const;
    bool is_leaf() const;
    // Empty span until a backward pass reached this tensor.
    std::span<const double> grad() const;
    bool has_grad() const;
    void zero_grad();

    // The loss must hold exactly one element.
    void backward() const;

    // A new leaf holding a copy of the values, outside any graph.
    Tensor detach(bool requires_grad = false) const;

    const std::string& op() const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend struct TensorAccess;
};

// --- ops -------------------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

enum class ElementwiseOp { Add, Sub, Mul, Relu, Scale };

// Generic entry point; `b` is ignored for Relu, and for Scale the scalar is
// used instead of `b`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseOp op, const Tensor& a, double scalar);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

// [m,n] + [n] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);

// Reductions produce a one-element tensor of shape {1}.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Picks entries of a rank-1 tensor.
Tensor gather(const Tensor& a, std::span<const std::size_t> indices);

// Per-example -log softmax(logits_i)[label_i], shape {b}.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax, computed outside the graph.
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace inscorr
