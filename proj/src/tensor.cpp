#include "inscorr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "inscorr/errors.hpp"

namespace inscorr {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and adds into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

using detail::Node;

struct TensorAccess {
    static const std::shared_ptr<Node>& node(const Tensor& t) {
        if (!t.node_) throw ContractError("use of an undefined tensor");
        return t.node_;
    }
    static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    if (shape_numel(shape) != values.size())
        throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                             " values, got " + std::to_string(values.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

// Builds an interior node. The closure is attached only when some parent
// participates in differentiation.
std::shared_ptr<Node> make_op(std::string op, Shape shape, std::vector<double> values,
                              std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->op = std::move(op);
    n->leaf = false;
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void require_same_shape(const char* op, const Node& a, const Node& b) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto numel = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(numel, 0.0), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return TensorAccess::node(*this)->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return TensorAccess::node(*this)->values.size(); }

std::span<const double> Tensor::values() const { return TensorAccess::node(*this)->values; }

std::span<double> Tensor::mutable_values() {
    auto& n = TensorAccess::node(*this);
    if (!n->leaf) throw ContractError("mutable_values() on a non-leaf tensor (op " + n->op + ")");
    return n->values;
}

double Tensor::item() const {
    const auto& n = TensorAccess::node(*this);
    if (n->values.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(n->shape));
    return n->values[0];
}

bool Tensor::requires_grad() const { return TensorAccess::node(*this)->requires_grad; }
bool Tensor::is_leaf() const { return TensorAccess::node(*this)->leaf; }
std::span<const double> Tensor::grad() const { return TensorAccess::node(*this)->grad; }
bool Tensor::has_grad() const { return !TensorAccess::node(*this)->grad.empty(); }
void Tensor::zero_grad() { TensorAccess::node(*this)->grad.clear(); }
const std::string& Tensor::op() const { return TensorAccess::node(*this)->op; }

Tensor Tensor::detach(bool requires_grad) const {
    const auto& n = TensorAccess::node(*this);
    return Tensor(make_leaf(n->shape, n->values, requires_grad));
}

void Tensor::backward() const {
    const auto& root = TensorAccess::node(*this);
    if (root->values.size() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root->shape));
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order)
        if (!n->leaf) n->grad.assign(n->values.size(), 0.0);
    root->ensure_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    const auto& a = TensorAccess::node(ta);
    const auto& b = TensorAccess::node(tb);
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a->values[i * k + p];
            const double* brow = b->values.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    return TensorAccess::wrap(make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const auto& g = self.grad;
        if (a.requires_grad) {
            auto& ga = a.ensure_grad();
            // dA = G B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g.data() + i * n;
                    const double* brow = b.values.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (b.requires_grad) {
            auto& gb = b.ensure_grad();
            // dB = A^T G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = a.values[i * k + p];
                    const double* grow = g.data() + i * n;
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
        }
    }));
}

Tensor elementwise(ElementwiseOp op, const Tensor& ta, const Tensor& tb) {
    switch (op) {
        case ElementwiseOp::Relu: return relu(ta);
        case ElementwiseOp::Scale: {
            const auto& b = TensorAccess::node(tb);
            if (b->values.size() != 1) throw DimensionError("scale: factor must be a single value, got " + shape_str(b->shape));
            return scale(ta, b->values[0]);
        }
        default: break;
    }
    const auto& a = TensorAccess::node(ta);
    const auto& b = TensorAccess::node(tb);
    const char* name = op == ElementwiseOp::Add ? "add" : op == ElementwiseOp::Sub ? "sub" : "mul";
    require_same_shape(name, *a, *b);
    std::vector<double> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a->values[i], y = b->values[i];
        out[i] = op == ElementwiseOp::Add ? x + y : op == ElementwiseOp::Sub ? x - y : x * y;
    }
    return TensorAccess::wrap(make_op(name, a->shape, std::move(out), {a, b}, [op](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        const auto& g = self.grad;
        if (a.requires_grad) {
            auto& ga = a.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += op == ElementwiseOp::Mul ? g[i] * b.values[i] : g[i];
        }
        if (b.requires_grad) {
            auto& gb = b.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (op == ElementwiseOp::Add) gb[i] += g[i];
                else if (op == ElementwiseOp::Sub) gb[i] -= g[i];
                else gb[i] += g[i] * a.values[i];
            }
        }
    }));
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, double scalar) {
    switch (op) {
        case ElementwiseOp::Scale: return scale(a, scalar);
        case ElementwiseOp::Relu: return relu(a);
        default: {
            const auto& n = TensorAccess::node(a);
            return elementwise(op, a, Tensor::from(n->shape, std::vector<double>(n->values.size(), scalar)));
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Mul, a, b); }

Tensor relu(const Tensor& ta) {
    const auto& a = TensorAccess::node(ta);
    std::vector<double> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
    return TensorAccess::wrap(make_op("relu", a->shape, std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        auto& ga = a.ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (a.values[i] > 0.0) ga[i] += self.grad[i];
    }));
}

Tensor scale(const Tensor& ta, double factor) {
    const auto& a = TensorAccess::node(ta);
    std::vector<double> out(a->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->values[i] * factor;
    return TensorAccess::wrap(make_op("scale", a->shape, std::move(out), {a}, [factor](Node& self) {
        auto& ga = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * factor;
    }));
}

Tensor add_bias(const Tensor& ta, const Tensor& tbias) {
    const auto& a = TensorAccess::node(ta);
    const auto& bias = TensorAccess::node(tbias);
    if (a->shape.size() != 2 || bias->shape.size() != 1 || bias->shape[0] != a->shape[1])
        throw DimensionError("add_bias: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(bias->shape));
    const std::size_t m = a->shape[0], n = a->shape[1];
    std::vector<double> out(a->values);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias->values[j];
    return TensorAccess::wrap(make_op("add_bias", a->shape, std::move(out), {a, bias}, [m, n](Node& self) {
        Node& a = *self.parents[0];
        Node& bias = *self.parents[1];
        if (a.requires_grad) {
            auto& ga = a.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (bias.requires_grad) {
            auto& gb = bias.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
        }
    }));
}

Tensor sum(const Tensor& ta) {
    const auto& a = TensorAccess::node(ta);
    double s = 0.0;
    for (double v : a->values) s += v;
    return TensorAccess::wrap(make_op("sum", {1}, {s}, {a}, [](Node& self) {
        auto& ga = self.parents[0]->ensure_grad();
        for (auto& g : ga) g += self.grad[0];
    }));
}

Tensor mean(const Tensor& ta) {
    const auto& a = TensorAccess::node(ta);
    const double count = static_cast<double>(a->values.size());
    double s = 0.0;
    for (double v : a->values) s += v;
    return TensorAccess::wrap(make_op("mean", {1}, {s / count}, {a}, [count](Node& self) {
        auto& ga = self.parents[0]->ensure_grad();
        const double g = self.grad[0] / count;
        for (auto& v : ga) v += g;
    }));
}

Tensor gather(const Tensor& ta, std::span<const std::size_t> indices) {
    const auto& a = TensorAccess::node(ta);
    if (a->shape.size() != 1) throw DimensionError("gather: expected a rank-1 tensor, got " + shape_str(a->shape));
    if (indices.empty()) throw ContractError("gather: empty index list");
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a->values.size())
            throw DimensionError("gather: index " + std::to_string(indices[i]) + " out of range for " + shape_str(a->shape));
        out[i] = a->values[indices[i]];
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return TensorAccess::wrap(make_op("gather", {idx.size()}, std::move(out), {a}, [idx = std::move(idx)](Node& self) {
        auto& ga = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += self.grad[i];
    }));
}

Tensor softmax_cross_entropy(const Tensor& tlogits, std::span<const int> labels) {
    const auto& z = TensorAccess::node(tlogits);
    if (z->shape.size() != 2) throw DimensionError("softmax_cross_entropy: logits must be [b,c], got " + shape_str(z->shape));
    const std::size_t b = z->shape[0], c = z->shape[1];
    if (labels.size() != b)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
    for (std::size_t i = 0; i < b; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw LabelError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                 " outside [0," + std::to_string(c) + ")",
                             i);

    std::vector<double> probs(b * c);
    std::vector<double> loss(b);
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = z->values.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double log_denom = std::log(denom);
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx - log_denom);
        loss[i] = -(row[labels[i]] - mx - log_denom);
    }
    std::vector<int> y(labels.begin(), labels.end());
    return TensorAccess::wrap(make_op("softmax_cross_entropy", {b}, std::move(loss), {z},
                                      [b, c, probs = std::move(probs), y = std::move(y)](Node& self) {
                                          auto& gz = self.parents[0]->ensure_grad();
                                          for (std::size_t i = 0; i < b; ++i) {
                                              const double g = self.grad[i];
                                              for (std::size_t j = 0; j < c; ++j) {
                                                  const double onehot = static_cast<int>(j) == y[i] ? 1.0 : 0.0;
                                                  gz[i * c + j] += g * (probs[i * c + j] - onehot);
                                              }
                                          }
                                      }));
}

std::vector<double> softmax_rows(const Tensor& tlogits) {
    const auto& z = TensorAccess::node(tlogits);
    if (z->shape.size() != 2) throw DimensionError("softmax_rows: logits must be [b,c], got " + shape_str(z->shape));
    const std::size_t b = z->shape[0], c = z->shape[1];
    std::vector<double> out(b * c);
    for (std::size_t i = 0; i < b; ++i) {
        const double* row = z->values.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += (out[i * c + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
    }
    return out;
}

}  // namespace inscorr
