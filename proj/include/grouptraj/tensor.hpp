#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace grouptraj {

// Dense float64 tensor with reverse-mode automatic differentiation on a
// dynamic tape. Each forward op records a backward closure on the result
// node; backward() walks the graph once in reverse topological order.
//
// Gradient semantics: grads of leaf tensors accumulate across backward()
// calls until zero_grad() is invoked. Grads of interior nodes are reset at
// the start of every backward pass (they are re-derived within the pass).
//
// Broadcasting is restricted to row-vector bias addition; every other shape
// combination must match exactly and is rejected otherwise.

namespace detail {

struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until populated
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // accumulates into parents
    const char* op = "leaf";

    std::size_t size() const { return data.size(); }
    bool is_leaf() const { return parents.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Controls whether forward ops record provenance. Disabled inside
// NoGradGuard scopes (inference, finite-difference probes).
inline bool& autograd_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::Node>()) {}

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        return filled(std::move(shape), 0.0, requires_grad);
    }

    static Tensor filled(std::vector<std::size_t> shape, double value, bool requires_grad = false) {
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data.assign(detail::shape_product(t.node_->shape), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false) {
        if (detail::shape_product(shape) != data.size()) {
            throw std::invalid_argument("tensor: shape " + detail::shape_str(shape) +
                                        " does not match data length " + std::to_string(data.size()));
        }
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }

    std::size_t rows() const {
        require_2d("rows");
        return node_->shape[0];
    }
    std::size_t cols() const {
        require_2d("cols");
        return node_->shape[1];
    }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    double value() const {
        if (size() != 1) {
            throw std::invalid_argument("tensor: value() requires a scalar, got " +
                                        detail::shape_str(node_->shape));
        }
        return node_->data[0];
    }

    double at(std::size_t r, std::size_t c) const {
        require_2d("at");
        return node_->data[r * node_->shape[1] + c];
    }
    double& at(std::size_t r, std::size_t c) {
        require_2d("at");
        return node_->data[r * node_->shape[1] + c];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const {
        if (node_->grad.empty()) {
            throw std::runtime_error("tensor: gradient not populated; run backward() first");
        }
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    // Reverse-mode pass from a scalar. Interior grads are reset, leaf grads
    // accumulate (an explicit zero_grad per optimizer step is required).
    void backward() const {
        if (size() != 1) {
            throw std::invalid_argument("tensor: backward() requires a scalar loss, got " +
                                        detail::shape_str(node_->shape));
        }
        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> visited;
        topo_sort(node_.get(), visited, order);
        for (detail::Node* n : order) {
            if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
        }
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node* n = *it;
            if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
        }
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

    void require_2d(const char* what) const {
        if (node_->shape.size() != 2) {
            throw std::invalid_argument(std::string("tensor: ") + what + " requires a 2-D tensor, got " +
                                        detail::shape_str(node_->shape));
        }
    }

    static void topo_sort(detail::Node* n, std::unordered_set<detail::Node*>& visited,
                          std::vector<detail::Node*>& order) {
        // Iterative DFS; graphs from unrolled decoders get deep.
        std::vector<std::pair<detail::Node*, std::size_t>> stack{{n, 0}};
        visited.insert(n);
        while (!stack.empty()) {
            auto& [cur, idx] = stack.back();
            if (idx < cur->parents.size()) {
                detail::Node* p = cur->parents[idx++].get();
                if (!visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(cur);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op_result(std::vector<std::size_t> shape, std::vector<double> data,
                                 std::vector<Tensor> inputs, const char* op,
                                 std::function<void(detail::Node&)> backward);
};

struct NoGradGuard {
    NoGradGuard() : prev_(detail::autograd_enabled()) { detail::autograd_enabled() = false; }
    ~NoGradGuard() { detail::autograd_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline Tensor make_op_result(std::vector<std::size_t> shape, std::vector<double> data,
                             std::vector<Tensor> inputs, const char* op,
                             std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool track = false;
    if (detail::autograd_enabled()) {
        for (const Tensor& t : inputs) track = track || t.requires_grad();
    }
    if (track) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) node->parents.push_back(t.node());
        node->backward_fn = std::move(backward);
    }
    return Tensor(std::move(node));
}

namespace detail {

inline void accumulate(Node& parent, std::size_t idx, double v) {
    parent.ensure_grad();
    parent.grad[idx] += v;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string("tensor: ") + op + " shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive forward ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("tensor: matmul shape mismatch " + detail::shape_str(a.shape()) +
                                    " vs " + detail::shape_str(b.shape()));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ad[i * k + l];
            if (av == 0.0) continue;
            const double* brow = &bd[l * m];
            double* orow = &out[i * m];
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return make_op_result({n, m}, std::move(out), {a, b}, "matmul", [n, k, m](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const auto& g = node.grad;
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = dC * B^T
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * pb.data[l * m + j];
                    pa.grad[i * k + l] += acc;
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = A^T * dC
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t i = 0; i < n; ++i) {
                    const double av = pa.data[i * k + l];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j) pb.grad[l * m + j] += av * g[i * m + j];
                }
        }
    });
}

// Elementwise add; as the single supported broadcast, b may be a bias row
// (shape [F] or [1,F]) added to every row of a 2-D a.
inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias_case = a.ndim() == 2 && b.size() == a.cols() && a.shape() != b.shape() &&
                           (b.ndim() == 1 || (b.ndim() == 2 && b.rows() == 1));
    if (!bias_case) detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto& ad = a.data();
    const auto& bd = b.data();
    if (bias_case) {
        const std::size_t n = a.rows(), f = a.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) out[i * f + j] = ad[i * f + j] + bd[j];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    }
    return make_op_result(a.shape(), std::move(out), {a, b}, "add", [bias_case](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            if (bias_case) {
                const std::size_t f = pb.data.size();
                for (std::size_t i = 0; i < node.grad.size(); ++i) pb.grad[i % f] += node.grad[i];
            } else {
                for (std::size_t i = 0; i < node.grad.size(); ++i) pb.grad[i] += node.grad[i];
            }
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, "sub", [](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pb.grad[i] -= node.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_op_result(a.shape(), std::move(out), {a, b}, "mul", [](detail::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pb.grad[i] += node.grad[i] * pa.data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return make_op_result(a.shape(), std::move(out), {a}, "scale", [c](detail::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) p.grad[i] += node.grad[i] * c;
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return make_op_result(a.shape(), std::move(out), {a}, "add_scalar", [](detail::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) p.grad[i] += node.grad[i];
    });
}

namespace detail {

template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Dfn dfn) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i]);
    return make_op_result(a.shape(), std::move(out), {a}, name, [dfn](detail::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            p.grad[i] += node.grad[i] * dfn(p.data[i], node.data[i]);
    });
}

}  // namespace detail

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_op(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (v <= 0.0) throw std::invalid_argument("tensor: log requires strictly positive input");
    }
    return detail::unary_op(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor abs(const Tensor& a) {
    return detail::unary_op(
        a, "abs", [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor sqrt(const Tensor& a) {
    for (double v : a.data()) {
        if (v < 0.0) throw std::invalid_argument("tensor: sqrt requires non-negative input");
    }
    return detail::unary_op(
        a, "sqrt", [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op_result({1}, {s}, {a}, "sum", [](detail::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[0];
    });
}

// Mean over rows of a 2-D tensor: [N,F] -> [1,F].
inline Tensor mean_rows(const Tensor& a) {
    const std::size_t n = a.rows(), f = a.cols();
    std::vector<double> out(f, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) out[j] += a.data()[i * f + j];
    for (std::size_t j = 0; j < f; ++j) out[j] /= static_cast<double>(n);
    return make_op_result({1, f}, std::move(out), {a}, "mean_rows", [n, f](detail::Node& node) {
        auto& p = *node.parents[0];
        p.ensure_grad();
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) p.grad[i * f + j] += node.grad[j] * inv;
    });
}

// Concatenation along the feature (column) axis of 2-D tensors.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows()) {
        throw std::invalid_argument("tensor: concat_cols shape mismatch " +
                                    detail::shape_str(a.shape()) + " vs " +
                                    detail::shape_str(b.shape()));
    }
    const std::size_t n = a.rows(), fa = a.cols(), fb = b.cols();
    std::vector<double> out(n * (fa + fb));
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&a.data()[i * fa], fa, &out[i * (fa + fb)]);
        std::copy_n(&b.data()[i * fb], fb, &out[i * (fa + fb) + fa]);
    }
    return make_op_result({n, fa + fb}, std::move(out), {a, b}, "concat_cols",
                          [n, fa, fb](detail::Node& node) {
                              auto& pa = *node.parents[0];
                              auto& pb = *node.parents[1];
                              const std::size_t f = fa + fb;
                              if (pa.requires_grad) {
                                  pa.ensure_grad();
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < fa; ++j)
                                          pa.grad[i * fa + j] += node.grad[i * f + j];
                              }
                              if (pb.requires_grad) {
                                  pb.ensure_grad();
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < fb; ++j)
                                          pb.grad[i * fb + j] += node.grad[i * f + fa + j];
                              }
                          });
}

// Row-wise stacking of 2-D tensors.
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
        throw std::invalid_argument("tensor: concat_rows shape mismatch " +
                                    detail::shape_str(a.shape()) + " vs " +
                                    detail::shape_str(b.shape()));
    }
    const std::size_t na = a.rows(), nb = b.rows(), f = a.cols();
    std::vector<double> out;
    out.reserve((na + nb) * f);
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    return make_op_result({na + nb, f}, std::move(out), {a, b}, "concat_rows",
                          [na, nb, f](detail::Node& node) {
                              auto& pa = *node.parents[0];
                              auto& pb = *node.parents[1];
                              if (pa.requires_grad) {
                                  pa.ensure_grad();
                                  for (std::size_t i = 0; i < na * f; ++i) pa.grad[i] += node.grad[i];
                              }
                              if (pb.requires_grad) {
                                  pb.ensure_grad();
                                  for (std::size_t i = 0; i < nb * f; ++i)
                                      pb.grad[i] += node.grad[na * f + i];
                              }
                          });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    if (a.ndim() != 2 || start + len > a.cols()) {
        throw std::invalid_argument("tensor: slice_cols [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") out of range for " +
                                    detail::shape_str(a.shape()));
    }
    const std::size_t n = a.rows(), f = a.cols();
    std::vector<double> out(n * len);
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(&a.data()[i * f + start], len, &out[i * len]);
    return make_op_result({n, len}, std::move(out), {a}, "slice_cols",
                          [n, f, start, len](detail::Node& node) {
                              auto& p = *node.parents[0];
                              p.ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < len; ++j)
                                      p.grad[i * f + start + j] += node.grad[i * len + j];
                          });
}

inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len) {
    if (a.ndim() != 2 || start + len > a.rows()) {
        throw std::invalid_argument("tensor: slice_rows [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") out of range for " +
                                    detail::shape_str(a.shape()));
    }
    const std::size_t f = a.cols();
    std::vector<double> out(a.data().begin() + start * f, a.data().begin() + (start + len) * f);
    return make_op_result({len, f}, std::move(out), {a}, "slice_rows",
                          [f, start, len](detail::Node& node) {
                              auto& p = *node.parents[0];
                              p.ensure_grad();
                              for (std::size_t i = 0; i < len * f; ++i)
                                  p.grad[start * f + i] += node.grad[i];
                          });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued f at x. Throws if any probe turns up a non-finite value,
// naming the coordinate.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                         double h = 1e-5) {
    x.zero_grad();
    Tensor y = f(x);
    if (y.size() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    y.backward();
    const std::vector<double> analytic = x.grad();

    double max_err = 0.0;
    NoGradGuard guard;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + h;
        const double fp = f(x).value();
        x.data()[i] = orig - h;
        const double fm = f(x).value();
        x.data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
            throw std::runtime_error("grad_check: non-finite value at coordinate " +
                                     std::to_string(i));
        }
        const double err = std::fabs(analytic[i] - numeric) /
                           std::max(1.0, std::fabs(analytic[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace grouptraj
