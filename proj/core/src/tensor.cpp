#include "probgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "probgnn/errors.hpp"
#include "probgnn/mathfn.hpp"

namespace probgnn {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

namespace detail {

void TensorNode::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void TensorNode::accumulate(std::span<const double> g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

static void validate_shape(const Shape& shape, std::size_t data_size) {
    require(!shape.empty() && shape.size() <= 3, "ShapeMismatch",
            "tensor rank must be 1..3, got " + shape_str(shape));
    for (int d : shape)
        require(d >= 1, "ShapeMismatch", "nonpositive dimension in " + shape_str(shape));
    require(shape_size(shape) == data_size, "ShapeMismatch",
            "shape " + shape_str(shape) + " does not match data length " +
                std::to_string(data_size));
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape, data.size());
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, RngStream& rng, bool requires_grad) {
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::identity(int n) {
    Tensor t = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) t.node_->value[static_cast<std::size_t>(i * n + i)] = 1.0;
    return t;
}

double Tensor::at(int r, int c) const {
    return node_->value[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                        static_cast<std::size_t>(c)];
}

double Tensor::item() const {
    require(size() == 1, "NotScalar", "item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::span<double> Tensor::leaf_values() {
    require(node_->parents.empty(), "NotLeaf", "in-place mutation of a non-leaf tensor");
    return node_->value;
}

Tensor Tensor::detached(bool requires_grad) const {
    return Tensor(node_->shape, node_->value, requires_grad);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
    previous_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(NodePtr node) { nodes_.push_back(std::move(node)); }

// ---------------------------------------------------------------------------
// Op construction
// ---------------------------------------------------------------------------

struct OpBuilder {
    static Tensor make(Shape shape, std::vector<double> value,
                       std::vector<Tensor> operands,
                       std::function<void(TensorNode&)> backward_fn, const char* op) {
        for (double v : value)
            require(std::isfinite(v), "NonFinite",
                    std::string(op) + " produced a non-finite value");
        auto node = std::make_shared<TensorNode>();
        node->shape = std::move(shape);
        node->value = std::move(value);
        bool any_grad = false;
        for (const Tensor& t : operands) any_grad = any_grad || t.node_->requires_grad;
        Tape* tape = Tape::active();
        if (any_grad && tape != nullptr) {
            node->requires_grad = true;
            node->on_tape = true;
            node->parents.reserve(operands.size());
            for (const Tensor& t : operands) node->parents.push_back(t.node_);
            node->backward_fn = std::move(backward_fn);
            tape->record(node);
        }
        return Tensor(std::move(node));
    }
};

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), "ShapeMismatch",
            std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

static void require_rank2(const Tensor& a, const char* op) {
    require(a.rank() == 2, "ShapeMismatch",
            std::string(op) + " expects a rank-2 tensor, got " + shape_str(a.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise helpers
// ---------------------------------------------------------------------------

template <typename F, typename DF>
static Tensor unary_op(const Tensor& a, const char* name, F&& f, DF&& df) {
    std::vector<double> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return OpBuilder::make(
        a.shape(), std::move(out), {a},
        [df](TensorNode& self) {
            TensorNode& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < self.value.size(); ++i)
                p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
        },
        name);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return OpBuilder::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        for (int k = 0; k < 2; ++k) {
            TensorNode& p = *self.parents[static_cast<std::size_t>(k)];
            if (p.requires_grad) p.accumulate(self.grad);
        }
    }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return OpBuilder::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) pa.accumulate(self.grad);
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    }, "sub");
}

Tensor mul_elementwise(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul_elementwise");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return OpBuilder::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    }, "mul_elementwise");
}

Tensor div_elementwise(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div_elementwise");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    return OpBuilder::make(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
        }
    }, "div_elementwise");
}

Tensor scalar_mul(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    return OpBuilder::make(a.shape(), std::move(out), {a}, [s](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
    }, "scalar_mul");
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
    return OpBuilder::make(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (p.requires_grad) p.accumulate(self.grad);
    }, "add_scalar");
}

Tensor relu(const Tensor& a) {
    // subgradient 0 at the kink
    return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(a, "leaky_relu",
                    [slope](double x) { return x > 0.0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, "sigmoid", [](double x) { return logistic(x); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& a) {
    return unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& a) {
    return unary_op(a, "exp", [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
    for (double v : a.values())
        require(v > 0.0, "DomainError", "log of non-positive input");
    return unary_op(a, "log", [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor softplus_op(const Tensor& a) {
    return unary_op(a, "softplus", [](double x) { return softplus(x); },
                    [](double x, double) { return logistic(x); });
}

Tensor sqrt_op(const Tensor& a) {
    for (double v : a.values())
        require(v > 0.0, "DomainError", "sqrt of non-positive input");
    return unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor abs_op(const Tensor& a) {
    // subgradient 0 at the kink
    return unary_op(a, "abs", [](double x) { return std::abs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary_op(a, "square", [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor norm_cdf_op(const Tensor& a) {
    return unary_op(a, "norm_cdf", [](double x) { return norm_cdf(x); },
                    [](double x, double) { return norm_pdf(x); });
}

Tensor log_norm_cdf_op(const Tensor& a) {
    return unary_op(a, "log_norm_cdf", [](double x) { return log_norm_cdf(x); },
                    [](double x, double) { return norm_hazard(x); });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    require(k == k2, "ShapeMismatch",
            "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double aip = av[static_cast<std::size_t>(i * k + p)];
            if (aip == 0.0) continue;
            const std::size_t brow = static_cast<std::size_t>(p * n);
            const std::size_t orow = static_cast<std::size_t>(i * n);
            for (int j = 0; j < n; ++j) out[orow + j] += aip * bv[brow + j];
        }
    return OpBuilder::make({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {  // dA = dC . B^T
            pa.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j)
                        acc += self.grad[static_cast<std::size_t>(i * n + j)] *
                               pb.value[static_cast<std::size_t>(p * n + j)];
                    pa.grad[static_cast<std::size_t>(i * k + p)] += acc;
                }
        }
        if (pb.requires_grad) {  // dB = A^T . dC
            pb.ensure_grad();
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    const double aip = pa.value[static_cast<std::size_t>(i * k + p)];
                    if (aip == 0.0) continue;
                    for (int j = 0; j < n; ++j)
                        pb.grad[static_cast<std::size_t>(p * n + j)] +=
                            aip * self.grad[static_cast<std::size_t>(i * n + j)];
                }
        }
    }, "matmul");
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j * m + i)] = a[static_cast<std::size_t>(i * n + j)];
    return OpBuilder::make({n, m}, std::move(out), {a}, [m, n](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                p.grad[static_cast<std::size_t>(i * n + j)] +=
                    self.grad[static_cast<std::size_t>(j * m + i)];
    }, "transpose");
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
    require_rank2(a, "softmax_rows");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i) {
        const std::size_t row = static_cast<std::size_t>(i * n);
        double mx = a[row];
        for (int j = 1; j < n; ++j) mx = std::max(mx, a[row + static_cast<std::size_t>(j)]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            out[row + static_cast<std::size_t>(j)] =
                std::exp(a[row + static_cast<std::size_t>(j)] - mx);
            denom += out[row + static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < n; ++j) out[row + static_cast<std::size_t>(j)] /= denom;
    }
    return OpBuilder::make(a.shape(), std::move(out), {a}, [m, n](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const std::size_t row = static_cast<std::size_t>(i * n);
            double dot = 0.0;
            for (int j = 0; j < n; ++j)
                dot += self.grad[row + static_cast<std::size_t>(j)] *
                       self.value[row + static_cast<std::size_t>(j)];
            for (int j = 0; j < n; ++j)
                p.grad[row + static_cast<std::size_t>(j)] +=
                    self.value[row + static_cast<std::size_t>(j)] *
                    (self.grad[row + static_cast<std::size_t>(j)] - dot);
        }
    }, "softmax_rows");
}

Tensor masked_softmax_rows(const Tensor& a, const std::vector<std::uint8_t>& mask) {
    require_rank2(a, "masked_softmax_rows");
    const int m = a.dim(0), n = a.dim(1);
    require(mask.size() == a.size(), "ShapeMismatch", "mask size does not match tensor");
    std::vector<double> out(a.size(), 0.0);
    for (int i = 0; i < m; ++i) {
        const std::size_t row = static_cast<std::size_t>(i * n);
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (mask[row + static_cast<std::size_t>(j)])
                mx = std::max(mx, a[row + static_cast<std::size_t>(j)]);
        require(std::isfinite(mx), "EmptyNeighborhood",
                "masked_softmax_rows: row " + std::to_string(i) + " has no unmasked entry");
        double denom = 0.0;
        for (int j = 0; j < n; ++j)
            if (mask[row + static_cast<std::size_t>(j)]) {
                out[row + static_cast<std::size_t>(j)] =
                    std::exp(a[row + static_cast<std::size_t>(j)] - mx);
                denom += out[row + static_cast<std::size_t>(j)];
            }
        for (int j = 0; j < n; ++j)
            if (mask[row + static_cast<std::size_t>(j)])
                out[row + static_cast<std::size_t>(j)] /= denom;
    }
    return OpBuilder::make(a.shape(), std::move(out), {a}, [m, n, mask](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const std::size_t row = static_cast<std::size_t>(i * n);
            double dot = 0.0;
            for (int j = 0; j < n; ++j) {
                const std::size_t ix = row + static_cast<std::size_t>(j);
                if (mask[ix]) dot += self.grad[ix] * self.value[ix];
            }
            for (int j = 0; j < n; ++j) {
                const std::size_t ix = row + static_cast<std::size_t>(j);
                if (mask[ix]) p.grad[ix] += self.value[ix] * (self.grad[ix] - dot);
            }
        }
    }, "masked_softmax_rows");
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    validate_shape(shape, a.size());
    std::vector<double> out(a.values().begin(), a.values().end());
    return OpBuilder::make(std::move(shape), std::move(out), {a}, [](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (p.requires_grad) p.accumulate(self.grad);
    }, "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "ShapeMismatch", "concat of zero tensors");
    const int rank = parts[0].rank();
    require(axis == 0 || (axis == 1 && rank == 2), "ShapeMismatch",
            "concat supports axis 0 (any rank) or axis 1 (rank 2)");
    for (const Tensor& t : parts) {
        require(t.rank() == rank, "ShapeMismatch", "concat of mixed ranks");
        for (int d = 0; d < rank; ++d)
            require(d == axis || t.dim(d) == parts[0].dim(d), "ShapeMismatch",
                    "concat: incompatible shapes " + shape_str(t.shape()));
    }
    Shape out_shape = parts[0].shape();
    int total = 0;
    for (const Tensor& t : parts) total += t.dim(axis);
    out_shape[static_cast<std::size_t>(axis)] = total;

    std::vector<double> out;
    out.reserve(shape_size(out_shape));
    std::vector<int> sizes;
    if (axis == 0) {
        for (const Tensor& t : parts) {
            out.insert(out.end(), t.values().begin(), t.values().end());
            sizes.push_back(static_cast<int>(t.size()));
        }
    } else {
        const int m = parts[0].dim(0);
        for (int i = 0; i < m; ++i)
            for (const Tensor& t : parts) {
                const int n = t.dim(1);
                auto v = t.values();
                for (int j = 0; j < n; ++j)
                    out.push_back(v[static_cast<std::size_t>(i * n + j)]);
            }
        for (const Tensor& t : parts) sizes.push_back(t.dim(1));
    }
    std::vector<Tensor> operands = parts;
    const int m0 = parts[0].dim(0);
    return OpBuilder::make(std::move(out_shape), std::move(out), std::move(operands),
        [axis, sizes, m0, total](TensorNode& self) {
            if (axis == 0) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < self.parents.size(); ++k) {
                    TensorNode& p = *self.parents[k];
                    const std::size_t len = static_cast<std::size_t>(sizes[k]);
                    if (p.requires_grad)
                        p.accumulate(std::span<const double>(self.grad.data() + off, len));
                    off += len;
                }
            } else {
                for (int i = 0; i < m0; ++i) {
                    int col = 0;
                    for (std::size_t k = 0; k < self.parents.size(); ++k) {
                        TensorNode& p = *self.parents[k];
                        const int n = sizes[k];
                        if (p.requires_grad) {
                            p.ensure_grad();
                            for (int j = 0; j < n; ++j)
                                p.grad[static_cast<std::size_t>(i * n + j)] +=
                                    self.grad[static_cast<std::size_t>(i * total + col + j)];
                        }
                        col += n;
                    }
                }
            }
        }, "concat");
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const int rank = a.rank();
    require(axis == 0 || (axis == 1 && rank == 2), "ShapeMismatch",
            "slice supports axis 0 (any rank) or axis 1 (rank 2)");
    require(start >= 0 && len >= 1 && start + len <= a.dim(axis), "ShapeMismatch",
            "slice range [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") out of bounds for " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::vector<double> out;
    out.reserve(shape_size(out_shape));
    if (axis == 0) {
        std::size_t stride = a.size() / static_cast<std::size_t>(a.dim(0));
        auto v = a.values();
        out.assign(v.begin() + static_cast<std::ptrdiff_t>(start * static_cast<int>(stride)),
                   v.begin() + static_cast<std::ptrdiff_t>((start + len) * static_cast<int>(stride)));
        return OpBuilder::make(std::move(out_shape), std::move(out), {a},
            [start, stride](TensorNode& self) {
                TensorNode& p = *self.parents[0];
                if (!p.requires_grad) return;
                p.ensure_grad();
                const std::size_t off = static_cast<std::size_t>(start) * stride;
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    p.grad[off + i] += self.grad[i];
            }, "slice");
    }
    const int m = a.dim(0), n = a.dim(1);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
            out.push_back(a[static_cast<std::size_t>(i * n + start + j)]);
    return OpBuilder::make(std::move(out_shape), std::move(out), {a},
        [m, n, start, len](TensorNode& self) {
            TensorNode& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < len; ++j)
                    p.grad[static_cast<std::size_t>(i * n + start + j)] +=
                        self.grad[static_cast<std::size_t>(i * len + j)];
        }, "slice");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return OpBuilder::make({1}, {s}, {a}, [](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (double& g : p.grad) g += self.grad[0];
    }, "sum");
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double inv_n = 1.0 / static_cast<double>(a.size());
    return OpBuilder::make({1}, {s * inv_n}, {a}, [inv_n](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (double& g : p.grad) g += self.grad[0] * inv_n;
    }, "mean");
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& root) {
    require(root.defined() && root.size() == 1, "NotScalar",
            "backward requires a scalar root");
    Tape* tape = Tape::active();
    require(tape != nullptr && !tape->nodes_.empty() && root.node_->on_tape, "EmptyTape",
            "backward requires a root recorded on the active tape");

    // Mark ancestors of the root so unrelated tape entries are skipped.
    std::vector<TensorNode*> marked;
    std::vector<TensorNode*> stack{root.node_.get()};
    root.node_->visited = true;
    marked.push_back(root.node_.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        for (const auto& p : n->parents)
            if (p->requires_grad && !p->visited) {
                p->visited = true;
                marked.push_back(p.get());
                stack.push_back(p.get());
            }
    }

    root.node_->ensure_grad();
    root.node_->grad[0] += 1.0;
    for (auto it = tape->nodes_.rbegin(); it != tape->nodes_.rend(); ++it) {
        TensorNode& n = **it;
        if (n.visited && n.backward_fn && !n.grad.empty()) n.backward_fn(n);
    }
    for (TensorNode* n : marked) n->visited = false;
}

// ---------------------------------------------------------------------------
// apply_primitive dispatch
// ---------------------------------------------------------------------------

const char* op_name(Op op) {
    switch (op) {
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul_elementwise: return "mul_elementwise";
        case Op::div_elementwise: return "div_elementwise";
        case Op::scalar_mul: return "scalar_mul";
        case Op::relu: return "relu";
        case Op::leaky_relu: return "leaky_relu";
        case Op::sigmoid: return "sigmoid";
        case Op::tanh: return "tanh";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::softplus: return "softplus";
        case Op::sqrt: return "sqrt";
        case Op::abs: return "abs";
        case Op::norm_cdf: return "norm_cdf";
        case Op::log_norm_cdf: return "log_norm_cdf";
        case Op::softmax_rows: return "softmax_rows";
        case Op::concat: return "concat";
        case Op::slice: return "slice";
        case Op::reshape: return "reshape";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::transpose: return "transpose";
    }
    return "?";
}

Tensor apply_primitive(Op op, const std::vector<Tensor>& v, const OpArgs& args) {
    auto arity = [&](std::size_t n) {
        require(v.size() == n, "ShapeMismatch",
                std::string(op_name(op)) + " expects " + std::to_string(n) + " operands");
    };
    switch (op) {
        case Op::matmul: arity(2); return matmul(v[0], v[1]);
        case Op::add: arity(2); return add(v[0], v[1]);
        case Op::sub: arity(2); return sub(v[0], v[1]);
        case Op::mul_elementwise: arity(2); return mul_elementwise(v[0], v[1]);
        case Op::div_elementwise: arity(2); return div_elementwise(v[0], v[1]);
        case Op::scalar_mul: arity(1); return scalar_mul(v[0], args.scalar);
        case Op::relu: arity(1); return relu(v[0]);
        case Op::leaky_relu: arity(1); return leaky_relu(v[0], args.slope);
        case Op::sigmoid: arity(1); return sigmoid(v[0]);
        case Op::tanh: arity(1); return tanh_op(v[0]);
        case Op::exp: arity(1); return exp_op(v[0]);
        case Op::log: arity(1); return log_op(v[0]);
        case Op::softplus: arity(1); return softplus_op(v[0]);
        case Op::sqrt: arity(1); return sqrt_op(v[0]);
        case Op::abs: arity(1); return abs_op(v[0]);
        case Op::norm_cdf: arity(1); return norm_cdf_op(v[0]);
        case Op::log_norm_cdf: arity(1); return log_norm_cdf_op(v[0]);
        case Op::softmax_rows: arity(1); return softmax_rows(v[0]);
        case Op::concat: return concat(v, args.axis);
        case Op::slice: arity(1); return slice(v[0], args.axis, args.start, args.len);
        case Op::reshape: arity(1); return reshape(v[0], args.shape);
        case Op::sum: arity(1); return sum(v[0]);
        case Op::mean: arity(1); return mean(v[0]);
        case Op::transpose: arity(1); return transpose(v[0]);
    }
    fail("DomainError", "unknown primitive");
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h) {
    require(h > 0.0, "DomainError", "gradient_check requires h > 0");
    Tensor var = x.detached(true);
    std::vector<double> autograd(var.size(), 0.0);
    {
        Tape tape;
        Tensor y = f(var);
        require(y.size() == 1, "NotScalar", "gradient_check requires a scalar function");
        backward(y);
        auto g = var.grad();
        for (std::size_t i = 0; i < g.size(); ++i) autograd[i] = g[i];
    }
    double max_err = 0.0;
    Tensor probe = x.detached(false);
    auto pv = probe.leaf_values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double saved = pv[i];
        pv[i] = saved + h;
        const double fp = f(probe).item();
        pv[i] = saved - h;
        const double fm = f(probe).item();
        pv[i] = saved;
        require(std::isfinite(fp) && std::isfinite(fm), "NonFinite",
                "non-finite value while probing finite differences");
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(autograd[i] - fd) / std::max(1.0, std::abs(fd));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

double gradient_check_params(const std::function<Tensor()>& f,
                             const std::vector<Tensor>& params, double h) {
    require(h > 0.0, "DomainError", "gradient_check requires h > 0");
    std::vector<std::vector<double>> autograd;
    {
        Tape tape;
        Tensor y = f();
        require(y.size() == 1, "NotScalar", "gradient_check requires a scalar function");
        for (Tensor p : params) p.zero_grad();
        backward(y);
        for (const Tensor& p : params) {
            auto g = p.grad();
            autograd.emplace_back(g.begin(), g.end());
            if (autograd.back().empty()) autograd.back().assign(p.size(), 0.0);
        }
    }
    double max_err = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        auto pv = p.leaf_values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double saved = pv[i];
            pv[i] = saved + h;
            const double fp = f().item();
            pv[i] = saved - h;
            const double fm = f().item();
            pv[i] = saved;
            require(std::isfinite(fp) && std::isfinite(fm), "NonFinite",
                    "non-finite value while probing finite differences");
            const double fd = (fp - fm) / (2.0 * h);
            const double err = std::abs(autograd[k][i] - fd) / std::max(1.0, std::abs(fd));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace probgnn
