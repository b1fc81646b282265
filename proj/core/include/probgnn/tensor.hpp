#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "probgnn/rng.hpp"

namespace probgnn {

/// Row-major dense tensor of 64-bit floats, rank 1 to 3.
using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    bool on_tape = false;
    bool visited = false;  // scratch flag used by backward()
    std::vector<double> grad;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Pulls this node's grad into the parents' grads. Only set for tape nodes.
    std::function<void(TensorNode&)> backward_fn;

    void accumulate(std::span<const double> g);
    void ensure_grad();
};
}  // namespace detail

/// Value-semantic handle to a shared tensor node. Immutable after creation
/// except for the grad buffer; leaf_values() is the one sanctioned mutation
/// path, used by optimizers between tapes.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor scalar(double v);
    /// Uniform entries in [lo, hi); the usual +-1/sqrt(fan_in) init.
    static Tensor uniform(Shape shape, double lo, double hi, RngStream& rng,
                          bool requires_grad = false);
    static Tensor identity(int n);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rows() const { return dim(0); }
    int cols() const { return dim(rank() - 1); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const double> values() const { return node_->value; }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(int r, int c) const;
    /// Sole element of a one-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    bool on_tape() const { return node_->on_tape; }
    std::span<const double> grad() const { return node_->grad; }
    void zero_grad();

    /// Mutable view of a leaf's values (no recorded parents). Optimizer use.
    std::span<double> leaf_values();

    /// Leaf copy of the current values, detached from any tape.
    Tensor detached(bool requires_grad = false) const;

    /// Stable identity for parameter registries.
    const void* id() const { return node_.get(); }

private:
    friend class Tape;
    friend struct OpBuilder;
    friend void backward(const Tensor&);
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

/// Define-by-run gradient tape, confined to one thread. Constructing a Tape
/// makes it the active tape for the thread; destruction restores the previous
/// one. Ops record their results here whenever any operand requires grad.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();
    std::size_t size() const { return nodes_.size(); }

private:
    friend struct OpBuilder;
    friend void backward(const Tensor&);
    void record(std::shared_ptr<detail::TensorNode> node);
    std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
    Tape* previous_ = nullptr;
};

// ---------------------------------------------------------------------------
// Primitives. Every op validates shapes (ShapeMismatch) and output finiteness
// (NonFinite); log additionally rejects non-positive inputs (DomainError).
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_elementwise(const Tensor& a, const Tensor& b);
Tensor div_elementwise(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor softplus_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor square(const Tensor& a);
Tensor norm_cdf_op(const Tensor& a);
Tensor log_norm_cdf_op(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// Row-wise softmax restricted to mask==true entries; excluded entries get 0.
/// Every row of the mask must contain at least one true entry.
Tensor masked_softmax_rows(const Tensor& a, const std::vector<std::uint8_t>& mask);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor transpose(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul_elementwise(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_mul(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_mul(a, s); }

/// Uniform dispatch over the primitive set; mainly for property-test drivers.
enum class Op {
    matmul, add, sub, mul_elementwise, div_elementwise, scalar_mul, relu,
    leaky_relu, sigmoid, tanh, exp, log, softplus, sqrt, abs, norm_cdf,
    log_norm_cdf, softmax_rows, concat, slice, reshape, sum, mean, transpose,
};

struct OpArgs {
    double scalar = 1.0;
    double slope = 0.2;
    int axis = 0;
    int start = 0;
    int len = -1;
    Shape shape;
};

Tensor apply_primitive(Op op, const std::vector<Tensor>& operands, const OpArgs& args = {});
const char* op_name(Op op);

/// Reverse sweep from a scalar root recorded on the active tape. Every
/// requires-grad leaf reachable from the root receives d(root)/d(leaf),
/// accumulated additively across fan-out and across repeated calls.
void backward(const Tensor& root);

/// Max over coordinates of |autodiff - central difference| / max(1, |cd|),
/// for a scalar-valued function of one tensor.
double gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h = 1e-5);

/// Same check against a closure over many parameter leaves: runs one
/// backward, then central differences by perturbing each leaf in place.
double gradient_check_params(const std::function<Tensor()>& f,
                             const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace probgnn
