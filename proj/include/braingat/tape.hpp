#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "braingat/tensor.hpp"

namespace braingat {

/// Handle to a node on a Tape. Only meaningful together with the tape
/// that produced it.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense double tensors. Nodes are recorded in
/// topological order as expressions are built; backward() replays the
/// recorded rules once in reverse, accumulating d(loss)/d(node) for every
/// node on a requires-grad path. Forward values are never mutated.
///
/// Broadcasting is restricted to a row vector over the rows of a matrix
/// (second operand of add/multiply); everything else must match shapes
/// exactly.
class Tape {
 public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var add(Var a, Var b);
    Var add_scalar(Var a, double c);
    Var multiply(Var a, Var b);
    Var scalar_multiply(Var a, double c);
    Var matmul(Var a, Var b);
    Var concat(int axis, const std::vector<Var>& parts);
    Var exp(Var a);
    Var log(Var a);
    Var sum(Var a);
    Var sum(Var a, int axis);
    Var mean(Var a);
    Var mean(Var a, int axis);
    Var max(Var a, int axis);
    Var transpose(Var a);
    Var gather_rows(Var a, std::vector<std::size_t> rows);
    Var scatter_add_rows(Var a, std::vector<std::size_t> rows, std::size_t n_rows);
    Var relu(Var a);
    Var elu(Var a);  // alpha = 1
    Var leaky_relu(Var a, double negative_slope);
    Var scale_rows(Var m, Var s);
    Var segment_softmax(Var values, std::vector<std::size_t> segments, std::size_t n_segments);
    Var log_softmax_rows(Var a);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    /// Gradient of the last backward() loss w.r.t. v. Nodes off the loss
    /// path report zeros of the right shape.
    const Tensor& grad(Var v);

    void backward(Var loss);
    std::size_t node_count() const { return nodes_.size(); }

 private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> backprop;
    };

    Var push(Tensor value, bool requires_grad);
    Node& node(Var v);
    const Node& node(Var v) const;
    Tensor& grad_buffer(std::int32_t id);
    void accumulate(std::int32_t id, const Tensor& g);

    std::vector<Node> nodes_;
};

/// Central-difference gradient check. `build` must construct a scalar
/// expression from the leaf; it is invoked twice up front to detect
/// non-deterministic functions. Returns the max over coordinates of
/// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double finite_difference_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x,
                               double eps = 1e-5);

}  // namespace braingat
