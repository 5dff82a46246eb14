#pragma once

#include <functional>
#include <string>
#include <vector>

#include "udaqa/tensor.hpp"

namespace udaqa {

enum class OpKind {
    leaf,
    matmul,
    add,
    sub,
    elemwise_mul,
    relu,
    softmax_over_axis,
    exp_op,
    log_op,
    square,
    sum,
    sum_axis,
    mean,
    concat,
    stack_rows,
    l2_norm,
    scale_by_scalar,
    slice,
    clamp,
};

const char* op_name(OpKind k);

// Eager record-on-forward tape. Values are computed at apply() time; one
// backward() pass fills gradients for every requires-grad node reachable from
// the loss. Single-owner: build and differentiate from one thread.
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Tensor value, bool requires_grad = false);

    // Generic entry point; axis/scalar arguments are ignored by ops that do
    // not take them. Named wrappers below are the usual way in.
    NodeId apply(OpKind op, const std::vector<NodeId>& inputs, int axis = 0,
                 double a0 = 0.0, double a1 = 0.0);

    NodeId matmul(NodeId a, NodeId b) { return apply(OpKind::matmul, {a, b}); }
    NodeId add(NodeId a, NodeId b) { return apply(OpKind::add, {a, b}); }
    NodeId sub(NodeId a, NodeId b) { return apply(OpKind::sub, {a, b}); }
    NodeId mul(NodeId a, NodeId b) { return apply(OpKind::elemwise_mul, {a, b}); }
    NodeId relu(NodeId a) { return apply(OpKind::relu, {a}); }
    NodeId softmax(NodeId a, int axis) { return apply(OpKind::softmax_over_axis, {a}, axis); }
    NodeId exp(NodeId a) { return apply(OpKind::exp_op, {a}); }
    NodeId log(NodeId a) { return apply(OpKind::log_op, {a}); }
    NodeId square(NodeId a) { return apply(OpKind::square, {a}); }
    NodeId sum(NodeId a) { return apply(OpKind::sum, {a}); }
    NodeId sum_axis(NodeId a, int axis) { return apply(OpKind::sum_axis, {a}, axis); }
    NodeId mean(NodeId a) { return apply(OpKind::mean, {a}); }
    NodeId concat(const std::vector<NodeId>& parts) { return apply(OpKind::concat, parts); }
    NodeId stack_rows(const std::vector<NodeId>& rows) { return apply(OpKind::stack_rows, rows); }
    NodeId l2_norm(NodeId a) { return apply(OpKind::l2_norm, {a}); }
    NodeId scale(NodeId a, double s) { return apply(OpKind::scale_by_scalar, {a}, 0, s); }
    NodeId slice(NodeId a, std::size_t begin, std::size_t len) {
        return apply(OpKind::slice, {a}, 0, static_cast<double>(begin), static_cast<double>(len));
    }
    NodeId clamp(NodeId a, double lo, double hi) { return apply(OpKind::clamp, {a}, 0, lo, hi); }

    NodeId constant(Tensor value) { return leaf(std::move(value), false); }
    NodeId constant(double v) { return leaf(Tensor::scalar(v), false); }

    // Backward from a scalar loss node. Gradients of earlier backward calls
    // on the same graph are discarded.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    double scalar_value(NodeId id) const;
    // Zero tensor for nodes unreachable from the last loss.
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind op;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        int axis = 0;
        double a0 = 0.0, a1 = 0.0;
    };

    Tensor forward(OpKind op, const std::vector<NodeId>& inputs, int axis, double a0, double a1) const;
    void accumulate(const Node& node, const Tensor& out_grad);

    std::vector<Node> nodes_;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of one tensor input. `build` must construct
// the same function each call; the point leaf is created by the checker.
double finite_diff_check(
    const std::function<Graph::NodeId(Graph&, Graph::NodeId)>& build,
    const Tensor& point, double step);

}  // namespace udaqa
