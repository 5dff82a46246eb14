#include "udaqa/graph.hpp"

#include <algorithm>
#include <cmath>

#include "udaqa/errors.hpp"

namespace udaqa {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::elemwise_mul: return "elemwise_mul";
        case OpKind::relu: return "relu";
        case OpKind::softmax_over_axis: return "softmax_over_axis";
        case OpKind::exp_op: return "exp";
        case OpKind::log_op: return "log";
        case OpKind::square: return "square";
        case OpKind::sum: return "sum";
        case OpKind::sum_axis: return "sum_axis";
        case OpKind::mean: return "mean";
        case OpKind::concat: return "concat";
        case OpKind::stack_rows: return "stack_rows";
        case OpKind::l2_norm: return "l2_norm";
        case OpKind::scale_by_scalar: return "scale_by_scalar";
        case OpKind::slice: return "slice";
        case OpKind::clamp: return "clamp";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_error(OpKind op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

[[noreturn]] void shape_error(OpKind op, const Tensor& a) {
    throw std::invalid_argument(std::string(op_name(op)) + ": bad shape " + a.shape_str());
}

}  // namespace

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

double Graph::scalar_value(NodeId id) const {
    const Tensor& t = nodes_[id].value;
    if (t.numel() != 1)
        throw std::invalid_argument("scalar_value: node is not scalar, shape " + t.shape_str());
    return t.data[0];
}

Tensor Graph::forward(OpKind op, const std::vector<NodeId>& inputs, int axis,
                      double a0, double a1) const {
    auto val = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i]].value; };
    switch (op) {
        case OpKind::leaf:
            throw std::invalid_argument("apply: leaf is not an op");
        case OpKind::matmul: {
            const Tensor& A = val(0);
            const Tensor& B = val(1);
            if (A.rank() != 2) shape_error(op, A, B);
            std::size_t r = A.shape[0], c = A.shape[1];
            if (B.rank() == 1) {
                if (B.shape[0] != c) shape_error(op, A, B);
                Tensor out = Tensor::zeros({r});
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    const double* arow = A.data.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) acc += arow[j] * B.data[j];
                    out.data[i] = acc;
                }
                return out;
            }
            if (B.rank() != 2 || B.shape[0] != c) shape_error(op, A, B);
            std::size_t k = B.shape[1];
            Tensor out = Tensor::zeros({r, k});
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    double a = A.data[i * c + j];
                    if (a == 0.0) continue;
                    const double* brow = B.data.data() + j * k;
                    double* orow = out.data.data() + i * k;
                    for (std::size_t t = 0; t < k; ++t) orow[t] += a * brow[t];
                }
            return out;
        }
        case OpKind::add:
        case OpKind::sub:
        case OpKind::elemwise_mul: {
            const Tensor& A = val(0);
            const Tensor& B = val(1);
            if (!A.same_shape(B)) shape_error(op, A, B);
            Tensor out = A;
            for (std::size_t i = 0; i < out.numel(); ++i) {
                if (op == OpKind::add) out.data[i] += B.data[i];
                else if (op == OpKind::sub) out.data[i] -= B.data[i];
                else out.data[i] *= B.data[i];
            }
            return out;
        }
        case OpKind::relu: {
            Tensor out = val(0);
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            return out;
        }
        case OpKind::softmax_over_axis: {
            const Tensor& X = val(0);
            Tensor out = X;
            if (X.rank() == 1) {
                if (axis != 0) shape_error(op, X);
                double mx = *std::max_element(X.data.begin(), X.data.end());
                double z = 0.0;
                for (std::size_t i = 0; i < X.numel(); ++i) {
                    out.data[i] = std::exp(X.data[i] - mx);
                    z += out.data[i];
                }
                for (double& v : out.data) v /= z;
                return out;
            }
            if (X.rank() != 2 || (axis != 0 && axis != 1)) shape_error(op, X);
            std::size_t R = X.shape[0], C = X.shape[1];
            std::size_t nslices = axis == 0 ? C : R;
            std::size_t len = axis == 0 ? R : C;
            for (std::size_t s = 0; s < nslices; ++s) {
                auto idx = [&](std::size_t t) { return axis == 0 ? t * C + s : s * C + t; };
                double mx = X.data[idx(0)];
                for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, X.data[idx(t)]);
                double z = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    out.data[idx(t)] = std::exp(X.data[idx(t)] - mx);
                    z += out.data[idx(t)];
                }
                for (std::size_t t = 0; t < len; ++t) out.data[idx(t)] /= z;
            }
            return out;
        }
        case OpKind::exp_op: {
            Tensor out = val(0);
            for (double& v : out.data) v = std::exp(v);
            return out;
        }
        case OpKind::log_op: {
            Tensor out = val(0);
            for (double& v : out.data) {
                if (v <= 0.0)
                    throw NumericError("log: non-positive input " + std::to_string(v));
                v = std::log(v);
            }
            return out;
        }
        case OpKind::square: {
            Tensor out = val(0);
            for (double& v : out.data) v *= v;
            return out;
        }
        case OpKind::sum: {
            double acc = 0.0;
            for (double v : val(0).data) acc += v;
            return Tensor::scalar(acc);
        }
        case OpKind::sum_axis: {
            const Tensor& X = val(0);
            if (X.rank() != 2 || (axis != 0 && axis != 1)) shape_error(op, X);
            std::size_t R = X.shape[0], C = X.shape[1];
            if (axis == 0) {
                Tensor out = Tensor::zeros({C});
                for (std::size_t i = 0; i < R; ++i)
                    for (std::size_t j = 0; j < C; ++j) out.data[j] += X.at(i, j);
                return out;
            }
            Tensor out = Tensor::zeros({R});
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j) out.data[i] += X.at(i, j);
            return out;
        }
        case OpKind::mean: {
            const Tensor& X = val(0);
            if (X.numel() == 0) shape_error(op, X);
            double acc = 0.0;
            for (double v : X.data) acc += v;
            return Tensor::scalar(acc / static_cast<double>(X.numel()));
        }
        case OpKind::concat: {
            std::vector<double> out;
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const Tensor& t = val(i);
                if (t.rank() > 1) shape_error(op, t);
                out.insert(out.end(), t.data.begin(), t.data.end());
            }
            return Tensor::vector(std::move(out));
        }
        case OpKind::stack_rows: {
            if (inputs.empty()) throw std::invalid_argument("stack_rows: no inputs");
            const Tensor& first = val(0);
            if (first.rank() != 1) shape_error(op, first);
            std::size_t C = first.shape[0];
            Tensor out = Tensor::zeros({inputs.size(), C});
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                const Tensor& t = val(i);
                if (t.rank() != 1 || t.shape[0] != C) shape_error(op, first, t);
                std::copy(t.data.begin(), t.data.end(), out.data.begin() + i * C);
            }
            return out;
        }
        case OpKind::l2_norm: {
            double acc = 0.0;
            for (double v : val(0).data) acc += v * v;
            return Tensor::scalar(std::sqrt(acc));
        }
        case OpKind::scale_by_scalar: {
            Tensor out = val(0);
            for (double& v : out.data) v *= a0;
            return out;
        }
        case OpKind::slice: {
            const Tensor& X = val(0);
            auto begin = static_cast<std::size_t>(a0);
            auto len = static_cast<std::size_t>(a1);
            // flat-data slice: works on any rank, so matrix rows can be
            // extracted as contiguous runs
            if (begin + len > X.numel()) shape_error(op, X);
            return Tensor::vector(std::vector<double>(X.data.begin() + begin,
                                                      X.data.begin() + begin + len));
        }
        case OpKind::clamp: {
            Tensor out = val(0);
            for (double& v : out.data) v = std::min(a1, std::max(a0, v));
            return out;
        }
    }
    throw std::invalid_argument("apply: unknown op");
}

Graph::NodeId Graph::apply(OpKind op, const std::vector<NodeId>& inputs, int axis,
                           double a0, double a1) {
    for (NodeId id : inputs)
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
            throw std::invalid_argument("apply: bad node id");
    Node n;
    n.op = op;
    n.inputs = inputs;
    n.axis = axis;
    n.a0 = a0;
    n.a1 = a1;
    n.value = forward(op, inputs, axis, a0, a1);
    for (NodeId id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::accumulate(const Node& node, const Tensor& og) {
    auto in = [&](std::size_t i) -> Node& { return nodes_[node.inputs[i]]; };
    auto addto = [](Tensor& g, std::size_t i, double v) { g.data[i] += v; };
    switch (node.op) {
        case OpKind::leaf:
            return;
        case OpKind::matmul: {
            const Tensor& A = in(0).value;
            const Tensor& B = in(1).value;
            std::size_t r = A.shape[0], c = A.shape[1];
            if (B.rank() == 1) {
                // y = A b: dA = og bT, db = AT og
                if (in(0).requires_grad)
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            addto(in(0).grad, i * c + j, og.data[i] * B.data[j]);
                if (in(1).requires_grad)
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            addto(in(1).grad, j, A.data[i * c + j] * og.data[i]);
                return;
            }
            std::size_t k = B.shape[1];
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < k; ++t)
                            acc += og.data[i * k + t] * B.data[j * k + t];
                        addto(in(0).grad, i * c + j, acc);
                    }
            if (in(1).requires_grad)
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < r; ++i)
                            acc += A.data[i * c + j] * og.data[i * k + t];
                        addto(in(1).grad, j * k + t, acc);
                    }
            return;
        }
        case OpKind::add:
        case OpKind::sub: {
            double sgn = node.op == OpKind::sub ? -1.0 : 1.0;
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i) addto(in(0).grad, i, og.data[i]);
            if (in(1).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i) addto(in(1).grad, i, sgn * og.data[i]);
            return;
        }
        case OpKind::elemwise_mul: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(0).grad, i, og.data[i] * in(1).value.data[i]);
            if (in(1).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(1).grad, i, og.data[i] * in(0).value.data[i]);
            return;
        }
        case OpKind::relu: {
            // subgradient 0 at exactly 0
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    if (in(0).value.data[i] > 0.0) addto(in(0).grad, i, og.data[i]);
            return;
        }
        case OpKind::softmax_over_axis: {
            if (!in(0).requires_grad) return;
            const Tensor& Y = node.value;
            if (Y.rank() == 1) {
                double dot = 0.0;
                for (std::size_t i = 0; i < Y.numel(); ++i) dot += og.data[i] * Y.data[i];
                for (std::size_t i = 0; i < Y.numel(); ++i)
                    addto(in(0).grad, i, Y.data[i] * (og.data[i] - dot));
                return;
            }
            std::size_t R = Y.shape[0], C = Y.shape[1];
            std::size_t nslices = node.axis == 0 ? C : R;
            std::size_t len = node.axis == 0 ? R : C;
            for (std::size_t s = 0; s < nslices; ++s) {
                auto idx = [&](std::size_t t) { return node.axis == 0 ? t * C + s : s * C + t; };
                double dot = 0.0;
                for (std::size_t t = 0; t < len; ++t) dot += og.data[idx(t)] * Y.data[idx(t)];
                for (std::size_t t = 0; t < len; ++t)
                    addto(in(0).grad, idx(t), Y.data[idx(t)] * (og.data[idx(t)] - dot));
            }
            return;
        }
        case OpKind::exp_op: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(0).grad, i, og.data[i] * node.value.data[i]);
            return;
        }
        case OpKind::log_op: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(0).grad, i, og.data[i] / in(0).value.data[i]);
            return;
        }
        case OpKind::square: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(0).grad, i, 2.0 * in(0).value.data[i] * og.data[i]);
            return;
        }
        case OpKind::sum: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < in(0).value.numel(); ++i)
                    addto(in(0).grad, i, og.data[0]);
            return;
        }
        case OpKind::sum_axis: {
            if (!in(0).requires_grad) return;
            const Tensor& X = in(0).value;
            std::size_t R = X.shape[0], C = X.shape[1];
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < C; ++j)
                    addto(in(0).grad, i * C + j, og.data[node.axis == 0 ? j : i]);
            return;
        }
        case OpKind::mean: {
            if (!in(0).requires_grad) return;
            double g = og.data[0] / static_cast<double>(in(0).value.numel());
            for (std::size_t i = 0; i < in(0).value.numel(); ++i) addto(in(0).grad, i, g);
            return;
        }
        case OpKind::concat: {
            std::size_t off = 0;
            for (std::size_t p = 0; p < node.inputs.size(); ++p) {
                std::size_t n = in(p).value.numel();
                if (in(p).requires_grad)
                    for (std::size_t i = 0; i < n; ++i) addto(in(p).grad, i, og.data[off + i]);
                off += n;
            }
            return;
        }
        case OpKind::stack_rows: {
            std::size_t C = in(0).value.shape[0];
            for (std::size_t p = 0; p < node.inputs.size(); ++p)
                if (in(p).requires_grad)
                    for (std::size_t j = 0; j < C; ++j) addto(in(p).grad, j, og.data[p * C + j]);
            return;
        }
        case OpKind::l2_norm: {
            if (!in(0).requires_grad) return;
            double nrm = node.value.data[0];
            if (nrm == 0.0) return;  // subgradient 0 at the kink
            for (std::size_t i = 0; i < in(0).value.numel(); ++i)
                addto(in(0).grad, i, og.data[0] * in(0).value.data[i] / nrm);
            return;
        }
        case OpKind::scale_by_scalar: {
            if (in(0).requires_grad)
                for (std::size_t i = 0; i < og.numel(); ++i)
                    addto(in(0).grad, i, node.a0 * og.data[i]);
            return;
        }
        case OpKind::slice: {
            if (!in(0).requires_grad) return;
            auto begin = static_cast<std::size_t>(node.a0);
            for (std::size_t i = 0; i < og.numel(); ++i)
                addto(in(0).grad, begin + i, og.data[i]);
            return;
        }
        case OpKind::clamp: {
            if (!in(0).requires_grad) return;
            for (std::size_t i = 0; i < og.numel(); ++i) {
                double v = in(0).value.data[i];
                if (v > node.a0 && v < node.a1) addto(in(0).grad, i, og.data[i]);
            }
            return;
        }
    }
}

void Graph::backward(NodeId loss) {
    if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
        throw std::invalid_argument("backward: bad loss node");
    if (nodes_[loss].value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    nodes_[loss].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[loss].grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.op == OpKind::leaf || !n.requires_grad) continue;
        bool any = false;
        for (double v : n.grad.data)
            if (v != 0.0) { any = true; break; }
        if (!any) continue;
        accumulate(n, n.grad);
    }
}

double finite_diff_check(
    const std::function<Graph::NodeId(Graph&, Graph::NodeId)>& build,
    const Tensor& point, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    Graph g;
    Graph::NodeId x = g.leaf(point, true);
    Graph::NodeId loss = build(g, x);
    if (g.value(loss).numel() != 1)
        throw std::invalid_argument("finite_diff_check: function must be scalar-valued");
    g.backward(loss);
    Tensor analytic = g.grad(x);

    auto eval = [&](const Tensor& p) {
        Graph h;
        Graph::NodeId xx = h.leaf(p, false);
        double v = h.scalar_value(build(h, xx));
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite value");
        return v;
    };

    double worst = 0.0;
    Tensor p = point;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        double orig = p.data[i];
        p.data[i] = orig + step;
        double fp = eval(p);
        p.data[i] = orig - step;
        double fm = eval(p);
        p.data[i] = orig;
        double fd = (fp - fm) / (2.0 * step);
        double err = std::abs(analytic.data[i] - fd) / std::max(1.0, std::abs(analytic.data[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace udaqa
