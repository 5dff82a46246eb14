#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "udaqa/graph.hpp"
#include "udaqa/rng.hpp"
#include "udaqa/tensor.hpp"

namespace udaqa {

struct LinearLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]

    std::size_t in_width() const { return weight.shape[1]; }
    std::size_t out_width() const { return weight.shape[0]; }
};

// Fully connected stack, relu between layers, identity after the last.
struct Mlp {
    std::vector<LinearLayer> layers;

    std::size_t in_width() const { return layers.front().in_width(); }
    std::size_t out_width() const { return layers.back().out_width(); }
    std::vector<std::size_t> widths() const;
    std::size_t param_count() const;
};

// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng);
Mlp init_mlp(const std::vector<std::size_t>& widths, Rng& rng);

// Graph-side handles to a registered parameter set.
struct MlpNodes {
    std::vector<Graph::NodeId> weights;
    std::vector<Graph::NodeId> biases;
};

MlpNodes register_mlp(Graph& g, const Mlp& net, bool requires_grad);
// Hidden activation is relu, or leaky relu when leaky_slope is nonzero.
Graph::NodeId mlp_forward(Graph& g, const MlpNodes& net, Graph::NodeId input,
                          double leaky_slope = 0.0);

// Flat-vector addressing for optimizer and checkpoints. Order: for each
// layer, weight row-major then bias.
struct ParamEntry {
    std::string name;
    std::size_t offset;
    std::size_t size;
};

void flatten_mlp(const Mlp& net, std::vector<double>& out);
std::size_t unflatten_mlp(Mlp& net, const std::vector<double>& flat, std::size_t offset);
void mlp_param_entries(const Mlp& net, const std::string& prefix, std::size_t& offset,
                       std::vector<ParamEntry>& out);
// Gradients read back from a graph after backward, same flat order.
void collect_mlp_grads(const Graph& g, const MlpNodes& nodes, std::vector<double>& out);

struct AdamState {
    std::int64_t step = 0;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Coupled-L2 Adam: weight decay is folded into the gradient before the
// moment updates. Throws NumericError naming the parameter on a non-finite
// gradient; params are left untouched in that case.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double weight_decay,
               const std::vector<ParamEntry>& layout = {});

// Checkpoint container: magic, version, per-net widths, then all parameter
// values as 64-bit little-endian doubles in declaration order.
void write_checkpoint(std::ostream& os, const std::vector<std::vector<std::size_t>>& net_widths,
                      const std::vector<double>& flat_params);
void read_checkpoint(std::istream& is, std::vector<std::vector<std::size_t>>& net_widths,
                     std::vector<double>& flat_params);

}  // namespace udaqa
