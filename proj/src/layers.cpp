#include "udaqa/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "udaqa/errors.hpp"

namespace udaqa {

std::vector<std::size_t> Mlp::widths() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().in_width());
    for (const LinearLayer& l : layers) w.push_back(l.out_width());
    return w;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const LinearLayer& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
}

LinearLayer init_linear(std::size_t in, std::size_t out, Rng& rng) {
    if (in == 0 || out == 0)
        throw std::invalid_argument("init_linear: zero width");
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer l;
    l.weight = Tensor::zeros({out, in});
    for (double& v : l.weight.data) v = rng.uniform(-bound, bound);
    l.bias = Tensor::zeros({out});
    return l;
}

Mlp init_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2)
        throw std::invalid_argument("init_mlp: need at least two widths");
    Mlp net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        net.layers.push_back(init_linear(widths[i], widths[i + 1], rng));
    return net;
}

MlpNodes register_mlp(Graph& g, const Mlp& net, bool requires_grad) {
    MlpNodes nodes;
    for (const LinearLayer& l : net.layers) {
        nodes.weights.push_back(g.leaf(l.weight, requires_grad));
        nodes.biases.push_back(g.leaf(l.bias, requires_grad));
    }
    return nodes;
}

Graph::NodeId mlp_forward(Graph& g, const MlpNodes& net, Graph::NodeId input,
                          double leaky_slope) {
    Graph::NodeId x = input;
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        x = g.add(g.matmul(net.weights[i], x), net.biases[i]);
        if (i + 1 < net.weights.size()) {
            // leaky(x) = relu(x) - slope * relu(-x); slope 0 is plain relu
            Graph::NodeId pos = g.relu(x);
            x = leaky_slope == 0.0
                    ? pos
                    : g.sub(pos, g.scale(g.relu(g.scale(x, -1.0)), leaky_slope));
        }
    }
    return x;
}

void flatten_mlp(const Mlp& net, std::vector<double>& out) {
    for (const LinearLayer& l : net.layers) {
        out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
        out.insert(out.end(), l.bias.data.begin(), l.bias.data.end());
    }
}

std::size_t unflatten_mlp(Mlp& net, const std::vector<double>& flat, std::size_t offset) {
    for (LinearLayer& l : net.layers) {
        std::copy(flat.begin() + offset, flat.begin() + offset + l.weight.numel(),
                  l.weight.data.begin());
        offset += l.weight.numel();
        std::copy(flat.begin() + offset, flat.begin() + offset + l.bias.numel(),
                  l.bias.data.begin());
        offset += l.bias.numel();
    }
    return offset;
}

void mlp_param_entries(const Mlp& net, const std::string& prefix, std::size_t& offset,
                       std::vector<ParamEntry>& out) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LinearLayer& l = net.layers[i];
        out.push_back({prefix + ".fc" + std::to_string(i) + ".weight", offset, l.weight.numel()});
        offset += l.weight.numel();
        out.push_back({prefix + ".fc" + std::to_string(i) + ".bias", offset, l.bias.numel()});
        offset += l.bias.numel();
    }
}

void collect_mlp_grads(const Graph& g, const MlpNodes& nodes, std::vector<double>& out) {
    for (std::size_t i = 0; i < nodes.weights.size(); ++i) {
        const Tensor& gw = g.grad(nodes.weights[i]);
        out.insert(out.end(), gw.data.begin(), gw.data.end());
        const Tensor& gb = g.grad(nodes.biases[i]);
        out.insert(out.end(), gb.data.begin(), gb.data.end());
    }
}

namespace {

std::string param_name_at(const std::vector<ParamEntry>& layout, std::size_t i) {
    for (const ParamEntry& e : layout)
        if (i >= e.offset && i < e.offset + e.size) return e.name;
    return "param[" + std::to_string(i) + "]";
}

}  // namespace

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double weight_decay,
               const std::vector<ParamEntry>& layout) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: grads do not cover parameters");
    if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("adam_step: non-finite gradient for " + param_name_at(layout, i));

    state.step += 1;
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(state.beta1, t);
    double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i] + weight_decay * params[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

namespace {

constexpr char kMagic[4] = {'U', 'D', 'A', 'Q'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("checkpoint: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t u = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("checkpoint: truncated parameter data");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

}  // namespace

void write_checkpoint(std::ostream& os, const std::vector<std::vector<std::size_t>>& net_widths,
                      const std::vector<double>& flat_params) {
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(net_widths.size()));
    for (const auto& w : net_widths) {
        write_u32(os, static_cast<std::uint32_t>(w.size()));
        for (std::size_t x : w) write_u32(os, static_cast<std::uint32_t>(x));
    }
    write_u32(os, static_cast<std::uint32_t>(flat_params.size()));
    for (double d : flat_params) write_f64(os, d);
}

void read_checkpoint(std::istream& is, std::vector<std::vector<std::size_t>>& net_widths,
                     std::vector<double>& flat_params) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic");
    std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    net_widths.clear();
    std::uint32_t nnets = read_u32(is);
    for (std::uint32_t i = 0; i < nnets; ++i) {
        std::uint32_t nw = read_u32(is);
        std::vector<std::size_t> w(nw);
        for (auto& x : w) x = read_u32(is);
        net_widths.push_back(std::move(w));
    }
    std::uint32_t np = read_u32(is);
    flat_params.resize(np);
    for (auto& d : flat_params) d = read_f64(is);
}

}  // namespace udaqa
