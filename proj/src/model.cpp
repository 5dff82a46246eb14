#include "udaqa/model.hpp"

#include <cmath>

#include "udaqa/errors.hpp"
#include "udaqa/rng.hpp"

namespace udaqa {

namespace {

std::vector<std::size_t> widths_or(const std::vector<std::size_t>& override_hidden,
                                   std::vector<std::size_t> default_hidden,
                                   std::size_t in, std::size_t out) {
    std::vector<std::size_t> w{in};
    const auto& h = override_hidden.empty() ? default_hidden : override_hidden;
    for (std::size_t x : h) w.push_back(x);
    w.push_back(out);
    return w;
}

std::size_t half(std::size_t x) { return x >= 2 ? x / 2 : 1; }

}  // namespace

ModelParams init_model(const ModelDims& dims, const ModelAblations& ablations,
                       bool needs_x_proj, std::uint64_t seed) {
    if (dims.M == 0 || dims.N == 0 || dims.D == 0 || dims.K == 0)
        throw std::invalid_argument("init_model: dimensions must be positive");
    ModelParams p;
    p.dims = dims;
    p.ablations = ablations;
    Rng rng(seed);
    std::size_t M = dims.M, N = dims.N, D = dims.D;
    p.wa_net = init_mlp(widths_or(dims.wa_hidden, {half(M), half(M), half(M)}, M, M), rng);
    p.prior_net = init_mlp(widths_or(dims.prior_hidden, {half(N), half(N)}, N, 2 * D), rng);
    p.posterior_net =
        init_mlp(widths_or(dims.prior_hidden, {half(N), half(N)}, N + 1, 2 * D), rng);
    p.map_net = init_mlp(widths_or(dims.map_hidden, {16}, D, 1), rng);
    std::size_t reg_in = M + (ablations.cvae ? D : 0);
    p.regressor = init_mlp(widths_or(dims.regressor_hidden, {256, 64}, reg_in, 1), rng);
    if (needs_x_proj) p.x_proj = init_linear(M, N, rng);
    return p;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    flatten_mlp(wa_net, flat);
    flatten_mlp(prior_net, flat);
    flatten_mlp(posterior_net, flat);
    flatten_mlp(map_net, flat);
    flatten_mlp(regressor, flat);
    if (x_proj) {
        flat.insert(flat.end(), x_proj->weight.data.begin(), x_proj->weight.data.end());
        flat.insert(flat.end(), x_proj->bias.data.begin(), x_proj->bias.data.end());
    }
    return flat;
}

void ModelParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("ModelParams::unflatten: size mismatch");
    std::size_t off = 0;
    off = unflatten_mlp(wa_net, flat, off);
    off = unflatten_mlp(prior_net, flat, off);
    off = unflatten_mlp(posterior_net, flat, off);
    off = unflatten_mlp(map_net, flat, off);
    off = unflatten_mlp(regressor, flat, off);
    if (x_proj) {
        std::copy(flat.begin() + off, flat.begin() + off + x_proj->weight.numel(),
                  x_proj->weight.data.begin());
        off += x_proj->weight.numel();
        std::copy(flat.begin() + off, flat.begin() + off + x_proj->bias.numel(),
                  x_proj->bias.data.begin());
    }
}

std::vector<ParamEntry> ModelParams::param_layout() const {
    std::vector<ParamEntry> out;
    std::size_t off = 0;
    mlp_param_entries(wa_net, "wa_net", off, out);
    mlp_param_entries(prior_net, "prior_net", off, out);
    mlp_param_entries(posterior_net, "posterior_net", off, out);
    mlp_param_entries(map_net, "map_net", off, out);
    mlp_param_entries(regressor, "regressor", off, out);
    if (x_proj) {
        out.push_back({"x_proj.weight", off, x_proj->weight.numel()});
        off += x_proj->weight.numel();
        out.push_back({"x_proj.bias", off, x_proj->bias.numel()});
    }
    return out;
}

std::size_t ModelParams::param_count() const {
    std::size_t n = wa_net.param_count() + prior_net.param_count() +
                    posterior_net.param_count() + map_net.param_count() +
                    regressor.param_count();
    if (x_proj) n += x_proj->weight.numel() + x_proj->bias.numel();
    return n;
}

ModelNodes register_model(Graph& g, const ModelParams& params, bool requires_grad) {
    ModelNodes n;
    n.wa_net = register_mlp(g, params.wa_net, requires_grad);
    n.prior_net = register_mlp(g, params.prior_net, requires_grad);
    n.posterior_net = register_mlp(g, params.posterior_net, requires_grad);
    n.map_net = register_mlp(g, params.map_net, requires_grad);
    n.regressor = register_mlp(g, params.regressor, requires_grad);
    if (params.x_proj) {
        Mlp proj;
        proj.layers.push_back(*params.x_proj);
        n.x_proj = register_mlp(g, proj, requires_grad);
    }
    return n;
}

std::vector<double> collect_model_grads(const Graph& g, const ModelNodes& nodes) {
    std::vector<double> out;
    collect_mlp_grads(g, nodes.wa_net, out);
    collect_mlp_grads(g, nodes.prior_net, out);
    collect_mlp_grads(g, nodes.posterior_net, out);
    collect_mlp_grads(g, nodes.map_net, out);
    collect_mlp_grads(g, nodes.regressor, out);
    if (nodes.x_proj) collect_mlp_grads(g, *nodes.x_proj, out);
    return out;
}

Graph::NodeId aggregate_clips(Graph& g, Graph::NodeId clip_matrix, const ModelNodes& nodes,
                              bool wa_enabled) {
    const Tensor& cm = g.value(clip_matrix);
    if (cm.rank() != 2 || cm.shape[0] == 0)
        throw std::invalid_argument("aggregate_clips: need a nonempty [K x M] matrix");
    std::size_t K = cm.shape[0], M = cm.shape[1];
    if (!wa_enabled)
        return g.scale(g.sum_axis(clip_matrix, 0), 1.0 / static_cast<double>(K));
    std::vector<Graph::NodeId> logits;
    logits.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        Graph::NodeId row = g.slice(clip_matrix, k * M, M);
        logits.push_back(mlp_forward(g, nodes.wa_net, row));
    }
    Graph::NodeId weight_logits = g.stack_rows(logits);        // [K x M]
    Graph::NodeId weights = g.softmax(weight_logits, 0);       // normalized over clips
    return g.sum_axis(g.mul(weights, clip_matrix), 0);         // f_v [M]
}

Graph::NodeId cvae_input(Graph& g, const FeatureSample& sample, Graph::NodeId clip_matrix,
                         const ModelNodes& nodes) {
    if (sample.video_feature) return g.constant(*sample.video_feature);
    if (!nodes.x_proj)
        throw std::invalid_argument("cvae_input: dataset has no video feature and model has no projection");
    std::size_t K = g.value(clip_matrix).shape[0];
    Graph::NodeId mean_clips =
        g.scale(g.sum_axis(clip_matrix, 0), 1.0 / static_cast<double>(K));
    return mlp_forward(g, *nodes.x_proj, mean_clips);
}

namespace {

GaussianNodes split_gaussian(Graph& g, Graph::NodeId out, std::size_t D) {
    GaussianNodes gn;
    gn.mean = g.slice(out, 0, D);
    gn.log_variance = g.clamp(g.slice(out, D, D), kLogVarMin, kLogVarMax);
    return gn;
}

}  // namespace

GaussianNodes prior_forward(Graph& g, Graph::NodeId x, const ModelNodes& nodes, std::size_t D) {
    return split_gaussian(g, mlp_forward(g, nodes.prior_net, x), D);
}

GaussianNodes posterior_forward(Graph& g, Graph::NodeId x, Graph::NodeId y,
                                const ModelNodes& nodes, std::size_t D) {
    return split_gaussian(g, mlp_forward(g, nodes.posterior_net, g.concat({x, y})), D);
}

Graph::NodeId map_uncertainty(Graph& g, Graph::NodeId log_variance, const ModelNodes& nodes) {
    // The uncertainty head uses a leaky hidden activation: the loss drives u
    // strongly downward early in training, and with a hard relu that pressure
    // parks every hidden unit below zero, permanently severing u from the
    // log-variance input (u degenerates to the output bias).
    return mlp_forward(g, nodes.map_net, log_variance, kMapLeakySlope);
}

Graph::NodeId reparameterize(Graph& g, const GaussianNodes& dist, const Tensor& noise) {
    Graph::NodeId sigma = g.exp(g.scale(dist.log_variance, 0.5));
    return g.add(dist.mean, g.mul(g.constant(noise), sigma));
}

Graph::NodeId fuse_and_regress(Graph& g, Graph::NodeId f_v, std::optional<Graph::NodeId> f_u,
                               const ModelNodes& nodes) {
    Graph::NodeId in = f_u ? g.concat({f_v, *f_u}) : f_v;
    return mlp_forward(g, nodes.regressor, in);
}

PredictionSet predict_scores(const FeatureSample& sample, const ModelParams& params,
                             int t, std::uint64_t seed) {
    if (t < 1) throw std::invalid_argument("predict_scores: t must be >= 1");
    std::size_t D = params.dims.D;
    Graph g;
    ModelNodes nodes = register_model(g, params, false);
    Graph::NodeId clips = g.constant(sample.clip_features);
    Graph::NodeId f_v = aggregate_clips(g, clips, nodes, params.ablations.wa);

    PredictionSet out;
    out.sample_id = sample.id;
    if (!params.ablations.cvae) {
        out.deterministic_score = g.scalar_value(fuse_and_regress(g, f_v, std::nullopt, nodes));
        return out;
    }
    Graph::NodeId x = cvae_input(g, sample, clips, nodes);
    GaussianNodes prior = prior_forward(g, x, nodes, D);
    out.log_uncertainty = g.scalar_value(map_uncertainty(g, prior.log_variance, nodes));

    Graph::NodeId det_fu = reparameterize(g, prior, Tensor::zeros({D}));
    out.deterministic_score = g.scalar_value(fuse_and_regress(g, f_v, det_fu, nodes));

    Rng noise_rng(hash_combine(seed, sample.id));
    out.sampled_scores.reserve(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) {
        Tensor eps = Tensor::zeros({D});
        for (double& e : eps.data) e = noise_rng.normal();
        Graph::NodeId f_u = reparameterize(g, prior, eps);
        out.sampled_scores.push_back(g.scalar_value(fuse_and_regress(g, f_v, f_u, nodes)));
    }
    return out;
}

}  // namespace udaqa
