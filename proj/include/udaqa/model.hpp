#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udaqa/dataset.hpp"
#include "udaqa/graph.hpp"
#include "udaqa/layers.hpp"

namespace udaqa {

struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> log_variance;
};

// Log-variances are clamped to this range before exponentiation.
inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 10.0;

// Negative-side slope of the uncertainty head's hidden activation.
inline constexpr double kMapLeakySlope = 0.2;

struct ModelDims {
    std::size_t M = 64;   // clip feature width
    std::size_t N = 32;   // CVAE input width
    std::size_t D = 6;    // latent width
    std::size_t K = 10;   // clips per video
    // Hidden widths; zero entries fall back to the defaults derived from
    // M, N, D at init time.
    std::vector<std::size_t> wa_hidden;         // default {M/2, M/2, M/2}
    std::vector<std::size_t> prior_hidden;      // default {N/2, N/2}
    std::vector<std::size_t> map_hidden;        // default {16}
    std::vector<std::size_t> regressor_hidden;  // default {256, 64}
};

struct ModelAblations {
    bool wa = true;    // off: mean-pool clips
    bool cvae = true;  // off: regressor consumes f_v only
};

struct ModelParams {
    ModelDims dims;
    ModelAblations ablations;
    Mlp wa_net;         // M -> ... -> M, per-clip weight logits
    Mlp prior_net;      // N -> ... -> 2D
    Mlp posterior_net;  // N+1 -> ... -> 2D
    Mlp map_net;        // D -> ... -> 1
    Mlp regressor;      // M+D (or M with cvae off) -> ... -> 1
    // Projects mean clip features to the CVAE input when the dataset carries
    // no separate video-level feature. Disjoint from wa_net by construction.
    std::optional<LinearLayer> x_proj;  // N x M

    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
    std::vector<ParamEntry> param_layout() const;
    std::size_t param_count() const;
};

ModelParams init_model(const ModelDims& dims, const ModelAblations& ablations,
                       bool needs_x_proj, std::uint64_t seed);

// Graph-side handles mirroring ModelParams.
struct ModelNodes {
    MlpNodes wa_net, prior_net, posterior_net, map_net, regressor;
    std::optional<MlpNodes> x_proj;
};

ModelNodes register_model(Graph& g, const ModelParams& params, bool requires_grad);
// Flat gradient vector in ModelParams::flatten order.
std::vector<double> collect_model_grads(const Graph& g, const ModelNodes& nodes);

struct GaussianNodes {
    Graph::NodeId mean;
    Graph::NodeId log_variance;  // clamped
};

// Weight-attention aggregation of K clip rows into one video feature
// (softmax across clips per feature dimension). With wa off this is the
// arithmetic mean over clips.
Graph::NodeId aggregate_clips(Graph& g, Graph::NodeId clip_matrix, const ModelNodes& nodes,
                              bool wa_enabled);

// CVAE input: the dataset's video-level vector when present, else the
// learned projection of mean clip features.
Graph::NodeId cvae_input(Graph& g, const FeatureSample& sample, Graph::NodeId clip_matrix,
                         const ModelNodes& nodes);

GaussianNodes prior_forward(Graph& g, Graph::NodeId x, const ModelNodes& nodes, std::size_t D);
GaussianNodes posterior_forward(Graph& g, Graph::NodeId x, Graph::NodeId y,
                                const ModelNodes& nodes, std::size_t D);
Graph::NodeId map_uncertainty(Graph& g, Graph::NodeId log_variance, const ModelNodes& nodes);
// f_u = mu + eps * exp(logvar / 2); eps is a constant, gradients flow to the
// distribution parameters only.
Graph::NodeId reparameterize(Graph& g, const GaussianNodes& dist, const Tensor& noise);
Graph::NodeId fuse_and_regress(Graph& g, Graph::NodeId f_v, std::optional<Graph::NodeId> f_u,
                               const ModelNodes& nodes);

struct PredictionSet {
    std::string sample_id;
    double deterministic_score = 0.0;       // normalized (unit) scale
    std::vector<double> sampled_scores;     // normalized scale, length t
    double log_uncertainty = 0.0;           // u1 at test time
};

// Test-time path: prior latent space only, deterministic score from eps = 0,
// t stochastic scores from fresh noise derived from (seed, sample id).
PredictionSet predict_scores(const FeatureSample& sample, const ModelParams& params,
                             int t, std::uint64_t seed);

}  // namespace udaqa
