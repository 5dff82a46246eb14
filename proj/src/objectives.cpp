#include "udaqa/objectives.hpp"

#include <cmath>

namespace udaqa {

Graph::NodeId kl_diag_gaussian(Graph& g, const GaussianNodes& posterior,
                               const GaussianNodes& prior) {
    const Tensor& m2 = g.value(posterior.mean);
    if (!m2.same_shape(g.value(prior.mean)) ||
        !g.value(posterior.log_variance).same_shape(g.value(prior.log_variance)) ||
        m2.shape != g.value(posterior.log_variance).shape)
        throw std::invalid_argument("kl_diag_gaussian: dimension mismatch");
    std::size_t D = m2.numel();

    Graph::NodeId lv_diff = g.sub(prior.log_variance, posterior.log_variance);
    Graph::NodeId mean_sq = g.square(g.sub(posterior.mean, prior.mean));
    Graph::NodeId inv_var1 = g.exp(g.scale(prior.log_variance, -1.0));
    Graph::NodeId ratio = g.mul(g.add(g.exp(posterior.log_variance), mean_sq), inv_var1);
    Graph::NodeId per_dim = g.add(g.scale(lv_diff, 0.5), g.scale(ratio, 0.5));
    return g.sub(g.sum(per_dim), g.constant(0.5 * static_cast<double>(D)));
}

Graph::NodeId uncertainty_alignment_loss(Graph& g, Graph::NodeId u1, Graph::NodeId u2) {
    return g.l2_norm(g.sub(u1, u2));
}

namespace {

// Collapses numel-1 tensors of any rank to a rank-0 scalar node.
Graph::NodeId as_scalar(Graph& g, Graph::NodeId id) {
    if (g.value(id).numel() != 1)
        throw std::invalid_argument("objectives: expected a scalar, got " +
                                    g.value(id).shape_str());
    return g.value(id).is_scalar() ? id : g.sum(id);
}

}  // namespace

Graph::NodeId reweighted_aqa_loss(Graph& g, Graph::NodeId y_hat, Graph::NodeId y,
                                  Graph::NodeId u, bool squared_error) {
    Graph::NodeId ys = as_scalar(g, y_hat);
    Graph::NodeId yy = as_scalar(g, y);
    Graph::NodeId us = as_scalar(g, u);
    Graph::NodeId dist = squared_error ? g.square(g.sub(ys, yy)) : g.l2_norm(g.sub(ys, yy));
    return g.add(g.mul(g.exp(g.scale(us, -1.0)), dist), us);
}

Graph::NodeId plain_aqa_loss(Graph& g, Graph::NodeId y_hat, Graph::NodeId y,
                             bool squared_error) {
    Graph::NodeId ys = as_scalar(g, y_hat);
    Graph::NodeId yy = as_scalar(g, y);
    return squared_error ? g.square(g.sub(ys, yy)) : g.l2_norm(g.sub(ys, yy));
}

Graph::NodeId total_loss(Graph& g, Graph::NodeId raqa, Graph::NodeId latent,
                         Graph::NodeId u_loss, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0)
        throw std::invalid_argument("total_loss: weights must be nonnegative");
    return g.add(as_scalar(g, raqa),
                 g.add(g.scale(as_scalar(g, latent), alpha),
                       g.scale(as_scalar(g, u_loss), beta)));
}

double kl_diag_gaussian_value(const DiagGaussian& posterior, const DiagGaussian& prior) {
    if (posterior.mean.size() != prior.mean.size() ||
        posterior.log_variance.size() != prior.log_variance.size() ||
        posterior.mean.size() != posterior.log_variance.size())
        throw std::invalid_argument("kl_diag_gaussian_value: dimension mismatch");
    double acc = 0.0;
    for (std::size_t d = 0; d < posterior.mean.size(); ++d) {
        double lv1 = prior.log_variance[d], lv2 = posterior.log_variance[d];
        double dm = posterior.mean[d] - prior.mean[d];
        acc += 0.5 * (lv1 - lv2) + (std::exp(lv2) + dm * dm) / (2.0 * std::exp(lv1)) - 0.5;
    }
    return acc;
}

}  // namespace udaqa
