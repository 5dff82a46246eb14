#pragma once

#include "udaqa/graph.hpp"
#include "udaqa/model.hpp"

namespace udaqa {

// KL(Q || P) for diagonal Gaussians, summed over dimensions:
//   sum_d [ (lv1 - lv2)/2 + (exp(lv2) + (m2 - m1)^2) / (2 exp(lv1)) - 1/2 ]
// Q is the posterior, P the prior.
Graph::NodeId kl_diag_gaussian(Graph& g, const GaussianNodes& posterior,
                               const GaussianNodes& prior);

// |u1 - u2|
Graph::NodeId uncertainty_alignment_loss(Graph& g, Graph::NodeId u1, Graph::NodeId u2);

// exp(-u) * |yhat - y| + u; squared variant uses (yhat - y)^2.
Graph::NodeId reweighted_aqa_loss(Graph& g, Graph::NodeId y_hat, Graph::NodeId y,
                                  Graph::NodeId u, bool squared_error = false);

// Plain regression distance, used when reweighting is ablated.
Graph::NodeId plain_aqa_loss(Graph& g, Graph::NodeId y_hat, Graph::NodeId y,
                             bool squared_error = false);

// raqa + alpha * latent + beta * u_loss
Graph::NodeId total_loss(Graph& g, Graph::NodeId raqa, Graph::NodeId latent,
                         Graph::NodeId u_loss, double alpha, double beta);

// Closed-form KL on plain values, for callers outside a graph.
double kl_diag_gaussian_value(const DiagGaussian& posterior, const DiagGaussian& prior);

}  // namespace udaqa
