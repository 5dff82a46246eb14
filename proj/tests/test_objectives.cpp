#include <doctest.h>

#include <cmath>

#include "udaqa/objectives.hpp"
#include "udaqa/rng.hpp"

using namespace udaqa;

namespace {

double gauss_pdf(double x, double mu, double var) {
    return std::exp(-(x - mu) * (x - mu) / (2.0 * var)) / std::sqrt(2.0 * 3.14159265358979323846 * var);
}

// Numerical-integration oracle for 1-D KL(q || p) via Simpson's rule.
double kl_integral(double mu2, double var2, double mu1, double var1) {
    double s2 = std::sqrt(var2), s1 = std::sqrt(var1);
    double lo = std::min(mu2 - 14 * s2, mu1 - 14 * s1);
    double hi = std::max(mu2 + 14 * s2, mu1 + 14 * s1);
    const int n = 40000;  // even
    double h = (hi - lo) / n;
    auto log_pdf = [](double x, double mu, double var) {
        return -(x - mu) * (x - mu) / (2.0 * var) -
               0.5 * std::log(2.0 * 3.14159265358979323846 * var);
    };
    auto f = [&](double x) {
        double q = gauss_pdf(x, mu2, var2);
        if (q < 1e-300) return 0.0;
        // log ratio taken analytically so tail underflow in p cannot blow up
        return q * (log_pdf(x, mu2, var2) - log_pdf(x, mu1, var1));
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

double kl_graph_value(const DiagGaussian& q, const DiagGaussian& p) {
    Graph g;
    GaussianNodes qn{g.leaf(Tensor::vector(q.mean)), g.leaf(Tensor::vector(q.log_variance))};
    GaussianNodes pn{g.leaf(Tensor::vector(p.mean)), g.leaf(Tensor::vector(p.log_variance))};
    return g.scalar_value(kl_diag_gaussian(g, qn, pn));
}

}  // namespace

TEST_CASE("kl: identical distributions give zero") {
    DiagGaussian d{{0.3, -1.0}, {0.2, 0.9}};
    CHECK(kl_graph_value(d, d) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kl: unit-variance mean shift of 1 gives 0.5") {
    DiagGaussian q{{1.0}, {0.0}}, p{{0.0}, {0.0}};
    CHECK(kl_graph_value(q, p) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(kl_integral(1.0, 1.0, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("kl: equal means, variance ratio 4") {
    DiagGaussian q{{0.0}, {std::log(4.0)}}, p{{0.0}, {0.0}};
    double expected = -0.5 * std::log(4.0) + 2.0 - 0.5;  // about 0.8069
    CHECK(kl_graph_value(q, p) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(kl_integral(0.0, 4.0, 0.0, 1.0) == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("kl matches numerical integration on random 1-d pairs") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        double mu2 = rng.uniform(-2, 2), mu1 = rng.uniform(-2, 2);
        double lv2 = rng.uniform(-1.5, 1.5), lv1 = rng.uniform(-1.5, 1.5);
        DiagGaussian q{{mu2}, {lv2}}, p{{mu1}, {lv1}};
        double closed = kl_graph_value(q, p);
        CAPTURE(trial);
        CHECK(closed == doctest::Approx(kl_integral(mu2, std::exp(lv2), mu1, std::exp(lv1)))
                            .epsilon(1e-6));
        CHECK(kl_graph_value(q, p) == doctest::Approx(kl_diag_gaussian_value(q, p)).epsilon(1e-14));
    }
}

TEST_CASE("kl is nonnegative and zero only at coincidence") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        DiagGaussian q{{rng.uniform(-3, 3), rng.uniform(-3, 3)},
                       {rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        DiagGaussian p{{rng.uniform(-3, 3), rng.uniform(-3, 3)},
                       {rng.uniform(-2, 2), rng.uniform(-2, 2)}};
        double v = kl_diag_gaussian_value(q, p);
        CHECK(v >= -1e-12);
        bool same = q.mean == p.mean && q.log_variance == p.log_variance;
        if (!same) CHECK(v > 0.0);
    }
}

TEST_CASE("kl gradient passes the finite difference check") {
    // point packs (mu2, lv2, mu1, lv1) for D = 2
    auto build = [](Graph& g, Graph::NodeId x) {
        GaussianNodes q{g.slice(x, 0, 2), g.slice(x, 2, 2)};
        GaussianNodes p{g.slice(x, 4, 2), g.slice(x, 6, 2)};
        return kl_diag_gaussian(g, q, p);
    };
    Tensor point = Tensor::vector({0.5, -0.2, 0.3, 0.8, -0.1, 0.4, -0.5, 0.2});
    CHECK(finite_diff_check(build, point, 1e-5) <= 1e-4);
}

TEST_CASE("uncertainty alignment loss") {
    Graph g;
    auto u1 = g.leaf(Tensor::scalar(2.0), true);
    auto u2 = g.leaf(Tensor::scalar(-1.0), true);
    auto loss = uncertainty_alignment_loss(g, u1, u2);
    CHECK(g.scalar_value(loss) == 3.0);
    g.backward(loss);
    CHECK(g.grad(u1).data[0] == doctest::Approx(1.0));
    CHECK(g.grad(u2).data[0] == doctest::Approx(-1.0));

    Graph g2;
    auto same = uncertainty_alignment_loss(g2, g2.leaf(Tensor::scalar(0.7)),
                                           g2.leaf(Tensor::scalar(0.7)));
    CHECK(g2.scalar_value(same) == 0.0);
}

TEST_CASE("reweighted aqa loss values") {
    auto eval = [](double y_hat, double y, double u) {
        Graph g;
        return g.scalar_value(reweighted_aqa_loss(g, g.leaf(Tensor::scalar(y_hat)),
                                                  g.leaf(Tensor::scalar(y)),
                                                  g.leaf(Tensor::scalar(u))));
    };
    CHECK(eval(1.0, 1.0, 0.0) == 0.0);
    CHECK(eval(3.0, 1.0, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(eval(3.0, 1.0, 1.0) == doctest::Approx(2.0 * std::exp(-1.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("reweighted loss gradient in u switches sign at exp(-u)|e| = 1") {
    auto grad_u = [](double y_hat, double y, double u) {
        Graph g;
        auto un = g.leaf(Tensor::scalar(u), true);
        auto loss = reweighted_aqa_loss(g, g.leaf(Tensor::scalar(y_hat)),
                                        g.leaf(Tensor::scalar(y)), un);
        g.backward(loss);
        return g.grad(un).data[0];
    };
    // analytic: 1 - exp(-u)|e|
    CHECK(grad_u(3.0, 1.0, 0.0) == doctest::Approx(1.0 - 2.0).epsilon(1e-12));   // negative
    CHECK(grad_u(1.5, 1.0, 0.0) == doctest::Approx(1.0 - 0.5).epsilon(1e-12));   // positive
    CHECK(grad_u(3.0, 1.0, 2.0) == doctest::Approx(1.0 - 2.0 * std::exp(-2.0)).epsilon(1e-12));

    auto build = [](Graph& g, Graph::NodeId x) {
        return reweighted_aqa_loss(g, g.slice(x, 0, 1), g.constant(Tensor::vector({1.0})),
                                   g.slice(x, 1, 1));
    };
    CHECK(finite_diff_check(build, Tensor::vector({3.0, 0.7}), 1e-6) <= 1e-4);
}

TEST_CASE("squared-error variant") {
    Graph g;
    auto loss = reweighted_aqa_loss(g, g.leaf(Tensor::scalar(3.0)), g.leaf(Tensor::scalar(1.0)),
                                    g.leaf(Tensor::scalar(0.0)), true);
    CHECK(g.scalar_value(loss) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("total loss combination and linearity") {
    auto eval = [](double raqa, double latent, double u, double a, double b) {
        Graph g;
        return g.scalar_value(total_loss(g, g.leaf(Tensor::scalar(raqa)),
                                         g.leaf(Tensor::scalar(latent)),
                                         g.leaf(Tensor::scalar(u)), a, b));
    };
    CHECK(eval(1.5, 9.0, 4.0, 0.0, 0.0) == 1.5);
    CHECK(eval(1.0, 2.0, 0.3, 1.0, 10.0) == doctest::Approx(6.0).epsilon(1e-15));
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        double r = rng.uniform(0, 5), l = rng.uniform(0, 5), u = rng.uniform(0, 5);
        double a = rng.uniform(0, 3), b = rng.uniform(0, 20);
        CHECK(eval(r, l, u, a, b) == doctest::Approx(r + a * l + b * u).epsilon(1e-12));
    }
}

TEST_CASE("total loss rejects negative weights") {
    Graph g;
    auto z = g.leaf(Tensor::scalar(0.0));
    CHECK_THROWS_AS(total_loss(g, z, z, z, -1.0, 0.0), std::invalid_argument);
}
