#include "udaqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace udaqa {

std::vector<double> fractional_ranks(const std::vector<double>& values) {
    std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j share the average rank (1-based)
        double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& predictions, const std::vector<double>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("spearman: length mismatch");
    if (predictions.size() < 2)
        throw std::invalid_argument("spearman: need at least 2 samples");
    std::vector<double> p = fractional_ranks(predictions);
    std::vector<double> q = fractional_ranks(labels);
    double n = static_cast<double>(p.size());
    double pm = std::accumulate(p.begin(), p.end(), 0.0) / n;
    double qm = std::accumulate(q.begin(), q.end(), 0.0) / n;
    double num = 0.0, dp = 0.0, dq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        num += (p[i] - pm) * (q[i] - qm);
        dp += (p[i] - pm) * (p[i] - pm);
        dq += (q[i] - qm) * (q[i] - qm);
    }
    if (dp == 0.0 || dq == 0.0)
        throw std::invalid_argument("spearman: zero rank variance (all values tied)");
    return num / std::sqrt(dp * dq);
}

double fisher_z_average(const std::vector<double>& rhos) {
    if (rhos.empty()) throw std::invalid_argument("fisher_z_average: empty input");
    double acc = 0.0;
    for (double r : rhos) {
        if (!(r > -1.0 && r < 1.0))
            throw std::invalid_argument("fisher_z_average: rho must be in (-1, 1)");
        acc += std::atanh(r);
    }
    return std::tanh(acc / static_cast<double>(rhos.size()));
}

double relative_l2(const std::vector<double>& predictions, const std::vector<double>& labels,
                   double y_max, double y_min) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("relative_l2: length mismatch");
    if (predictions.empty())
        throw std::invalid_argument("relative_l2: empty input");
    if (!(y_max > y_min))
        throw std::invalid_argument("relative_l2: y_max must exceed y_min");
    double range = y_max - y_min;
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = std::abs(labels[i] - predictions[i]) / range;
        acc += d * d;
    }
    return acc / static_cast<double>(predictions.size());
}

}  // namespace udaqa
