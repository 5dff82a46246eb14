#pragma once

#include <vector>

namespace udaqa {

// Spearman's rank correlation with fractional (average) ranks for ties.
// Throws std::invalid_argument on length < 2 or zero rank variance.
double spearman(const std::vector<double>& predictions, const std::vector<double>& labels);

// Fractional ranks, 1-based. Exposed for tests.
std::vector<double> fractional_ranks(const std::vector<double>& values);

// tanh(mean(atanh(rho_i))). |rho| == 1 is rejected.
double fisher_z_average(const std::vector<double>& rhos);

// Mean over samples of (|y - yhat| / (y_max - y_min))^2.
double relative_l2(const std::vector<double>& predictions, const std::vector<double>& labels,
                   double y_max, double y_min);

}  // namespace udaqa
