#pragma once

#include <array>
#include <vector>

namespace caedet::gmm {

struct Gmm1dConfig {
    int max_iters = 200;
    double tol = 1e-6;           // stop when log-likelihood gain drops below
    double variance_floor = 1e-8;
};

void validate(const Gmm1dConfig& cfg);

/// Two-component univariate Gaussian mixture. Component order carries no
/// meaning; consumers compare means. degenerate is set when every input
/// value is identical and no mixture was fitted.
struct GmmParams {
    std::array<double, 2> weight{0.5, 0.5};
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> variance{0.0, 0.0};
    int iterations = 0;
    double final_log_likelihood = 0.0;
    std::vector<double> log_likelihood_history;  // one entry per EM iteration
    bool degenerate = false;
};

/// EM fit with deterministic multi-start: means are seeded from several
/// quantile pairs (weights 1/2 each, variances at the pooled sample
/// variance) and the start with the best final log-likelihood wins, so a
/// small minority component is found even when a single split would
/// stall inside the majority bulk. Needs at least 2 values. The reported
/// likelihood history is the winning run's.
GmmParams fit_gmm_1d(const std::vector<double>& values, const Gmm1dConfig& cfg = {});

/// Posterior probability that x belongs to component k.
double responsibility(const GmmParams& params, double x, int k);

/// Component with the larger posterior at x (ties to the larger-mean
/// component).
int assign_component(const GmmParams& params, double x);

}  // namespace caedet::gmm
