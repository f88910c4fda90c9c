#include "caedet/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace caedet::gmm {

namespace {

double percentile(std::vector<double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

/// log(w0*N0 + w1*N1) per point, and the two responsibilities.
double point_ll(const GmmParams& p, double x, double& r0, double& r1) {
    const double l0 = std::log(p.weight[0]) + log_normal_pdf(x, p.mean[0], p.variance[0]);
    const double l1 = std::log(p.weight[1]) + log_normal_pdf(x, p.mean[1], p.variance[1]);
    const double m = std::max(l0, l1);
    const double ll = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    r0 = std::exp(l0 - ll);
    r1 = std::exp(l1 - ll);
    return ll;
}

}  // namespace

void validate(const Gmm1dConfig& cfg) {
    if (cfg.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (cfg.tol < 0.0) throw std::invalid_argument("tol must be >= 0");
    if (cfg.variance_floor <= 0.0) throw std::invalid_argument("variance_floor must be positive");
}

namespace {

GmmParams run_em(const std::vector<double>& values, const Gmm1dConfig& cfg, double init_mean0,
                 double init_mean1, double init_var) {
    const size_t n = values.size();
    GmmParams p;
    p.mean = {init_mean0, init_mean1};
    p.variance = {init_var, init_var};
    p.weight = {0.5, 0.5};

    std::vector<double> r0(n), r1(n);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iters; ++it) {
        // E step
        double ll = 0.0;
        for (size_t i = 0; i < n; ++i) ll += point_ll(p, values[i], r0[i], r1[i]);
        p.log_likelihood_history.push_back(ll);
        p.final_log_likelihood = ll;
        p.iterations = it + 1;
        if (ll - prev_ll < cfg.tol && it > 0) break;
        prev_ll = ll;

        // M step
        double n0 = 0.0, n1 = 0.0, s0 = 0.0, s1 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            n0 += r0[i];
            n1 += r1[i];
            s0 += r0[i] * values[i];
            s1 += r1[i] * values[i];
        }
        if (n0 > 1e-12) p.mean[0] = s0 / n0;
        if (n1 > 1e-12) p.mean[1] = s1 / n1;
        double v0 = 0.0, v1 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d0 = values[i] - p.mean[0];
            const double d1 = values[i] - p.mean[1];
            v0 += r0[i] * d0 * d0;
            v1 += r1[i] * d1 * d1;
        }
        if (n0 > 1e-12) p.variance[0] = std::max(v0 / n0, cfg.variance_floor);
        if (n1 > 1e-12) p.variance[1] = std::max(v1 / n1, cfg.variance_floor);
        const double w0 = std::clamp(n0 / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
        p.weight = {w0, 1.0 - w0};
    }
    return p;
}

}  // namespace

GmmParams fit_gmm_1d(const std::vector<double>& values, const Gmm1dConfig& cfg) {
    validate(cfg);
    const size_t n = values.size();
    if (n < 2) throw std::invalid_argument("mixture fit needs at least 2 values");

    GmmParams p;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (*mn == *mx) {
        p.degenerate = true;
        p.mean = {*mn, *mn};
        p.variance = {cfg.variance_floor, cfg.variance_floor};
        return p;
    }

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0, sq = 0.0;
    for (double v : values) { sum += v; sq += v * v; }
    const double mean_all = sum / static_cast<double>(n);
    const double var_all =
        std::max(sq / static_cast<double>(n) - mean_all * mean_all, cfg.variance_floor);

    // EM from a single split can stall in a local optimum when one
    // component is a small minority (a 75th-percentile start sits inside
    // the majority bulk). Deterministic multi-start over quantile pairs,
    // keeping the highest final log-likelihood, covers minority fractions
    // down to a few percent on either side.
    constexpr double kStarts[][2] = {{0.25, 0.75}, {0.5, 0.95}, {0.05, 0.5}, {0.5, 0.85}};
    bool have = false;
    for (const auto& q : kStarts) {
        GmmParams cand = run_em(values, cfg, percentile(sorted, q[0]), percentile(sorted, q[1]),
                                var_all);
        if (!have || cand.final_log_likelihood > p.final_log_likelihood) {
            p = cand;
            have = true;
        }
    }
    return p;
}

double responsibility(const GmmParams& params, double x, int k) {
    if (k != 0 && k != 1) throw std::invalid_argument("component index must be 0 or 1");
    if (params.degenerate) return 0.5;
    double r0, r1;
    point_ll(params, x, r0, r1);
    return k == 0 ? r0 : r1;
}

int assign_component(const GmmParams& params, double x) {
    const int hi = params.mean[1] >= params.mean[0] ? 1 : 0;
    const double r_hi = responsibility(params, x, hi);
    return r_hi >= 0.5 ? hi : 1 - hi;
}

}  // namespace caedet::gmm
