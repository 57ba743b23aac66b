#pragma once

// Analytics for the per-transaction wealth fraction Q = T / P_v implied by
// the turnover-wealth law T = e^{a + da} P_v^beta with da ~ N(0, xi^2):
// density/CDF/moments by quadrature over the wealth distribution, the
// log-normal closed form, a Q sampler, and the two-regime mixture CDF.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/distributions.hpp"
#include "costfolio/quadrature.hpp"
#include "costfolio/rng.hpp"
#include "costfolio/special.hpp"

namespace costfolio {

struct tw_regime {
    double a = 0.0;    // intercept
    double beta = 1.0; // slope in (0, 1]
    double xi = 0.0;   // residual sd of log T given log P_v, > 0
};

struct turnover_wealth_model {
    std::vector<tw_regime> regimes;  // one or two
    std::optional<double> theta;     // log-P_v boundary between regimes

    const tw_regime& single() const {
        if (regimes.size() != 1)
            throw input_error("expected a single-regime turnover-wealth model");
        return regimes.front();
    }
};

struct q_model {
    double m = 0.0;  // log-location
    double s = 0.0;  // log-scale

    lognormal_dist to_dist() const { return {m, s}; }
};

namespace detail {

inline void check_regime(const tw_regime& r) {
    if (!(r.beta > 0.0 && r.beta <= 1.0))
        throw input_error("turnover-wealth regime: beta must be in (0,1]");
    if (!(r.xi > 0.0)) throw input_error("turnover-wealth regime: xi must be positive");
}

// Integration range for u = log p_v: +-10 sd for the log-normal, extreme
// quantiles otherwise.
inline std::pair<double, double> log_pv_bounds(const any_dist& pv) {
    if (const auto* ln = std::get_if<lognormal_dist>(&pv))
        return {ln->mu - 10.0 * ln->sigma, ln->mu + 10.0 * ln->sigma};
    const double lo = quantile(pv, 1e-16);
    const double hi = quantile(pv, 1.0 - 1e-16);
    if (!(lo > 0.0) || !(hi > lo))
        throw numeric_error("q-theory: wealth distribution support is degenerate");
    return {std::log(lo), std::log(hi)};
}

}  // namespace detail

// Density of Q at q: quadrature of the conditional log-normal kernel
// against the wealth density in u = log p_v, absolute tolerance 1e-9.
inline double q_pdf(double q, const turnover_wealth_model& model, const any_dist& pv,
                    double abs_tol = 1e-9) {
    if (!(q > 0.0)) throw input_error("q_pdf: q must be positive");
    const tw_regime r = model.single();
    detail::check_regime(r);
    if (r.beta == 1.0) return lognormal_dist{r.a, r.xi}.pdf(q);
    const double lq = std::log(q);
    const auto [lo, hi] = detail::log_pv_bounds(pv);
    auto integrand = [&](double u) {
        const double z = (lq + (1.0 - r.beta) * u - r.a) / r.xi;
        return norm_pdf(z) / (r.xi * q) * log_space_pdf(pv, u);
    };
    return integrate_or_throw(integrand, lo, hi, abs_tol);
}

// CDF of Q at q via the complementary error function form.
inline double q_cdf(double q, const turnover_wealth_model& model, const any_dist& pv,
                    double abs_tol = 1e-9) {
    if (!(q > 0.0)) throw input_error("q_cdf: q must be positive");
    const tw_regime r = model.single();
    detail::check_regime(r);
    if (r.beta == 1.0) return lognormal_dist{r.a, r.xi}.cdf(q);
    const double lq = std::log(q);
    const auto [lo, hi] = detail::log_pv_bounds(pv);
    auto integrand = [&](double u) {
        const double arg = (r.a - lq - (1.0 - r.beta) * u) / (std::sqrt(2.0) * r.xi);
        return 0.5 * std::erfc(arg) * log_space_pdf(pv, u);
    };
    const double v = integrate_or_throw(integrand, lo, hi, abs_tol);
    return std::min(std::max(v, 0.0), 1.0);
}

// n-th moment of Q: e^{na + n^2 xi^2 / 2} times the wealth integral
// E[p_v^{-n(1-beta)}]. Divergence of the integral is detected by probing
// extensions of the lower integration bound.
inline double q_moment(int n, const turnover_wealth_model& model, const any_dist& pv,
                       double abs_tol = 1e-10) {
    if (n < 0) throw input_error("q_moment: order must be non-negative");
    if (n == 0) return 1.0;
    const tw_regime r = model.single();
    detail::check_regime(r);
    const double dn = static_cast<double>(n);
    const double prefactor = std::exp(dn * r.a + 0.5 * dn * dn * r.xi * r.xi);
    if (r.beta == 1.0) return prefactor;
    const double rate = dn * (1.0 - r.beta);
    auto integrand = [&](double u) {
        return std::exp(-rate * u) * log_space_pdf(pv, u);
    };
    auto [lo, hi] = detail::log_pv_bounds(pv);
    double total = integrate_or_throw(integrand, lo, hi, abs_tol);
    // The weight e^{-rate u} explodes toward u -> -inf; extend until the
    // added slabs are negligible, or flag divergence if they grow.
    double prev_slab = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 12; ++k) {
        const double lo2 = lo - 10.0;
        const double slab = integrate(integrand, lo2, lo, abs_tol).value;
        if (slab > prev_slab && slab > 1e-12 * std::fabs(total))
            throw numeric_error("q_moment: wealth integral diverges for n=" +
                                std::to_string(n));
        total += slab;
        if (std::fabs(slab) < std::max(1e-14 * std::fabs(total), 1e-300)) break;
        prev_slab = slab;
        lo = lo2;
    }
    return prefactor * total;
}

// Closed form for a log-normal wealth distribution:
// Q ~ lnN(M, S^2), M = a - (1-beta) mu, S^2 = xi^2 + (1-beta)^2 sigma^2.
inline q_model closed_form_q(const turnover_wealth_model& model, double mu,
                             double sigma) {
    const tw_regime r = model.single();
    detail::check_regime(r);
    q_model qm;
    qm.m = r.a - (1.0 - r.beta) * mu;
    qm.s = std::sqrt(r.xi * r.xi + (1.0 - r.beta) * (1.0 - r.beta) * sigma * sigma);
    return qm;
}

// Draws Q = e^{M + S X}, X standard normal; deterministic given the seed.
inline std::vector<double> sample_q(const q_model& qm, std::size_t n,
                                    std::uint64_t seed) {
    rng64 rng(seed);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::exp(qm.m + qm.s * norm_quantile(rng.uniform01()));
    return out;
}

// Bookkeeping for samplers: the data construction guarantees Q <= 1, the
// log-normal model does not.
inline double fraction_above(std::span<const double> samples, double threshold) {
    if (samples.empty()) return 0.0;
    std::size_t k = 0;
    for (double v : samples)
        if (v > threshold) ++k;
    return static_cast<double>(k) / static_cast<double>(samples.size());
}

// Two-regime mixture CDF: wealth draws below theta follow regime 1, above
// theta regime 2; each component is the truncated log-normal integral.
inline double bilinear_q_cdf(double q, const turnover_wealth_model& model,
                             const lognormal_dist& pv, double abs_tol = 1e-9) {
    if (!(q > 0.0)) throw input_error("bilinear_q_cdf: q must be positive");
    if (model.regimes.size() != 2 || !model.theta)
        throw input_error("bilinear_q_cdf: need two regimes and a theta boundary");
    const tw_regime& r1 = model.regimes[0];
    const tw_regime& r2 = model.regimes[1];
    detail::check_regime(r1);
    detail::check_regime(r2);
    const double theta = *model.theta;
    const double lo = pv.mu - 10.0 * pv.sigma, hi = pv.mu + 10.0 * pv.sigma;
    auto single_cdf = [&](const tw_regime& r) {
        turnover_wealth_model m1{{r}, std::nullopt};
        return q_cdf(q, m1, any_dist{pv}, abs_tol);
    };
    if (theta >= hi) return single_cdf(r1);
    if (theta <= lo) return single_cdf(r2);
    const double lq = std::log(q);
    auto kernel = [&](const tw_regime& r, double u) {
        const double arg = (r.a - lq - (1.0 - r.beta) * u) / (std::sqrt(2.0) * r.xi);
        const double z = (u - pv.mu) / pv.sigma;
        return 0.5 * std::erfc(arg) * norm_pdf(z) / pv.sigma;
    };
    const double part1 = integrate_or_throw(
        [&](double u) { return kernel(r1, u); }, lo, theta, 0.5 * abs_tol);
    const double part2 = integrate_or_throw(
        [&](double u) { return kernel(r2, u); }, theta, hi, 0.5 * abs_tol);
    return std::min(std::max(part1 + part2, 0.0), 1.0);
}

// Matching density, for curve export.
inline double bilinear_q_pdf(double q, const turnover_wealth_model& model,
                             const lognormal_dist& pv, double abs_tol = 1e-9) {
    if (!(q > 0.0)) throw input_error("bilinear_q_pdf: q must be positive");
    if (model.regimes.size() != 2 || !model.theta)
        throw input_error("bilinear_q_pdf: need two regimes and a theta boundary");
    const tw_regime& r1 = model.regimes[0];
    const tw_regime& r2 = model.regimes[1];
    detail::check_regime(r1);
    detail::check_regime(r2);
    const double theta = *model.theta;
    const double lo = pv.mu - 10.0 * pv.sigma, hi = pv.mu + 10.0 * pv.sigma;
    auto single_pdf = [&](const tw_regime& r) {
        turnover_wealth_model m1{{r}, std::nullopt};
        return q_pdf(q, m1, any_dist{pv}, abs_tol);
    };
    if (theta >= hi) return single_pdf(r1);
    if (theta <= lo) return single_pdf(r2);
    const double lq = std::log(q);
    auto kernel = [&](const tw_regime& r, double u) {
        const double zq = (lq + (1.0 - r.beta) * u - r.a) / r.xi;
        const double z = (u - pv.mu) / pv.sigma;
        return norm_pdf(zq) / (r.xi * q) * norm_pdf(z) / pv.sigma;
    };
    const double part1 = integrate_or_throw(
        [&](double u) { return kernel(r1, u); }, lo, theta, 0.5 * abs_tol);
    const double part2 = integrate_or_throw(
        [&](double u) { return kernel(r2, u); }, theta, hi, 0.5 * abs_tol);
    return part1 + part2;
}

}  // namespace costfolio
