#pragma once

// One-shot mean-variance portfolio optimization under a power-law fee
// schedule F(a) = min(C a^delta, F_max): objective assembly, the optimal
// invested fraction x* and asset count N*, the high-diversification
// asymptotics, the exponent algebra linking delta to the turnover-wealth
// slopes, and Sharpe one-factor parameter estimation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/regress.hpp"
#include "costfolio/solvers.hpp"
#include "costfolio/tailfit.hpp"

namespace costfolio {

struct fee_segment {
    double lower = 0.0;
    double upper = 0.0;
    double fee = 0.0;
};

struct power_law_fee {
    double c = 0.0;      // coefficient, > 0
    double delta = 0.0;  // exponent in [0, 1]
    double f_max = std::numeric_limits<double>::infinity();  // fee cap
};

struct fee_schedule {
    std::vector<fee_segment> segments;       // broker staircase, optional
    std::optional<power_law_fee> fitted;     // smooth approximation

    const power_law_fee& fitted_or_throw() const {
        if (!fitted) throw input_error("fee schedule has no fitted power law");
        return *fitted;
    }
};

// Commission for a single exchanged amount.
inline double fee(double amount, const fee_schedule& schedule) {
    if (amount < 0.0) throw input_error("fee: negative amount");
    if (!schedule.segments.empty()) {
        const auto& segs = schedule.segments;
        for (const auto& s : segs)
            if (amount >= s.lower && amount < s.upper) return s.fee;
        if (amount >= segs.back().upper) return segs.back().fee;
        return segs.front().fee;
    }
    const auto& p = schedule.fitted_or_throw();
    if (amount == 0.0 && p.delta > 0.0) return 0.0;
    return std::min(p.c * std::pow(amount, p.delta), p.f_max);
}

inline void validate_segments(const std::vector<fee_segment>& segs) {
    if (segs.empty()) return;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (!(segs[i].upper > segs[i].lower) || segs[i].lower < 0.0)
            throw input_error("fee segment " + std::to_string(i) + " has an empty range");
        if (!(segs[i].fee >= 0.0))
            throw input_error("fee segment " + std::to_string(i) + " has a negative fee");
        if (i > 0 && segs[i].lower != segs[i - 1].upper)
            throw input_error("fee segments must be contiguous");
        if (i > 0 && segs[i].fee < segs[i - 1].fee)
            throw input_error("fee must be nondecreasing in the amount");
    }
}

// Least-squares power-law fit of log fee against log amount at the
// geometric segment midpoints; CIs by BCa bootstrap over segments.
struct fee_fit {
    power_law_fee params;
    bootstrap_ci ci_c, ci_delta;
    std::size_t n_segments = 0;
};

inline fee_fit fit_fee_powerlaw(std::span<const fee_segment> segments, int B = 1999,
                                std::uint64_t seed = 1) {
    if (segments.size() < 3)
        throw input_error("fit_fee_powerlaw: need at least 3 segments");
    std::vector<double> lx(segments.size()), ly(segments.size());
    double f_max = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (!(s.fee > 0.0) || !(s.upper > 0.0))
            throw input_error("fit_fee_powerlaw: segments need positive fee and bounds");
        // Geometric midpoint in log-amount space; a [0, u) opening segment
        // has no geometric midpoint, so its arithmetic one stands in.
        const double mid = s.lower > 0.0 ? std::sqrt(s.lower * s.upper) : 0.5 * s.upper;
        lx[i] = std::log(mid);
        ly[i] = std::log(s.fee);
        f_max = std::max(f_max, s.fee);
    }
    const ols_fit f = ols(lx, ly, false);
    fee_fit out;
    out.params.delta = f.slope;
    out.params.c = std::exp(f.intercept);
    out.params.f_max = f_max;
    out.n_segments = segments.size();

    // Bootstrap over (log mid, log fee) pairs.
    std::vector<double> idx(segments.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
    auto slope_est = [&](std::span<const double> ids) {
        std::vector<double> bx, by;
        bx.reserve(ids.size());
        for (double v : ids) {
            const auto i = static_cast<std::size_t>(v);
            bx.push_back(lx[i]);
            by.push_back(ly[i]);
        }
        return ols(bx, by, false).slope;
    };
    auto intercept_est = [&](std::span<const double> ids) {
        std::vector<double> bx, by;
        bx.reserve(ids.size());
        for (double v : ids) {
            const auto i = static_cast<std::size_t>(v);
            bx.push_back(lx[i]);
            by.push_back(ly[i]);
        }
        return std::exp(ols(bx, by, false).intercept);
    };
    out.ci_delta = bca_bootstrap(slope_est, idx, B, seed);
    out.ci_c = bca_bootstrap(intercept_est, idx, B, derive_seed(seed, 1));
    return out;
}

// --------------------------------------------------------------------------
// Market model and objective.

struct market_params {
    double expected_market_return = 0.0;  // E(R_M) per horizon
    double market_variance = 0.0;         // Var(R_M), > 0
    double risk_free = 0.0;               // r >= 0
    double mean_beta = 1.0;               // average market loading
    double mean_idio_variance = 0.0;      // average idiosyncratic variance, > 0

    void validate() const {
        if (!(market_variance > 0.0))
            throw input_error("market_params: market_variance must be positive");
        if (!(mean_idio_variance > 0.0))
            throw input_error("market_params: mean_idio_variance must be positive");
        if (risk_free < 0.0) throw input_error("market_params: negative risk-free rate");
    }
    double risk_premium() const { return mean_beta * (expected_market_return - risk_free); }
};

// L_lambda = lambda E(R) - Var(R) for the equally-weighted portfolio
// (x_i = x/N): E(R) carries the fee drag -(1+r) C N (x/N)^delta / P_v^(1-delta),
// Var(R) = beta_bar^2 Var(R_M) x^2 + x^2 mean_idio_variance / N.
inline double objective(double x, double n_assets, double lambda, double pv,
                        const market_params& market, const fee_schedule& schedule) {
    market.validate();
    if (!(pv > 0.0)) throw input_error("objective: account value must be positive");
    if (!(n_assets >= 1.0)) throw input_error("objective: N must be at least 1");
    const auto& p = schedule.fitted_or_throw();
    const double r = market.risk_free;
    double expected = market.risk_premium() * x + r;
    if (x > 0.0)
        expected -= (1.0 + r) * p.c / std::pow(pv, 1.0 - p.delta) * n_assets *
                    std::pow(x / n_assets, p.delta);
    const double variance =
        market.mean_beta * market.mean_beta * market.market_variance * x * x +
        x * x * market.mean_idio_variance / n_assets;
    return lambda * expected - variance;
}

// --------------------------------------------------------------------------
// Optimal invested fraction x* for known N (stationarity of the objective).

struct x_star_result {
    double x = 0.0;
    bool boundary = false;       // clamped to 0 or 1
    double residual = 0.0;       // |x - RHS(x)| at an interior solution
};

inline x_star_result solve_x_star(double n_assets, double lambda, double pv,
                                  const market_params& market,
                                  const fee_schedule& schedule) {
    market.validate();
    if (!(n_assets >= 1.0)) throw input_error("solve_x_star: N must be at least 1");
    if (!(lambda > 0.0)) throw input_error("solve_x_star: lambda must be positive");
    if (!(pv > 0.0)) throw input_error("solve_x_star: account value must be positive");
    const auto& p = schedule.fitted_or_throw();
    const double a = market.risk_premium();
    const double r = market.risk_free;
    const double denom = market.mean_beta * market.mean_beta * market.market_variance +
                         market.mean_idio_variance / n_assets;
    auto obj = [&](double x) {
        return objective(x, n_assets, lambda, pv, market, schedule);
    };
    auto clamp_result = [&](double x_unc) {
        x_star_result res;
        if (x_unc <= 0.0) {
            res.x = 0.0;
            res.boundary = true;
        } else if (x_unc >= 1.0) {
            res.x = obj(1.0) >= obj(0.0) ? 1.0 : 0.0;
            res.boundary = true;
        } else {
            res.x = x_unc;
        }
        return res;
    };

    if (p.c == 0.0) return clamp_result(0.5 * lambda * a / denom);
    if (p.delta >= 1.0) {
        // Proportional fees enter the expected return linearly.
        const double x_unc = 0.5 * lambda * (a - (1.0 + r) * p.c) / denom;
        return clamp_result(x_unc);
    }
    if (p.delta == 0.0) {
        // Flat fee: independent of x for x > 0, so the interior optimum is
        // the frictionless one; x = 0 competes through the avoided fees.
        const double x_m = std::min(0.5 * lambda * a / denom, 1.0);
        x_star_result res;
        if (x_m <= 0.0 || obj(x_m) < obj(0.0)) {
            res.x = 0.0;
            res.boundary = true;
        } else {
            res.x = x_m;
            res.boundary = x_m >= 1.0;
        }
        return res;
    }

    // Power-law fees, 0 < delta < 1. The stationarity condition is the
    // fixed point x = RHS(x); RHS is increasing and concave with
    // RHS(0+) = -inf, so the largest fixed point is the local maximum.
    const double cost_coef = p.delta * (1.0 + r) * p.c *
                             std::pow(n_assets / pv, 1.0 - p.delta);
    auto rhs = [&](double x) {
        return 0.5 * lambda * (a - cost_coef * std::pow(x, p.delta - 1.0)) / denom;
    };
    const double x_upper = 0.5 * lambda * a / denom;  // RHS(x) < x_upper always
    x_star_result res;
    if (!(x_upper > 0.0)) {
        res.x = 0.0;
        res.boundary = true;
        return res;
    }
    // Stationary point of h(x) = RHS(x) - x, where RHS'(x) = 1.
    const double x_c = std::pow(
        0.5 * lambda * p.delta * (1.0 - p.delta) * (1.0 + r) * p.c *
            std::pow(n_assets / pv, 1.0 - p.delta) / denom,
        1.0 / (2.0 - p.delta));
    auto h = [&](double x) { return rhs(x) - x; };
    if (x_c >= x_upper || h(x_c) < 0.0) {
        // Fees exceed the risk premium everywhere: all-cash boundary.
        res.x = 0.0;
        res.boundary = true;
        return res;
    }
    double lo = x_c, hi = x_upper;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) >= 0.0 ? lo : hi) = mid;
    }
    double x_fp = 0.5 * (lo + hi);
    // Newton polish on h.
    for (int i = 0; i < 4; ++i) {
        const double hp = 0.5 * lambda * cost_coef * (1.0 - p.delta) *
                              std::pow(x_fp, p.delta - 2.0) / denom -
                          1.0;
        const double hv = h(x_fp);
        if (hp == 0.0) break;
        const double next = x_fp - hv / hp;
        if (next > 0.0 && next < x_upper * 2.0) x_fp = next;
    }

    if (x_fp >= 1.0) {
        res.x = obj(1.0) >= obj(0.0) ? 1.0 : 0.0;
        res.boundary = true;
        return res;
    }
    if (obj(x_fp) < obj(0.0)) {
        res.x = 0.0;
        res.boundary = true;
        return res;
    }
    res.x = x_fp;
    res.residual = std::fabs(x_fp - rhs(x_fp));
    // Cross-check: the objective is unimodal to the right of the lower
    // fixed point, so golden-section from x_c must agree.
    const double x_gs = golden_section_max(obj, x_c, std::min(1.0, x_upper), 1e-10);
    if (std::fabs(x_gs - x_fp) > 1e-6 * (1.0 + x_fp))
        throw numeric_error("solve_x_star: fixed point and golden-section argmax "
                            "disagree (possible multi-modal objective)");
    return res;
}

// --------------------------------------------------------------------------
// Optimal number of assets N* for a target invested fraction x.
//
// Eliminating lambda between the two stationarity conditions gives
//   N^(2-delta) [ 2 B/V + (2 + delta/(1-delta)) / N ] = A (x P_v)^(1-delta)
//                                     / ((1-delta) C (1+r)),
// with A the risk premium, B = beta_bar^2 Var(R_M), V = mean idio variance.
// Requires delta < 1 strictly; at delta = 1 the cost term drops out of the
// N-derivative and the optimum no longer depends on N.

inline double k_ratio_exact(double n_assets, const market_params& market) {
    const double b = market.mean_beta * market.mean_beta * market.market_variance;
    return 2.0 / (b / market.mean_idio_variance + 1.0 / n_assets);
}

inline double solve_n_star(double x, double pv, const market_params& market,
                           const fee_schedule& schedule, double n_max = 1e9) {
    market.validate();
    if (!(x > 0.0)) throw input_error("solve_n_star: x must be positive");
    if (!(pv > 0.0)) throw input_error("solve_n_star: account value must be positive");
    const auto& p = schedule.fitted_or_throw();
    if (p.delta >= 1.0)
        throw numeric_error("solve_n_star: unsupported regime delta >= 1 (the optimum "
                            "does not depend on N under proportional fees)");
    if (!(p.c > 0.0)) throw numeric_error("solve_n_star: needs a positive fee coefficient");
    const double a = market.risk_premium();
    if (!(a > 0.0))
        throw numeric_error("solve_n_star: risk premium must be positive");
    const double b = market.mean_beta * market.mean_beta * market.market_variance;
    const double v = market.mean_idio_variance;
    const double r = market.risk_free;
    const double rhs = a * std::pow(x * pv, 1.0 - p.delta) /
                       ((1.0 - p.delta) * p.c * (1.0 + r));
    const double slope_term = 2.0 + p.delta / (1.0 - p.delta);
    auto residual = [&](double n) {
        return std::log(std::pow(n, 2.0 - p.delta) * (2.0 * b / v + slope_term / n)) -
               std::log(rhs);
    };
    if (residual(1.0) > 0.0)
        throw numeric_error("solve_n_star: no root with N >= 1 (fees dominate)");
    const double hi = expand_bracket_up(residual, 1.0, 2.0, n_max);
    return bisect_root(residual, 1.0, hi, 1e-12);
}

// High-diversification closed form consistent with solve_n_star's algebra:
// N = (K_inf/4 * A / ((1-delta) C (1+r)))^(1/(2-delta)) (x P_v)^((1-delta)/(2-delta)),
// K_inf = 2 V / B being the large-N residual-to-market risk ratio.
inline double n_star_asymptotic(double x, double pv, const market_params& market,
                                const power_law_fee& p) {
    market.validate();
    if (p.delta >= 1.0)
        throw numeric_error("n_star_asymptotic: unsupported regime delta >= 1");
    if (!(p.c > 0.0) || !(x > 0.0) || !(pv > 0.0))
        throw input_error("n_star_asymptotic: invalid inputs");
    const double a = market.risk_premium();
    if (!(a > 0.0)) throw numeric_error("n_star_asymptotic: risk premium must be positive");
    const double b = market.mean_beta * market.mean_beta * market.market_variance;
    const double v = market.mean_idio_variance;
    const double k_quarter = 0.5 * v / b;  // K_inf / 4
    const double coef = k_quarter * a / ((1.0 - p.delta) * p.c * (1.0 + market.risk_free));
    return std::pow(coef, 1.0 / (2.0 - p.delta)) *
           std::pow(x * pv, (1.0 - p.delta) / (2.0 - p.delta));
}

// Risk tolerance implied by an (x, N) stationary pair.
inline double lambda_from_n(double x, double n_assets, double pv,
                            const market_params& market, const power_law_fee& p) {
    if (p.delta >= 1.0) throw numeric_error("lambda_from_n: delta must be < 1");
    return market.mean_idio_variance * std::pow(pv, 1.0 - p.delta) /
           ((1.0 - p.delta) * p.c * (1.0 + market.risk_free) *
            std::pow(n_assets / x, 2.0 - p.delta));
}

struct optimal_allocation {
    double x_star = 0.0;
    double n_star_raw = 0.0;   // real-valued solution
    long n_star = 0;           // nearest integer, objective-checked
    double k_ratio = 0.0;      // Eq.-style residual-to-market risk ratio
    double objective_value = 0.0;
    double lambda = 0.0;
    bool x_boundary = false;
};

// --------------------------------------------------------------------------
// Exponent algebra: alpha = (1-delta)/(2-delta) links log N to log T_phi,
// beta = 1/(2-delta) links log T to log P_v, delta_eff = 2 - 1/beta.

struct exponent_pair {
    double alpha = 0.0;
    double beta = 0.0;
};

inline exponent_pair exponents(double delta) {
    if (delta < 0.0 || delta > 1.0)
        throw input_error("exponents: delta must lie in [0, 1]");
    return {(1.0 - delta) / (2.0 - delta), 1.0 / (2.0 - delta)};
}

inline double delta_eff(double beta) {
    if (!(beta > 0.5 && beta <= 1.0))
        throw input_error("delta_eff: beta must lie in (1/2, 1] "
                          "(flat-fee or sub-flat regime otherwise)");
    return 2.0 - 1.0 / beta;
}

// --------------------------------------------------------------------------
// Sharpe one-factor estimation: R_i - r regressed through the origin on
// R_M - r per asset; idiosyncratic variance from the residuals.

struct sharpe_estimate {
    std::vector<double> betas;
    std::vector<double> idio_variances;
    std::vector<std::size_t> skipped;  // asset indices with too few points
    double mean_beta = 0.0;
    double mean_idio_variance = 0.0;
};

inline sharpe_estimate estimate_sharpe(std::span<const std::vector<double>> asset_returns,
                                       std::span<const double> market_returns,
                                       double risk_free,
                                       std::size_t min_observations = 30) {
    sharpe_estimate out;
    for (std::size_t a = 0; a < asset_returns.size(); ++a) {
        const auto& ret = asset_returns[a];
        std::vector<double> xs, ys;
        const std::size_t m = std::min(ret.size(), market_returns.size());
        for (std::size_t i = 0; i < m; ++i) {
            if (std::isnan(ret[i]) || std::isnan(market_returns[i])) continue;
            xs.push_back(market_returns[i] - risk_free);
            ys.push_back(ret[i] - risk_free);
        }
        if (xs.size() < min_observations) {
            out.skipped.push_back(a);
            continue;
        }
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        if (!(sxx > 0.0)) {
            out.skipped.push_back(a);
            continue;
        }
        const double beta = sxy / sxx;
        double sse = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double e = ys[i] - beta * xs[i];
            sse += e * e;
        }
        out.betas.push_back(beta);
        out.idio_variances.push_back(sse / static_cast<double>(xs.size() - 1));
    }
    if (out.betas.empty())
        throw numeric_error("estimate_sharpe: no asset had enough observations");
    for (double b : out.betas) out.mean_beta += b;
    out.mean_beta /= static_cast<double>(out.betas.size());
    for (double v : out.idio_variances) out.mean_idio_variance += v;
    out.mean_idio_variance /= static_cast<double>(out.idio_variances.size());
    return out;
}

}  // namespace costfolio
