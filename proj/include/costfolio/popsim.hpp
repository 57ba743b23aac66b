#pragma once

// Synthetic populations of cost-aware portfolio builders. Two generation
// modes: "optimizer" derives each trader's asset count from the
// high-diversification optimum and emits N equal one-shot buys;
// "turnover-law" draws a single transaction directly from the
// turnover-wealth law (needed for regimes, like beta = 1, that the
// optimizer route cannot reach). Both emit the exact ingestion CSV schema;
// the validation loop re-derives the exponents from the emitted files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/csv.hpp"
#include "costfolio/optimizer.hpp"
#include "costfolio/parallel.hpp"
#include "costfolio/qtheory.hpp"
#include "costfolio/regress.hpp"
#include "costfolio/rng.hpp"
#include "costfolio/tailfit.hpp"
#include "costfolio/trader_data.hpp"

namespace costfolio {

struct fee_regime {
    double c = 0.0;
    double delta = 0.0;
};

enum class generation_mode { optimizer, turnover_law };

struct population_config {
    double pv_mu = 0.0;
    double pv_sigma = 1.0;
    std::vector<fee_regime> fee_regimes;        // optimizer mode, 1 or 2
    std::optional<double> theta;                 // log-P_v regime boundary
    market_params market;
    double x = 1.0;                              // invested fraction
    double kappa_noise = 0.0;                    // sd of the per-trader zeta
    std::optional<turnover_wealth_model> tw_model;  // turnover-law mode
    generation_mode mode = generation_mode::optimizer;
    std::int64_t n_traders = 0;
    std::uint64_t seed = 1;
    client_category category = client_category::individual;
    // Validation regression controls.
    double loess_span = 0.3;
    int loess_robustness = 4;
    double tol_alpha = 0.01;
    double tol_beta = 0.01;
    double tol_chi = 0.02;
};

struct synthetic_trader {
    std::string trader_id;
    double pv = 0.0;
    double zeta = 0.0;
    long n_assets = 1;
    double turnover_each = 0.0;
    int regime = 0;
    bool n_floored = false;  // raw optimum fell below one asset
};

struct population {
    std::vector<synthetic_trader> traders;
    std::size_t n_floored = 0;
};

namespace detail {

inline void validate_population_config(const population_config& cfg) {
    if (cfg.n_traders < 1) throw input_error("population: n_traders must be >= 1");
    if (!(cfg.pv_sigma >= 0.0)) throw input_error("population: pv sigma must be >= 0");
    if (!(cfg.x > 0.0 && cfg.x <= 1.0))
        throw input_error("population: x must lie in (0, 1]");
    if (cfg.mode == generation_mode::optimizer) {
        if (cfg.fee_regimes.empty() || cfg.fee_regimes.size() > 2)
            throw input_error("population: need one or two fee regimes");
        if (cfg.fee_regimes.size() == 2 && !cfg.theta)
            throw input_error("population: two fee regimes require a theta boundary");
        for (const auto& f : cfg.fee_regimes)
            if (!(f.c > 0.0) || f.delta < 0.0 || f.delta >= 1.0)
                throw input_error("population: fee regimes need c > 0 and delta in [0,1)");
        cfg.market.validate();
    } else {
        if (!cfg.tw_model || cfg.tw_model->regimes.empty())
            throw input_error("population: turnover-law mode needs a tw model");
        if (cfg.tw_model->regimes.size() == 2 && !cfg.tw_model->theta)
            throw input_error("population: two tw regimes require a theta boundary");
    }
}

inline std::string trader_label(std::int64_t index, int width) {
    std::string digits = std::to_string(index + 1);
    std::string out = "T";
    out.append(static_cast<std::size_t>(width) - std::min<std::size_t>(digits.size(), width),
               '0');
    out += digits;
    return out;
}

}  // namespace detail

inline population generate_population(const population_config& cfg) {
    detail::validate_population_config(cfg);
    const auto n = static_cast<std::size_t>(cfg.n_traders);
    const int width = static_cast<int>(std::to_string(cfg.n_traders).size());
    population pop;
    pop.traders.resize(n);
    parallel_for(n, [&](std::size_t i) {
        rng64 rng(derive_seed(cfg.seed, i));
        synthetic_trader& t = pop.traders[i];
        t.trader_id = detail::trader_label(static_cast<std::int64_t>(i), width);
        const double z_pv = norm_quantile(rng.uniform01());
        t.pv = std::exp(cfg.pv_mu + cfg.pv_sigma * z_pv);
        const double log_pv = std::log(t.pv);
        const double z_noise = norm_quantile(rng.uniform01());
        if (cfg.mode == generation_mode::optimizer) {
            t.regime = (cfg.fee_regimes.size() == 2 && log_pv >= *cfg.theta) ? 1 : 0;
            const auto& f = cfg.fee_regimes[static_cast<std::size_t>(t.regime)];
            t.zeta = cfg.kappa_noise * z_noise;
            const double n_raw =
                n_star_asymptotic(cfg.x, t.pv, cfg.market,
                                  power_law_fee{f.c, f.delta,
                                                std::numeric_limits<double>::infinity()}) *
                std::exp(t.zeta);
            if (n_raw < 1.0) {
                t.n_assets = 1;
                t.n_floored = true;
            } else {
                t.n_assets = std::max<long>(1, std::lround(n_raw));
            }
            t.turnover_each = cfg.x * t.pv / static_cast<double>(t.n_assets);
        } else {
            const auto& m = *cfg.tw_model;
            t.regime = (m.regimes.size() == 2 && log_pv >= *m.theta) ? 1 : 0;
            const auto& r = m.regimes[static_cast<std::size_t>(t.regime)];
            t.zeta = r.xi * z_noise;
            t.n_assets = 1;
            t.turnover_each = std::exp(r.a + t.zeta) * std::pow(t.pv, r.beta);
        }
    });
    for (const auto& t : pop.traders)
        if (t.n_floored) ++pop.n_floored;
    return pop;
}

// CSV emission in the exact ingestion schema. All traders buy at one
// instant; the snapshot is dated the previous day so the strict-precedence
// account-value rule resolves it.
inline constexpr const char* kSimTimestamp = "2024-01-02T14:30:00Z";
inline constexpr const char* kSimSnapshotDate = "2024-01-01";

inline void write_transactions_csv(const population& pop, const population_config& cfg,
                                   std::ostream& out) {
    out << kTransactionsHeader << '\n';
    const char* cat = to_string(cfg.category);
    for (const auto& t : pop.traders) {
        const std::string turnover = format_double(t.turnover_each);
        for (long k = 0; k < t.n_assets; ++k) {
            out << t.trader_id << ',' << cat << ',' << kSimTimestamp << ",A"
                << std::to_string(k + 1) << ",stock,buy," << turnover << ",1\n";
        }
    }
}

inline void write_snapshots_csv(const population& pop, std::ostream& out) {
    out << kSnapshotsHeader << '\n';
    for (const auto& t : pop.traders)
        out << t.trader_id << ',' << kSimSnapshotDate << ','
            << format_double(t.pv) << '\n';
}

// --------------------------------------------------------------------------
// Closed-loop validation: emit CSVs, re-ingest them, regress, and compare
// the recovered exponents with the configured fee structure.

struct exponent_check {
    std::string name;
    double estimate = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double theory = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct validation_report {
    std::vector<exponent_check> alpha;  // per regime
    std::vector<exponent_check> beta;   // per regime
    std::vector<double> delta_eff_hat;  // from the recovered beta
    exponent_check chi;
    bool single_regime_detected = false;
    double theta1 = 0.0, theta2 = 0.0;
    std::size_t n_traders = 0;
    std::size_t n_transactions = 0;
    std::size_t n_floored = 0;
    bool pass = false;
};

namespace detail {

inline exponent_check make_check(std::string name, const ols_fit& fit, double theory,
                                 double base_tol) {
    exponent_check c;
    c.name = std::move(name);
    c.estimate = fit.slope;
    c.ci_lower = fit.slope_ci.lower;
    c.ci_upper = fit.slope_ci.upper;
    c.theory = theory;
    c.tolerance = base_tol + 3.0 * fit.slope_se;
    c.pass = std::fabs(fit.slope - theory) <= c.tolerance;
    return c;
}

}  // namespace detail

inline validation_report run_validation(const population_config& cfg) {
    if (cfg.mode != generation_mode::optimizer)
        throw input_error("run_validation: optimizer generation mode required");
    if (cfg.n_traders < 2000)
        throw input_error("run_validation: need at least 2000 traders for stable CIs");
    const population pop = generate_population(cfg);

    // Round-trip through the ingestion format.
    std::stringstream tx_csv, snap_csv;
    write_transactions_csv(pop, cfg, tx_csv);
    write_snapshots_csv(pop, snap_csv);
    const auto txs = parse_transactions(tx_csv);
    const auto snaps = parse_snapshots(snap_csv);
    const snapshot_index index(snaps);
    const auto aggregates = aggregate_population(txs, index);

    validation_report rep;
    rep.n_traders = aggregates.traders.size();
    rep.n_transactions = txs.size();
    rep.n_floored = pop.n_floored;

    std::vector<double> log_pv, log_t, log_tphi, log_n, log_pv_phi;
    for (const auto& a : aggregates.traders) {
        log_pv.push_back(a.mean_log_pv);
        log_t.push_back(a.mean_log_turnover);
        log_tphi.push_back(std::log(a.phi_turnover));
        log_n.push_back(std::log(static_cast<double>(a.n_assets)));
        log_pv_phi.push_back(std::log(a.mean_pv_phi));
    }

    const bool two_regime = cfg.fee_regimes.size() == 2;
    const auto lo_fit = loess(log_pv, log_t, cfg.loess_span, cfg.loess_robustness);
    const auto th = detect_thresholds(lo_fit);
    rep.single_regime_detected = th.single_regime;
    rep.theta1 = th.theta1;
    rep.theta2 = th.theta2;

    auto theory_of = [&](int regime) {
        return exponents(cfg.fee_regimes[static_cast<std::size_t>(regime)].delta);
    };

    if (two_regime && !th.single_regime) {
        const auto seg = fit_double_linear(log_pv, log_t, th.theta1, th.theta2);
        std::vector<double> tphi_lo, n_lo, tphi_hi, n_hi;
        for (std::size_t i = 0; i < log_pv.size(); ++i) {
            if (log_pv[i] < th.theta1) {
                tphi_lo.push_back(log_tphi[i]);
                n_lo.push_back(log_n[i]);
            } else if (log_pv[i] > th.theta2) {
                tphi_hi.push_back(log_tphi[i]);
                n_hi.push_back(log_n[i]);
            }
        }
        const auto alpha_lo = ols(tphi_lo, n_lo, false);
        const auto alpha_hi = ols(tphi_hi, n_hi, false);
        ols_fit beta_lo_fit;
        beta_lo_fit.slope = seg.lower.beta;
        beta_lo_fit.slope_ci = seg.lower.beta_ci;
        beta_lo_fit.slope_se = 0.5 * (seg.lower.beta_ci.upper - seg.lower.beta_ci.lower) / 1.96;
        ols_fit beta_hi_fit;
        beta_hi_fit.slope = seg.upper.beta;
        beta_hi_fit.slope_ci = seg.upper.beta_ci;
        beta_hi_fit.slope_se = 0.5 * (seg.upper.beta_ci.upper - seg.upper.beta_ci.lower) / 1.96;
        rep.alpha.push_back(detail::make_check("alpha[1]", alpha_lo,
                                               theory_of(0).alpha, cfg.tol_alpha));
        rep.alpha.push_back(detail::make_check("alpha[2]", alpha_hi,
                                               theory_of(1).alpha, cfg.tol_alpha));
        rep.beta.push_back(detail::make_check("beta[1]", beta_lo_fit, theory_of(0).beta,
                                              cfg.tol_beta));
        rep.beta.push_back(detail::make_check("beta[2]", beta_hi_fit, theory_of(1).beta,
                                              cfg.tol_beta));
        rep.delta_eff_hat.push_back(delta_eff(std::min(seg.lower.beta, 1.0)));
        rep.delta_eff_hat.push_back(delta_eff(std::min(seg.upper.beta, 1.0)));
    } else {
        const auto beta_fit = ols(log_pv, log_t, false);
        const auto alpha_fit = ols(log_tphi, log_n, false);
        rep.alpha.push_back(detail::make_check("alpha", alpha_fit, theory_of(0).alpha,
                                               cfg.tol_alpha));
        rep.beta.push_back(detail::make_check("beta", beta_fit, theory_of(0).beta,
                                              cfg.tol_beta));
        if (beta_fit.slope > 0.5 && beta_fit.slope <= 1.0)
            rep.delta_eff_hat.push_back(delta_eff(beta_fit.slope));
    }

    const auto chi_fit = ols(log_tphi, log_pv_phi, true);
    rep.chi = detail::make_check("chi", chi_fit, 1.0, cfg.tol_chi);

    rep.pass = rep.chi.pass;
    for (const auto& c : rep.alpha) rep.pass = rep.pass && c.pass;
    for (const auto& c : rep.beta) rep.pass = rep.pass && c.pass;
    return rep;
}

// --------------------------------------------------------------------------
// Q-law validation: empirical per-trader Q against the model-implied CDF.

struct q_validation_report {
    double ks = 0.0;
    double critical_5pct = 0.0;
    bool pass = false;
    std::size_t n = 0;
    double fraction_q_above_one = 0.0;
};

// Turnover-wealth law implied by an optimizer-mode config.
inline turnover_wealth_model implied_tw_model(const population_config& cfg) {
    if (cfg.mode == generation_mode::turnover_law) {
        if (!cfg.tw_model) throw input_error("implied_tw_model: tw model missing");
        return *cfg.tw_model;
    }
    if (!(cfg.kappa_noise > 0.0))
        throw input_error("implied_tw_model: optimizer mode needs kappa_noise > 0 for a "
                          "non-degenerate Q law");
    turnover_wealth_model model;
    for (const auto& f : cfg.fee_regimes) {
        const auto exps = exponents(f.delta);
        // log N = alpha log(x P_v) + log kappa_prefactor + zeta, hence
        // log T = beta log P_v + (beta log x - log prefactor) - zeta.
        const double log_prefactor =
            std::log(n_star_asymptotic(cfg.x, 1.0, cfg.market,
                                       power_law_fee{f.c, f.delta,
                                                     std::numeric_limits<double>::infinity()})) -
            exps.alpha * std::log(cfg.x);
        tw_regime r;
        r.beta = exps.beta;
        r.a = exps.beta * std::log(cfg.x) - log_prefactor;
        r.xi = cfg.kappa_noise;
        model.regimes.push_back(r);
    }
    if (cfg.fee_regimes.size() == 2) model.theta = cfg.theta;
    return model;
}

inline q_validation_report validate_q(const population_config& cfg,
                                      std::optional<turnover_wealth_model> theory = {}) {
    const population pop = generate_population(cfg);
    std::vector<double> q;
    q.reserve(pop.traders.size());
    for (const auto& t : pop.traders) q.push_back(t.turnover_each / t.pv);

    const turnover_wealth_model model = theory ? *theory : implied_tw_model(cfg);
    const lognormal_dist pv{cfg.pv_mu, cfg.pv_sigma};

    q_validation_report rep;
    rep.n = q.size();
    rep.fraction_q_above_one = fraction_above(q, 1.0);
    std::sort(q.begin(), q.end());
    const double n = static_cast<double>(q.size());
    const bool two = model.regimes.size() == 2;
    lognormal_dist closed{0.0, 1.0};
    if (!two) {
        const q_model qm = closed_form_q(model, pv.mu, pv.sigma);
        closed = qm.to_dist();
    }
    double d = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double f = two ? bilinear_q_cdf(q[i], model, pv) : closed.cdf(q[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    rep.ks = d;
    rep.critical_5pct = 1.358 / std::sqrt(n);
    rep.pass = rep.ks < rep.critical_5pct;
    return rep;
}

}  // namespace costfolio
