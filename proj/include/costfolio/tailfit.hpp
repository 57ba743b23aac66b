#pragma once

// Maximum-likelihood fitting and BCa bootstrap inference for the heavy-tail
// families: Pareto tail with KS-selected x_min, log-normal, Weibull, folded
// Student, and Zipf-Mandelbrot with or without exponential cutoff.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/distributions.hpp"
#include "costfolio/parallel.hpp"
#include "costfolio/rng.hpp"
#include "costfolio/solvers.hpp"
#include "costfolio/special.hpp"

namespace costfolio {

struct interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct bootstrap_ci {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    int replicates = 0;
    std::string method = "BCa";
};

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov distance at the data points.

template <typename Dist>
double ks_statistic(std::span<const double> data, const Dist& model) {
    if (data.empty()) throw input_error("ks_statistic: empty data");
    std::vector<double> s(data.begin(), data.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = model.cdf(s[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

inline double ks_statistic(std::span<const double> data, const any_dist& model) {
    return std::visit([&](const auto& m) { return ks_statistic(data, m); }, model);
}

// ---------------------------------------------------------------------------
// BCa confidence intervals.

namespace detail {

inline double sorted_quantile(const std::vector<double>& s, double q) {
    if (s.empty()) throw numeric_error("quantile of empty sample");
    if (q <= 0.0) return s.front();
    if (q >= 1.0) return s.back();
    const double h = q * (static_cast<double>(s.size()) - 1.0);
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= s.size()) return s.back();
    const double w = h - static_cast<double>(i);
    return s[i] * (1.0 - w) + s[i + 1] * w;
}

inline double jackknife_acceleration(const std::vector<double>& jack) {
    if (jack.size() < 3) return 0.0;
    const double mean = std::accumulate(jack.begin(), jack.end(), 0.0) /
                        static_cast<double>(jack.size());
    double s2 = 0.0, s3 = 0.0;
    for (double v : jack) {
        const double d = mean - v;
        s2 += d * d;
        s3 += d * d * d;
    }
    if (s2 <= 0.0) return 0.0;
    return s3 / (6.0 * std::pow(s2, 1.5));
}

inline bootstrap_ci bca_from_replicates(double point, std::vector<double> reps,
                                        const std::vector<double>& jack,
                                        double level) {
    bootstrap_ci ci;
    ci.level = level;
    ci.replicates = static_cast<int>(reps.size());
    if (reps.empty()) {
        ci.lower = ci.upper = point;
        return ci;
    }
    std::sort(reps.begin(), reps.end());
    const double b = static_cast<double>(reps.size());
    double below = 0.0;
    for (double v : reps)
        if (v < point) below += 1.0;
    below = std::min(std::max(below, 0.5), b - 0.5);
    const double z0 = norm_quantile(below / b);
    const double a = jackknife_acceleration(jack);
    const double alpha = 0.5 * (1.0 - level);
    auto adjusted = [&](double z_alpha) {
        const double t = z0 + z_alpha;
        return norm_cdf(z0 + t / (1.0 - a * t));
    };
    ci.lower = sorted_quantile(reps, adjusted(norm_quantile(alpha)));
    ci.upper = sorted_quantile(reps, adjusted(norm_quantile(1.0 - alpha)));
    // Keep the point estimate inside the interval.
    ci.lower = std::min(ci.lower, point);
    ci.upper = std::max(ci.upper, point);
    return ci;
}

// Jackknife estimates: exact leave-one-out for small n, contiguous
// original-order blocks otherwise.
inline std::vector<double> jackknife_values(
    const std::function<double(std::span<const double>)>& estimator,
    std::span<const double> data, std::size_t max_exact, std::size_t groups) {
    const std::size_t n = data.size();
    const std::size_t g = (n <= max_exact) ? n : std::min(groups, n);
    std::vector<double> jack;
    jack.reserve(g);
    std::vector<double> scratch;
    scratch.reserve(n);
    for (std::size_t k = 0; k < g; ++k) {
        const std::size_t lo = n * k / g, hi = n * (k + 1) / g;
        scratch.clear();
        scratch.insert(scratch.end(), data.begin(), data.begin() + lo);
        scratch.insert(scratch.end(), data.begin() + hi, data.end());
        try {
            jack.push_back(estimator(scratch));
        } catch (const std::exception&) {
            // A failed leave-out estimate carries no skewness information.
        }
    }
    return jack;
}

}  // namespace detail

// Bias-corrected accelerated bootstrap interval for a scalar estimator.
// Replicate r draws from an RNG seeded by (seed, r), so serial and parallel
// runs produce bit-identical intervals.
inline bootstrap_ci bca_bootstrap(
    const std::function<double(std::span<const double>)>& estimator,
    std::span<const double> data, int B, std::uint64_t seed, double level = 0.95,
    std::size_t max_exact_jackknife = 1000, std::size_t jackknife_groups = 200) {
    if (B < 200) throw input_error("bca_bootstrap: B must be at least 200");
    if (data.empty()) throw input_error("bca_bootstrap: empty data");
    const std::size_t n = data.size();
    const double point = estimator(data);

    std::vector<double> reps(static_cast<std::size_t>(B));
    std::vector<char> ok(static_cast<std::size_t>(B), 0);
    parallel_for(static_cast<std::size_t>(B), [&](std::size_t r) {
        rng64 rng(derive_seed(seed, r));
        std::vector<double> resample(n);
        for (std::size_t i = 0; i < n; ++i)
            resample[i] = data[rng.below(n)];
        try {
            reps[r] = estimator(resample);
            ok[r] = 1;
        } catch (const std::exception&) {
            ok[r] = 0;
        }
    });

    std::vector<double> valid;
    valid.reserve(reps.size());
    for (std::size_t r = 0; r < reps.size(); ++r)
        if (ok[r]) valid.push_back(reps[r]);
    const std::size_t failures = reps.size() - valid.size();
    if (failures * 100 > reps.size())
        throw numeric_error("bca_bootstrap: estimator failed on " +
                            std::to_string(failures) + " of " +
                            std::to_string(reps.size()) + " resamples");

    const auto jack = detail::jackknife_values(estimator, data, max_exact_jackknife,
                                               jackknife_groups);
    return detail::bca_from_replicates(point, std::move(valid), jack, level);
}

// ---------------------------------------------------------------------------
// Log-normal fit (closed-form MLE).

struct lognormal_fit {
    double mu = 0.0;
    double sigma = 0.0;
    interval ci_mu, ci_sigma;  // normal-theory 95% intervals
    std::size_t n = 0;

    lognormal_dist to_dist() const { return {mu, sigma}; }
};

inline lognormal_fit fit_lognormal(std::span<const double> data) {
    if (data.size() < 10) throw numeric_error("fit_lognormal: need at least 10 points");
    double sum = 0.0;
    for (double x : data) {
        if (!(x > 0.0)) throw numeric_error("fit_lognormal: non-positive datum");
        sum += std::log(x);
    }
    const double n = static_cast<double>(data.size());
    const double mu = sum / n;
    double ss = 0.0;
    for (double x : data) {
        const double d = std::log(x) - mu;
        ss += d * d;
    }
    const double sigma = std::sqrt(ss / n);
    if (!(sigma > 0.0))
        throw numeric_error("fit_lognormal: degenerate data (zero log-variance)");
    lognormal_fit fit;
    fit.mu = mu;
    fit.sigma = sigma;
    fit.n = data.size();
    const double z = norm_quantile(0.975);
    fit.ci_mu = {mu - z * sigma / std::sqrt(n), mu + z * sigma / std::sqrt(n)};
    fit.ci_sigma = {sigma - z * sigma / std::sqrt(2.0 * n),
                    sigma + z * sigma / std::sqrt(2.0 * n)};
    return fit;
}

// ---------------------------------------------------------------------------
// Weibull fit: profile likelihood in the shape, closed-form scale.

struct weibull_fit {
    double shape = 0.0;
    double scale = 0.0;
    std::size_t n = 0;

    weibull_dist to_dist() const { return {shape, scale}; }
};

inline weibull_fit fit_weibull(std::span<const double> data) {
    if (data.size() < 10) throw numeric_error("fit_weibull: need at least 10 points");
    double x_max = 0.0;
    for (double x : data) {
        if (!(x > 0.0)) throw numeric_error("fit_weibull: non-positive datum");
        x_max = std::max(x_max, x);
    }
    const double n = static_cast<double>(data.size());
    // Work on t = x / x_max so t^k never overflows.
    std::vector<double> lt(data.size());
    double mean_lt = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        lt[i] = std::log(data[i] / x_max);
        mean_lt += lt[i];
    }
    mean_lt /= n;
    if (std::all_of(lt.begin(), lt.end(), [&](double v) { return v == lt[0]; }))
        throw numeric_error("fit_weibull: degenerate data");

    auto profile = [&](double k) {
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double tk = std::exp(k * lt[i]);
            a += tk * lt[i];
            b += tk;
        }
        return a / b - 1.0 / k - mean_lt;
    };
    double lo = 1e-3;
    while (profile(lo) > 0.0 && lo > 1e-10) lo *= 0.5;
    double hi = expand_bracket_up(profile, lo, 1.0, 1e6);
    const double shape = bisect_root(profile, lo, hi, 1e-15);

    double b = 0.0;
    for (double v : lt) b += std::exp(shape * v);
    const double scale = x_max * std::pow(b / n, 1.0 / shape);

    // MLE verification: gradient of the mean log-likelihood.
    double g_shape = 0.0, g_scale = 0.0;
    for (double x : data) {
        const double t = x / scale, ltx = std::log(t), tk = std::pow(t, shape);
        g_shape += 1.0 / shape + ltx - tk * ltx;
        g_scale += (shape / scale) * (tk - 1.0);
    }
    if (std::fabs(g_shape / n) > 1e-8 || std::fabs(g_scale / n) > 1e-8)
        throw numeric_error("fit_weibull: likelihood maximization did not converge");

    return {shape, scale, data.size()};
}

// ---------------------------------------------------------------------------
// Folded Student fit on positive magnitudes.

struct student_fit {
    double dof = 0.0;
    double scale = 0.0;
    std::size_t n = 0;

    folded_student_dist to_dist() const { return {dof, scale}; }
};

inline student_fit fit_student(std::span<const double> data) {
    if (data.size() < 10) throw numeric_error("fit_student: need at least 10 points");
    std::vector<double> s(data.begin(), data.end());
    for (double x : s)
        if (!(x > 0.0)) throw numeric_error("fit_student: non-positive datum");
    std::sort(s.begin(), s.end());
    const double median = s[s.size() / 2];
    if (!(s.front() < s.back()))
        throw numeric_error("fit_student: degenerate data");
    const double n = static_cast<double>(s.size());

    auto fg = [&](const std::vector<double>& theta, std::vector<double>& grad) {
        const double nu = std::exp(theta[0]), sc = std::exp(theta[1]);
        double ll = 0.0, g_nu = 0.0, g_sc = 0.0;
        const double base = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                            0.5 * std::log(nu * 3.14159265358979323846) +
                            std::log(2.0) - std::log(sc);
        const double dig = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) -
                           0.5 / nu;
        for (double x : s) {
            const double u = x / sc, r = u * u / nu, l1 = std::log1p(r);
            ll += base - 0.5 * (nu + 1.0) * l1;
            const double frac = r / (1.0 + r);
            g_nu += dig - 0.5 * l1 + 0.5 * (nu + 1.0) * frac / nu;
            g_sc += (-1.0 + (nu + 1.0) * frac) / sc;
        }
        grad[0] = nu * g_nu / n;
        grad[1] = sc * g_sc / n;
        return ll / n;
    };

    bfgs_result best;
    bool have = false;
    for (double nu0 : {2.0, 5.0, 30.0}) {
        const double s0 = median / 0.75;
        auto r = bfgs_maximize(fg, {std::log(nu0), std::log(s0)}, 1e-8, 500);
        if (r.converged && (!have || r.value > best.value)) {
            best = r;
            have = true;
        }
    }
    if (!have)
        throw numeric_error("fit_student: likelihood maximization did not converge");
    return {std::exp(best.x[0]), std::exp(best.x[1]), data.size()};
}

// ---------------------------------------------------------------------------
// Zipf-Mandelbrot fit, with or without exponential cutoff.

struct zm_fit_options {
    int bootstrap_replicates = 1999;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::size_t min_points = 100;
    std::size_t jackknife_groups = 200;
    bool with_ci = true;
};

struct zipf_mandelbrot_fit {
    double c = 0.0;
    double gamma = 0.0;
    double beta_cut = 0.0;
    bool cutoff = false;
    bool clamped_boundary = false;  // cutoff rate driven to zero
    bootstrap_ci ci_c, ci_gamma, ci_beta;
    double ks = 0.0;
    std::size_t n = 0;

    zipf_mandelbrot_dist to_dist() const { return {c, gamma, beta_cut}; }
};

namespace detail {

struct zm_point {
    double c, gamma, beta;
    bool converged;
    double grad_norm;
};

// Mean log-likelihood and gradient in (ln c, ln gamma[, ln beta]).
inline double zm_loglik(std::span<const double> data, const std::vector<double>& theta,
                        std::vector<double>& grad, bool with_cutoff) {
    const double c = std::exp(theta[0]), gamma = std::exp(theta[1]);
    const double beta = with_cutoff ? std::exp(theta[2]) : 0.0;
    const double lc = std::log(c);
    double ll = 0.0, gc = 0.0, gg = 0.0, gb = 0.0;
    for (double x : data) {
        const double cx = c + x, lcx = std::log(cx), w = 1.0 / cx;
        const double dens = beta + gamma * w;
        ll += gamma * (lc - lcx) - beta * x + std::log(dens);
        gg += lc - lcx + w / dens;
        gc += gamma / c - gamma * w - gamma * w * w / dens;
        if (with_cutoff) gb += -x + 1.0 / dens;
    }
    const double n = static_cast<double>(data.size());
    grad[0] = c * gc / n;
    grad[1] = gamma * gg / n;
    if (with_cutoff) grad[2] = beta * gb / n;
    return ll / n;
}

inline zm_point zm_fit_once(std::span<const double> data, double c0, double g0,
                            double b0, bool with_cutoff, double grad_tol = 1e-8) {
    auto fg = [&](const std::vector<double>& th, std::vector<double>& gr) {
        return zm_loglik(data, th, gr, with_cutoff);
    };
    std::vector<double> start{std::log(c0), std::log(g0)};
    if (with_cutoff) start.push_back(std::log(b0));
    // Coarse quasi-Newton phase; Newton with a finite-difference Hessian of
    // the analytic gradient finishes to the target tolerance.
    auto r = bfgs_maximize(fg, start, 1e-4, 200);
    r = newton_polish_maximize(fg, r.x, grad_tol, 40);
    zm_point p;
    p.c = std::exp(r.x[0]);
    p.gamma = std::exp(r.x[1]);
    p.beta = with_cutoff ? std::exp(r.x[2]) : 0.0;
    p.converged = r.converged;
    p.grad_norm = r.grad_norm;
    return p;
}

inline zm_point zm_fit_multistart(std::span<const double> data, bool with_cutoff,
                                  double median, double vmax) {
    zm_point best{};
    best.converged = false;
    double best_ll = -1e300;
    // Pure fit first: deterministic quantile-based starts.
    zm_point pure{};
    bool have_pure = false;
    double pure_ll = -1e300;
    for (double g0 : {1.2, 2.0, 3.5}) {
        const double c0 = std::max(median / (std::pow(2.0, 1.0 / g0) - 1.0), 1e-12);
        auto p = zm_fit_once(data, c0, g0, 0.0, false);
        if (!p.converged) continue;
        std::vector<double> gr(2);
        const double ll = zm_loglik(data, {std::log(p.c), std::log(p.gamma)}, gr, false);
        if (!have_pure || ll > pure_ll) {
            pure = p;
            pure_ll = ll;
            have_pure = true;
        }
    }
    if (!with_cutoff) {
        if (!have_pure)
            throw numeric_error("fit_zipf_mandelbrot: no start converged (pure form)");
        return pure;
    }
    // Cutoff family: three starts seeded from the pure solution.
    const double c_start = have_pure ? pure.c : median;
    const double g_start = have_pure ? pure.gamma : 2.0;
    for (double b0 : {1e-3 / median, 0.1 / median, 2.0 / vmax}) {
        auto p = zm_fit_once(data, c_start, g_start, b0, true);
        if (!p.converged) continue;
        std::vector<double> gr(3);
        const double ll = zm_loglik(
            data, {std::log(p.c), std::log(p.gamma), std::log(std::max(p.beta, 1e-300))},
            gr, true);
        if (ll > best_ll) {
            best = p;
            best_ll = ll;
        }
    }
    if (!best.converged)
        throw numeric_error("fit_zipf_mandelbrot: no start converged (cutoff form)");
    return best;
}

}  // namespace detail

inline zipf_mandelbrot_fit fit_zipf_mandelbrot(std::span<const double> data,
                                               bool with_cutoff,
                                               const zm_fit_options& opts = {}) {
    if (data.size() < opts.min_points)
        throw numeric_error("fit_zipf_mandelbrot: need at least " +
                            std::to_string(opts.min_points) + " points");
    std::vector<double> s(data.begin(), data.end());
    for (double x : s)
        if (!(x > 0.0)) throw numeric_error("fit_zipf_mandelbrot: non-positive datum");
    std::sort(s.begin(), s.end());
    const double median = s[s.size() / 2], vmax = s.back();

    auto point = detail::zm_fit_multistart(data, with_cutoff, median, vmax);

    zipf_mandelbrot_fit fit;
    fit.cutoff = with_cutoff;
    fit.c = point.c;
    fit.gamma = point.gamma;
    fit.beta_cut = with_cutoff ? point.beta : 0.0;
    fit.n = data.size();
    // Cutoff rate driven to the beta = 0 boundary: report the pure fit.
    if (with_cutoff && fit.beta_cut * median < 1e-10) {
        auto pure = detail::zm_fit_multistart(data, false, median, vmax);
        fit.c = pure.c;
        fit.gamma = pure.gamma;
        fit.beta_cut = 0.0;
        fit.clamped_boundary = true;
    }
    fit.ks = ks_statistic(data, fit.to_dist());

    if (opts.with_ci) {
        const std::size_t n = data.size();
        const int B = opts.bootstrap_replicates;
        if (B < 200) throw input_error("fit_zipf_mandelbrot: B must be at least 200");
        // Warm-started replicate refits sharing one resample stream.
        std::vector<double> rep_c(B), rep_g(B), rep_b(B);
        std::vector<char> ok(B, 0);
        const double wc = fit.c, wg = fit.gamma;
        const double wb = with_cutoff ? std::max(fit.beta_cut, 1e-4 / median) : 0.0;
        parallel_for(static_cast<std::size_t>(B), [&](std::size_t r) {
            rng64 rng(derive_seed(opts.seed, r));
            std::vector<double> resample(n);
            for (std::size_t i = 0; i < n; ++i) resample[i] = data[rng.below(n)];
            try {
                auto p = detail::zm_fit_once(resample, wc, wg, wb, with_cutoff, 1e-7);
                if (!p.converged) throw numeric_error("replicate not converged");
                rep_c[r] = p.c;
                rep_g[r] = p.gamma;
                rep_b[r] = p.beta;
                ok[r] = 1;
            } catch (const std::exception&) {
                ok[r] = 0;
            }
        });
        std::vector<double> vc, vg, vb;
        for (int r = 0; r < B; ++r)
            if (ok[r]) {
                vc.push_back(rep_c[r]);
                vg.push_back(rep_g[r]);
                vb.push_back(rep_b[r]);
            }
        const std::size_t failures = static_cast<std::size_t>(B) - vc.size();
        if (failures * 100 > static_cast<std::size_t>(B))
            throw numeric_error("fit_zipf_mandelbrot: bootstrap refit failed on " +
                                std::to_string(failures) + " of " +
                                std::to_string(B) + " resamples");

        // Grouped jackknife (original order blocks), warm-started.
        const std::size_t g = std::min(opts.jackknife_groups, n);
        std::vector<double> jc, jg, jb;
        std::vector<double> scratch;
        scratch.reserve(n);
        for (std::size_t k = 0; k < g; ++k) {
            const std::size_t lo = n * k / g, hi = n * (k + 1) / g;
            scratch.clear();
            scratch.insert(scratch.end(), data.begin(), data.begin() + lo);
            scratch.insert(scratch.end(), data.begin() + hi, data.end());
            try {
                auto p = detail::zm_fit_once(scratch, wc, wg, wb, with_cutoff, 1e-7);
                if (!p.converged) continue;
                jc.push_back(p.c);
                jg.push_back(p.gamma);
                jb.push_back(p.beta);
            } catch (const std::exception&) {
            }
        }
        fit.ci_c = detail::bca_from_replicates(fit.c, vc, jc, opts.level);
        fit.ci_gamma = detail::bca_from_replicates(fit.gamma, vg, jg, opts.level);
        fit.ci_beta = detail::bca_from_replicates(fit.beta_cut, vb, jb, opts.level);
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Pareto tail fit with x_min selected by minimum KS distance.

struct pareto_fit_options {
    std::size_t min_tail = 50;
    std::size_t max_candidates = 128;        // x_min grid for the point fit
    std::size_t replicate_candidates = 48;   // coarser grid inside resamples
    int bootstrap_replicates = 1999;
    std::uint64_t seed = 1;
    double level = 0.95;
    std::size_t jackknife_groups = 200;
    bool with_ci = true;
};

struct pareto_tail_fit {
    double gamma = 0.0;
    double x_min = 0.0;
    double ks_distance = 0.0;
    std::size_t n_tail = 0;
    bootstrap_ci ci_gamma, ci_xmin;
    std::size_t n = 0;

    pareto_dist to_dist() const { return {gamma, x_min}; }
};

namespace detail {

struct pareto_core {
    double gamma = 0.0, x_min = 0.0, ks = 1.0;
    std::size_t n_tail = 0;
    bool valid = false;
};

// Fit over weighted sorted values: `count[i]` copies of `values[i]`,
// values ascending, `logs[i] = log(values[i])`. Candidate x_min grid is
// log-spaced in tail size between min_tail and the full sample.
inline pareto_core pareto_core_fit(const std::vector<double>& values,
                                   const std::vector<double>& logs,
                                   const std::vector<std::uint32_t>& count,
                                   std::size_t min_tail, std::size_t max_candidates) {
    const std::size_t np = values.size();
    std::vector<double> suffix_log(np + 1, 0.0);
    std::vector<std::uint64_t> suffix_cnt(np + 1, 0);
    for (std::size_t i = np; i-- > 0;) {
        suffix_log[i] = suffix_log[i + 1] + logs[i] * count[i];
        suffix_cnt[i] = suffix_cnt[i + 1] + count[i];
    }
    const std::uint64_t total = suffix_cnt[0];
    if (total < min_tail) return {};

    // Candidate block starts: first position of each distinct value whose
    // tail keeps at least min_tail points, subsampled geometrically by
    // tail size. Ascending order makes ties break toward smaller x_min.
    std::vector<std::size_t> starts;
    starts.reserve(max_candidates + 1);
    const double ratio = static_cast<double>(total) / static_cast<double>(min_tail);
    for (std::size_t j = 0; j < max_candidates; ++j) {
        const double frac = (max_candidates == 1)
                                ? 1.0
                                : static_cast<double>(j) /
                                      static_cast<double>(max_candidates - 1);
        const auto target = static_cast<std::uint64_t>(
            static_cast<double>(min_tail) * std::pow(ratio, 1.0 - frac));
        // Smallest i with suffix_cnt[i] <= target, snapped to its block start.
        std::size_t lo = 0, hi = np;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (suffix_cnt[mid] <= target)
                hi = mid;
            else
                lo = mid + 1;
        }
        std::size_t i = lo;
        while (i < np && count[i] == 0) ++i;
        if (i >= np) continue;
        while (i > 0 && values[i - 1] == values[i]) --i;
        if (suffix_cnt[i] < min_tail) continue;
        starts.push_back(i);
    }
    std::sort(starts.begin(), starts.end());
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

    pareto_core best;
    for (std::size_t i : starts) {
        const std::uint64_t m = suffix_cnt[i];
        const double lxm = logs[i];
        const double logsum = suffix_log[i] - lxm * static_cast<double>(m);
        if (!(logsum > 1e-12)) continue;  // tail collapsed onto one value
        const double gamma = 1.0 + static_cast<double>(m) / logsum;
        const double one_minus_gamma = 1.0 - gamma;
        const double inv_m = 1.0 / static_cast<double>(m);
        double d = 0.0;
        std::uint64_t cum = 0;
        std::size_t j = i;
        while (j < np) {
            if (count[j] == 0) {
                ++j;
                continue;
            }
            std::uint64_t run = count[j];
            std::size_t k = j + 1;
            while (k < np && values[k] == values[j]) {
                run += count[k];
                ++k;
            }
            const double fm = 1.0 - std::exp(one_minus_gamma * (logs[j] - lxm));
            const double f_lo = static_cast<double>(cum) * inv_m;
            cum += run;
            const double f_hi = static_cast<double>(cum) * inv_m;
            d = std::max(d, std::max(fm - f_lo, f_hi - fm));
            j = k;
        }
        if (!best.valid || d < best.ks) {
            best.valid = true;
            best.ks = d;
            best.gamma = gamma;
            best.x_min = values[i];
            best.n_tail = static_cast<std::size_t>(m);
        }
    }
    return best;
}

}  // namespace detail

inline pareto_tail_fit fit_pareto_tail(std::span<const double> data,
                                       const pareto_fit_options& opts = {}) {
    const std::size_t n = data.size();
    if (n < opts.min_tail)
        throw numeric_error("fit_pareto_tail: insufficient tail (" +
                            std::to_string(n) + " < " +
                            std::to_string(opts.min_tail) + " points)");
    for (double x : data)
        if (!(x > 0.0)) throw numeric_error("fit_pareto_tail: non-positive datum");

    // Sort once; resamples are expressed as counts over sorted positions.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data[a] < data[b]; });
    std::vector<double> values(n), logs(n);
    std::vector<std::size_t> pos_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = data[order[i]];
        logs[i] = std::log(values[i]);
        pos_of[order[i]] = i;
    }
    if (values.front() == values.back())
        throw numeric_error("fit_pareto_tail: degenerate data (all values equal)");

    const std::vector<std::uint32_t> ones(n, 1);
    const auto point =
        detail::pareto_core_fit(values, logs, ones, opts.min_tail, opts.max_candidates);
    if (!point.valid) throw numeric_error("fit_pareto_tail: no admissible x_min");

    pareto_tail_fit fit;
    fit.gamma = point.gamma;
    fit.x_min = point.x_min;
    fit.ks_distance = point.ks;
    fit.n_tail = point.n_tail;
    fit.n = n;

    if (opts.with_ci) {
        const int B = opts.bootstrap_replicates;
        if (B < 200) throw input_error("fit_pareto_tail: B must be at least 200");
        std::vector<double> rep_g(B), rep_x(B);
        std::vector<char> ok(B, 0);
        parallel_for(static_cast<std::size_t>(B), [&](std::size_t r) {
            rng64 rng(derive_seed(opts.seed, r));
            std::vector<std::uint32_t> cnt(n, 0);
            for (std::size_t i = 0; i < n; ++i) ++cnt[rng.below(n)];
            const auto c = detail::pareto_core_fit(values, logs, cnt, opts.min_tail,
                                                   opts.replicate_candidates);
            if (c.valid) {
                rep_g[r] = c.gamma;
                rep_x[r] = c.x_min;
                ok[r] = 1;
            }
        });
        std::vector<double> vg, vx;
        for (int r = 0; r < B; ++r)
            if (ok[r]) {
                vg.push_back(rep_g[r]);
                vx.push_back(rep_x[r]);
            }
        const std::size_t failures = static_cast<std::size_t>(B) - vg.size();
        if (failures * 100 > static_cast<std::size_t>(B))
            throw numeric_error("fit_pareto_tail: bootstrap refit failed on " +
                                std::to_string(failures) + " resamples");

        const std::size_t g = std::min(opts.jackknife_groups, n);
        std::vector<double> jg, jx;
        std::vector<std::uint32_t> cnt(n, 1);
        for (std::size_t k = 0; k < g; ++k) {
            const std::size_t lo = n * k / g, hi = n * (k + 1) / g;
            for (std::size_t i = lo; i < hi; ++i) cnt[pos_of[i]] = 0;
            const auto c = detail::pareto_core_fit(values, logs, cnt, opts.min_tail,
                                                   opts.replicate_candidates);
            for (std::size_t i = lo; i < hi; ++i) cnt[pos_of[i]] = 1;
            if (c.valid) {
                jg.push_back(c.gamma);
                jx.push_back(c.x_min);
            }
        }
        fit.ci_gamma = detail::bca_from_replicates(fit.gamma, vg, jg, opts.level);
        fit.ci_xmin = detail::bca_from_replicates(fit.x_min, vx, jx, opts.level);
    }
    return fit;
}

}  // namespace costfolio
