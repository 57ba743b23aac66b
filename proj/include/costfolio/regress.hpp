#pragma once

// Robust nonparametric regression (loess with tricube weights and bisquare
// robustness iterations), slope-plateau threshold detection, the two-regime
// linear model, and ordinary least squares.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/special.hpp"
#include "costfolio/tailfit.hpp"

namespace costfolio {

struct loess_fit {
    double span = 0.75;
    int robustness_iters = 4;
    std::vector<double> x;      // sorted evaluation/data grid
    std::vector<double> y_fit;  // fitted values at x
    std::vector<double> slope;  // local linear slope at x

    // Piecewise-linear interpolation of the fitted curve.
    double operator()(double xq) const {
        if (x.empty()) throw numeric_error("loess_fit: empty fit");
        if (xq <= x.front()) return y_fit.front();
        if (xq >= x.back()) return y_fit.back();
        const auto it = std::upper_bound(x.begin(), x.end(), xq);
        const std::size_t i = static_cast<std::size_t>(it - x.begin());
        const double w = (xq - x[i - 1]) / (x[i] - x[i - 1]);
        return y_fit[i - 1] * (1.0 - w) + y_fit[i] * w;
    }
};

// Local linear regression with tricube distance weights over the nearest
// ceil(span*n) neighbours; robustness via bisquare reweighting of residuals.
inline loess_fit loess(std::span<const double> x, std::span<const double> y,
                       double span = 0.75, int robustness_iters = 4) {
    const std::size_t n = x.size();
    if (n != y.size()) throw input_error("loess: x/y size mismatch");
    if (n < 20) throw input_error("loess: need at least 20 points");
    for (double v : x)
        if (!std::isfinite(v)) throw input_error("loess: non-finite x");
    const std::size_t k =
        static_cast<std::size_t>(std::ceil(span * static_cast<double>(n)));
    if (k < 3) throw input_error("loess: span*n < 3");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    loess_fit fit;
    fit.span = span;
    fit.robustness_iters = robustness_iters;
    fit.x.resize(n);
    fit.y_fit.assign(n, 0.0);
    fit.slope.assign(n, 0.0);
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        fit.x[i] = x[order[i]];
        ys[i] = y[order[i]];
    }

    std::vector<double> robust(n, 1.0), resid(n);
    const std::size_t win = std::min(k, n);
    for (int iter = 0; iter <= robustness_iters; ++iter) {
        std::size_t lo = 0;
        for (std::size_t i = 0; i < n; ++i) {
            // Slide the window of `win` nearest x-neighbours.
            while (lo + win < n &&
                   fit.x[i] - fit.x[lo] > fit.x[lo + win] - fit.x[i])
                ++lo;
            const std::size_t hi = lo + win;  // [lo, hi)
            const double h = std::max(fit.x[i] - fit.x[lo], fit.x[hi - 1] - fit.x[i]);
            double sw = 0.0, swx = 0.0, swy = 0.0;
            for (std::size_t j = lo; j < hi; ++j) {
                double w = robust[j];
                if (h > 0.0) {
                    const double u = std::fabs(fit.x[j] - fit.x[i]) / h;
                    if (u >= 1.0) continue;
                    const double tri = 1.0 - u * u * u;
                    w *= tri * tri * tri;
                }
                sw += w;
                swx += w * fit.x[j];
                swy += w * ys[j];
            }
            if (sw <= 0.0) {  // every neighbour robust-rejected: fall back flat
                fit.y_fit[i] = ys[i];
                fit.slope[i] = 0.0;
                continue;
            }
            const double xb = swx / sw, yb = swy / sw;
            double sxx = 0.0, sxy = 0.0;
            for (std::size_t j = lo; j < hi; ++j) {
                double w = robust[j];
                if (h > 0.0) {
                    const double u = std::fabs(fit.x[j] - fit.x[i]) / h;
                    if (u >= 1.0) continue;
                    const double tri = 1.0 - u * u * u;
                    w *= tri * tri * tri;
                }
                const double dx = fit.x[j] - xb;
                sxx += w * dx * dx;
                sxy += w * dx * (ys[j] - yb);
            }
            const double b = sxx > 0.0 ? sxy / sxx : 0.0;
            fit.slope[i] = b;
            fit.y_fit[i] = yb + b * (fit.x[i] - xb);
        }
        if (iter == robustness_iters) break;
        for (std::size_t i = 0; i < n; ++i) resid[i] = ys[i] - fit.y_fit[i];
        std::vector<double> ar(n);
        for (std::size_t i = 0; i < n; ++i) ar[i] = std::fabs(resid[i]);
        std::nth_element(ar.begin(), ar.begin() + n / 2, ar.end());
        const double s = 6.0 * ar[n / 2];
        if (s <= 0.0) break;  // perfect fit
        for (std::size_t i = 0; i < n; ++i) {
            const double u = resid[i] / s;
            robust[i] = std::fabs(u) < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
        }
    }
    return fit;
}

// --------------------------------------------------------------------------
// Regime thresholds from the loess slope profile.

struct threshold_result {
    double theta1 = 0.0;
    double theta2 = 0.0;
    bool single_regime = false;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw numeric_error("median of empty range");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

}  // namespace detail

// Scans the loess slope profile for the transition between the two slope
// plateaus. The slope series is smoothed with a moving average, the
// transition is anchored where it crosses the plateau midpoint, theta1 is
// the last abscissa before the crossing still matching the lower-x plateau
// slope within `slope_tol`, and theta2 the first after it matching the
// upper-x plateau.
inline threshold_result detect_thresholds(const loess_fit& fit, double slope_tol = 0.05,
                                          double plateau_frac = 0.15,
                                          double min_range = 2.0 * 2.302585092994046) {
    const std::size_t n = fit.x.size();
    if (n < 10) throw input_error("detect_thresholds: curve too short");
    if (fit.x.back() - fit.x.front() < min_range)
        throw input_error("detect_thresholds: curve must span at least two decades");

    // Moving-average smoothing keeps single-point slope noise from faking
    // a plateau exit.
    const std::size_t half = std::max<std::size_t>(2, n / 100);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        double acc = 0.0;
        for (std::size_t j = lo; j < hi; ++j) acc += fit.slope[j];
        s[i] = acc / static_cast<double>(hi - lo);
    }

    const std::size_t edge = std::max<std::size_t>(
        3, static_cast<std::size_t>(plateau_frac * static_cast<double>(n)));
    const double s_lo = detail::median_of(std::vector<double>(s.begin(), s.begin() + edge));
    const double s_hi = detail::median_of(
        std::vector<double>(s.end() - static_cast<std::ptrdiff_t>(edge), s.end()));

    threshold_result out;
    if (std::fabs(s_lo - s_hi) <= slope_tol) {
        out.single_regime = true;
        out.theta1 = out.theta2 = 0.5 * (fit.x.front() + fit.x.back());
        return out;
    }
    // Anchor: the midpoint crossing closest to holding on both sides.
    const double mid = 0.5 * (s_lo + s_hi);
    const double dir = s_hi > s_lo ? 1.0 : -1.0;
    std::size_t cross = n / 2;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if ((s[i] - mid) * dir <= 0.0 && (s[i + 1] - mid) * dir > 0.0) {
            cross = i + 1;
            break;
        }
    }
    std::size_t i1 = 0;
    for (std::size_t i = 0; i < cross; ++i)
        if (std::fabs(s[i] - s_lo) <= slope_tol) i1 = i;
    std::size_t i2 = n - 1;
    for (std::size_t i = n; i-- > cross;)
        if (std::fabs(s[i] - s_hi) <= slope_tol) i2 = i;
    out.theta1 = fit.x[i1];
    out.theta2 = fit.x[i2];
    if (out.theta1 > out.theta2)
        out.theta1 = out.theta2 = 0.5 * (out.theta1 + out.theta2);
    return out;
}

// --------------------------------------------------------------------------
// Ordinary least squares.

struct ols_fit {
    double slope = 0.0;
    double intercept = 0.0;
    interval slope_ci;
    double r2 = 0.0;
    std::vector<double> residuals;
    bool through_origin = false;
    std::size_t n = 0;
    double slope_se = 0.0;
};

inline ols_fit ols(std::span<const double> x, std::span<const double> y,
                   bool through_origin = false) {
    const std::size_t n = x.size();
    if (n != y.size()) throw input_error("ols: x/y size mismatch");
    if (n < 3) throw input_error("ols: need at least 3 points");
    ols_fit fit;
    fit.through_origin = through_origin;
    fit.n = n;
    fit.residuals.resize(n);
    const double dn = static_cast<double>(n);
    if (through_origin) {
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxx += x[i] * x[i];
            sxy += x[i] * y[i];
            syy += y[i] * y[i];
        }
        if (!(sxx > 0.0)) throw numeric_error("ols: zero variance in x");
        fit.slope = sxy / sxx;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            fit.residuals[i] = y[i] - fit.slope * x[i];
            sse += fit.residuals[i] * fit.residuals[i];
        }
        fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
        fit.slope_se = std::sqrt(sse / (dn - 1.0) / sxx);
    } else {
        double xb = 0.0, yb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            xb += x[i];
            yb += y[i];
        }
        xb /= dn;
        yb /= dn;
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxx += (x[i] - xb) * (x[i] - xb);
            sxy += (x[i] - xb) * (y[i] - yb);
            syy += (y[i] - yb) * (y[i] - yb);
        }
        if (!(sxx > 0.0)) throw numeric_error("ols: zero variance in x");
        fit.slope = sxy / sxx;
        fit.intercept = yb - fit.slope * xb;
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            fit.residuals[i] = y[i] - fit.intercept - fit.slope * x[i];
            sse += fit.residuals[i] * fit.residuals[i];
        }
        fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
        fit.slope_se = n > 2 ? std::sqrt(sse / (dn - 2.0) / sxx) : 0.0;
    }
    const double dof = through_origin ? dn - 1.0 : dn - 2.0;
    const double t = dof > 0.0 ? student_quantile(0.975, dof) : 0.0;
    fit.slope_ci = {fit.slope - t * fit.slope_se, fit.slope + t * fit.slope_se};
    return fit;
}

// --------------------------------------------------------------------------
// Double-linear model: independent OLS below theta1 and above theta2;
// points inside the gap belong to neither regime.

struct segment_fit {
    double beta = 0.0;      // slope
    double a = 0.0;         // intercept
    double xi = 0.0;        // residual standard deviation
    double r2 = 0.0;
    interval beta_ci, a_ci;
    std::size_t n = 0;
    std::vector<double> residuals;
};

struct segmented_fit {
    segment_fit lower, upper;
    double theta1 = 0.0;
    double theta2 = 0.0;
    std::size_t n_gap = 0;
};

inline segmented_fit fit_double_linear(std::span<const double> x,
                                       std::span<const double> y, double theta1,
                                       double theta2, std::size_t min_points = 10) {
    if (x.size() != y.size()) throw input_error("fit_double_linear: size mismatch");
    if (theta1 > theta2) throw input_error("fit_double_linear: theta1 > theta2");
    std::vector<double> xl, yl, xu, yu;
    std::size_t gap = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < theta1) {
            xl.push_back(x[i]);
            yl.push_back(y[i]);
        } else if (x[i] > theta2) {
            xu.push_back(x[i]);
            yu.push_back(y[i]);
        } else {
            ++gap;
        }
    }
    if (xl.size() < min_points)
        throw numeric_error("fit_double_linear: lower regime starved (" +
                            std::to_string(xl.size()) + " < " +
                            std::to_string(min_points) + " points)");
    if (xu.size() < min_points)
        throw numeric_error("fit_double_linear: upper regime starved (" +
                            std::to_string(xu.size()) + " < " +
                            std::to_string(min_points) + " points)");

    auto make_segment = [](std::span<const double> xs, std::span<const double> ys) {
        const ols_fit f = ols(xs, ys, false);
        segment_fit seg;
        seg.beta = f.slope;
        seg.a = f.intercept;
        seg.r2 = f.r2;
        seg.n = f.n;
        double sse = 0.0;
        for (double r : f.residuals) sse += r * r;
        seg.xi = f.n > 2 ? std::sqrt(sse / (static_cast<double>(f.n) - 2.0)) : 0.0;
        seg.beta_ci = f.slope_ci;
        const double dn = static_cast<double>(f.n);
        double xb = 0.0, sxx = 0.0;
        for (double v : xs) xb += v;
        xb /= dn;
        for (double v : xs) sxx += (v - xb) * (v - xb);
        const double se_a = seg.xi * std::sqrt(1.0 / dn + xb * xb / sxx);
        const double t = student_quantile(0.975, dn - 2.0);
        seg.a_ci = {seg.a - t * se_a, seg.a + t * se_a};
        seg.residuals = f.residuals;
        return seg;
    };
    segmented_fit out;
    out.lower = make_segment(xl, yl);
    out.upper = make_segment(xu, yu);
    out.theta1 = theta1;
    out.theta2 = theta2;
    out.n_gap = gap;
    return out;
}

// --------------------------------------------------------------------------
// Residual normality report.

struct normality_report {
    double fraction_normal = 1.0;  // fraction of points inside the 5% KS band
    double tail_excess = 0.0;      // relative excess of |z| > 3 vs. normal
    bool tail_flagged = false;
    double ks = 0.0;
    bool degenerate = false;
    std::size_t n = 0;
};

inline normality_report residual_normality_from(std::span<const double> residuals) {
    normality_report rep;
    rep.n = residuals.size();
    if (residuals.size() < 2) {
        rep.degenerate = true;
        return rep;
    }
    double mean = 0.0;
    for (double r : residuals) mean += r;
    mean /= static_cast<double>(residuals.size());
    double ss = 0.0;
    for (double r : residuals) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(residuals.size() - 1));
    if (!(sd > 0.0)) {
        rep.degenerate = true;
        return rep;
    }
    std::vector<double> z(residuals.size());
    for (std::size_t i = 0; i < residuals.size(); ++i) z[i] = (residuals[i] - mean) / sd;
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    const double band = 1.358 / std::sqrt(n);  // 5% Kolmogorov critical value
    std::size_t inside = 0;
    double d = 0.0;
    std::size_t tail3 = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double f = norm_cdf(z[i]);
        const double dev = std::max(f - static_cast<double>(i) / n,
                                    static_cast<double>(i + 1) / n - f);
        d = std::max(d, dev);
        if (dev <= band) ++inside;
        if (std::fabs(z[i]) > 3.0) ++tail3;
    }
    rep.ks = d;
    rep.fraction_normal = static_cast<double>(inside) / n;
    const double expected = 2.0 * (1.0 - norm_cdf(3.0));
    const double observed = static_cast<double>(tail3) / n;
    rep.tail_excess = expected > 0.0 ? std::max(observed / expected - 1.0, 0.0) : 0.0;
    rep.tail_flagged = tail3 >= 8 && observed > 2.5 * expected;
    return rep;
}

// Pooled report over both regimes of a segmented fit (>= 50 residuals each
// for a meaningful verdict; fewer yields a degenerate report, not an error).
inline normality_report residual_normality(const segmented_fit& fit) {
    std::vector<double> pooled;
    pooled.reserve(fit.lower.residuals.size() + fit.upper.residuals.size());
    auto standardize = [&](const segment_fit& seg) {
        if (seg.xi > 0.0)
            for (double r : seg.residuals) pooled.push_back(r / seg.xi);
    };
    standardize(fit.lower);
    standardize(fit.upper);
    return residual_normality_from(pooled);
}

}  // namespace costfolio
