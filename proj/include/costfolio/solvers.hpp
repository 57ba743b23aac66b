#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "costfolio/common.hpp"

namespace costfolio {

// Root of f on [lo, hi] with f(lo), f(hi) of opposite sign.
template <typename F>
double bisect_root(F&& f, double lo, double hi, double xtol_rel = 1e-14,
                   int max_iter = 300) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw numeric_error("bisect_root: endpoints do not bracket a root");
    for (int i = 0; i < max_iter; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo <= xtol_rel * (std::fabs(lo) + std::fabs(hi) + 1e-300)) break;
    }
    return 0.5 * (lo + hi);
}

// Expand [lo, hi] upward by doubling until f changes sign; returns hi.
template <typename F>
double expand_bracket_up(F&& f, double lo, double hi, double limit) {
    const bool sign_lo = f(lo) > 0.0;
    while (hi < limit) {
        if ((f(hi) > 0.0) != sign_lo) return hi;
        hi *= 2.0;
    }
    if ((f(limit) > 0.0) != sign_lo) return limit;
    throw numeric_error("expand_bracket_up: no sign change up to limit");
}

// Maximum of a unimodal function on [lo, hi] by golden-section search.
template <typename F>
double golden_section_max(F&& f, double lo, double hi, double xtol = 1e-12) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct bfgs_result {
    std::vector<double> x;
    double value = 0.0;
    double grad_norm = 0.0;  // sup-norm at the solution
    int iterations = 0;
    bool converged = false;
};

// Quasi-Newton (BFGS) maximization with backtracking Armijo line search.
// `fg` returns the objective and fills the gradient. Dimensions are tiny
// (2-3 parameters), so dense updates are stored in flat row-major arrays.
inline bfgs_result bfgs_maximize(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    std::vector<double> x0, double grad_tol = 1e-8, int max_iter = 500) {
    const std::size_t n = x0.size();
    std::vector<double> h(n * n, 0.0);  // approximate inverse Hessian of -f
    for (std::size_t i = 0; i < n; ++i) h[i * n + i] = 1.0;

    std::vector<double> g(n), g_new(n), p(n), x_new(n), s(n), y(n), hy(n);
    double f = fg(x0, g);
    if (!std::isfinite(f)) throw numeric_error("bfgs_maximize: non-finite start");

    bfgs_result out;
    out.x = x0;
    out.value = f;
    for (int iter = 0; iter < max_iter; ++iter) {
        double gmax = 0.0;
        for (double gi : g) gmax = std::max(gmax, std::fabs(gi));
        out.grad_norm = gmax;
        out.iterations = iter;
        if (gmax < grad_tol) {
            out.converged = true;
            return out;
        }

        // Ascent direction p = H g.
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * g[j];
            p[i] = acc;
        }
        double dir_deriv = 0.0;
        for (std::size_t i = 0; i < n; ++i) dir_deriv += p[i] * g[i];
        if (!(dir_deriv > 0.0)) {
            // Reset to steepest ascent if curvature information went bad.
            for (std::size_t i = 0; i < n * n; ++i) h[i] = 0.0;
            for (std::size_t i = 0; i < n; ++i) h[i * n + i] = 1.0;
            p = g;
            dir_deriv = 0.0;
            for (std::size_t i = 0; i < n; ++i) dir_deriv += g[i] * g[i];
        }

        double step = 1.0;
        double f_new = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = out.x[i] + step * p[i];
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new >= out.value + 1e-4 * step * dir_deriv) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            out.converged = out.grad_norm < 1e-5;  // stalled at line-search noise floor
            return out;
        }

        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - out.x[i];
            y[i] = g[i] - g_new[i];  // gradient change of -f
        }
        out.x = x_new;
        out.value = f_new;
        g = g_new;

        double sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) sy += s[i] * y[i];
        if (sy > 1e-14) {
            // BFGS update of the inverse Hessian (Sherman-Morrison form).
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * y[j];
                hy[i] = acc;
            }
            double yhy = 0.0;
            for (std::size_t i = 0; i < n; ++i) yhy += y[i] * hy[i];
            const double c1 = (sy + yhy) / (sy * sy);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    h[i * n + j] += c1 * s[i] * s[j] -
                                    (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
    double gmax = 0.0;
    for (double gi : g) gmax = std::max(gmax, std::fabs(gi));
    out.grad_norm = gmax;
    out.iterations = max_iter;
    out.converged = gmax < grad_tol;
    return out;
}

// Newton refinement for tiny problems: Hessian by central differences of
// the analytic gradient, dense solve, backtracking on the objective.
// Quadratic local convergence finishes off what BFGS approaches slowly on
// ill-conditioned likelihood surfaces.
inline bfgs_result newton_polish_maximize(
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    std::vector<double> x0, double grad_tol = 1e-8, int max_iter = 40) {
    const std::size_t n = x0.size();
    std::vector<double> g(n), gp(n), gm(n), d(n), x_new(n), g_new(n);
    std::vector<double> hess(n * n);
    double f = fg(x0, g);
    bfgs_result out;
    out.x = x0;
    out.value = f;
    for (int iter = 0; iter < max_iter; ++iter) {
        double gmax = 0.0;
        for (double gi : g) gmax = std::max(gmax, std::fabs(gi));
        out.grad_norm = gmax;
        out.iterations = iter;
        if (gmax < grad_tol) {
            out.converged = true;
            return out;
        }
        std::vector<double> probe = out.x;
        for (std::size_t k = 0; k < n; ++k) {
            const double h = 1e-6 * (1.0 + std::fabs(out.x[k]));
            probe[k] = out.x[k] + h;
            fg(probe, gp);
            probe[k] = out.x[k] - h;
            fg(probe, gm);
            probe[k] = out.x[k];
            for (std::size_t i = 0; i < n; ++i)
                hess[i * n + k] = (gp[i] - gm[i]) / (2.0 * h);
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double s = 0.5 * (hess[i * n + j] + hess[j * n + i]);
                hess[i * n + j] = hess[j * n + i] = s;
            }
        // Solve H d = -g by Gaussian elimination with partial pivoting.
        std::vector<double> a = hess, rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = -g[i];
        bool singular = false;
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t col = 0; col < n && !singular; ++col) {
            std::size_t piv = col;
            for (std::size_t r2 = col + 1; r2 < n; ++r2)
                if (std::fabs(a[r2 * n + col]) > std::fabs(a[piv * n + col])) piv = r2;
            if (std::fabs(a[piv * n + col]) < 1e-300) {
                singular = true;
                break;
            }
            if (piv != col) {
                for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
                std::swap(rhs[piv], rhs[col]);
            }
            for (std::size_t r2 = col + 1; r2 < n; ++r2) {
                const double factor = a[r2 * n + col] / a[col * n + col];
                for (std::size_t j = col; j < n; ++j) a[r2 * n + j] -= factor * a[col * n + j];
                rhs[r2] -= factor * rhs[col];
            }
        }
        if (!singular) {
            for (std::size_t i = n; i-- > 0;) {
                double acc = rhs[i];
                for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * d[j];
                d[i] = acc / a[i * n + i];
            }
        }
        double dir = 0.0;
        for (std::size_t i = 0; i < n; ++i) dir += d[i] * g[i];
        if (singular || !(dir > 0.0)) {
            d = g;  // fall back to steepest ascent
            dir = 0.0;
            for (double gi : g) dir += gi * gi;
        }
        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = out.x[i] + step * d[i];
            const double f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new >= out.value - 1e-14 * std::fabs(out.value)) {
                // Accept non-decreasing steps; near the optimum the gain is
                // below rounding while the gradient still shrinks.
                out.x = x_new;
                out.value = f_new;
                g = g_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    double gmax = 0.0;
    for (double gi : g) gmax = std::max(gmax, std::fabs(gi));
    out.grad_norm = gmax;
    out.converged = gmax < grad_tol;
    return out;
}

}  // namespace costfolio
