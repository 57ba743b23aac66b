#pragma once

#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "costfolio/common.hpp"

namespace costfolio {

struct quad_result {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = false;
};

namespace detail {

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1] (QUADPACK constants).
inline constexpr double kGk15Nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr double kGk15Weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kGauss7Weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

template <typename F>
void gk15(F& f, double a, double b, double& kronrod, double& err) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double fc = f(mid);
    double k = fc * kGk15Weights[7];
    double g = fc * kGauss7Weights[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kGk15Nodes[i];
        const double fsum = f(mid - dx) + f(mid + dx);
        k += fsum * kGk15Weights[i];
        if (i % 2 == 1) g += fsum * kGauss7Weights[i / 2];
    }
    kronrod = k * half;
    err = std::fabs((k - g) * half);
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over [a, b] to an absolute
// tolerance. Splits the worst interval first; the integrand is assumed
// finite on the closed interval.
template <typename F>
quad_result integrate(F&& f, double a, double b, double abs_tol = 1e-9,
                      int max_intervals = 4000) {
    struct interval {
        double a, b, value, err;
        bool operator<(const interval& o) const { return err < o.err; }
    };
    if (!(b > a)) return {0.0, 0.0, true};

    std::priority_queue<interval> heap;
    double v0, e0;
    detail::gk15(f, a, b, v0, e0);
    heap.push({a, b, v0, e0});
    double total = v0, total_err = e0;
    int used = 1;
    while (total_err > abs_tol && used < max_intervals) {
        interval worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        double vl, el, vr, er;
        detail::gk15(f, worst.a, mid, vl, el);
        detail::gk15(f, mid, worst.b, vr, er);
        total += vl + vr - worst.value;
        total_err += el + er - worst.err;
        heap.push({worst.a, mid, vl, el});
        heap.push({mid, worst.b, vr, er});
        ++used;
        if (worst.b - worst.a < 1e-14 * (std::fabs(a) + std::fabs(b) + 1.0)) break;
    }
    return {total, total_err, total_err <= abs_tol};
}

template <typename F>
double integrate_or_throw(F&& f, double a, double b, double abs_tol = 1e-9,
                          int max_intervals = 4000) {
    const quad_result r = integrate(f, a, b, abs_tol, max_intervals);
    if (!r.converged)
        throw numeric_error("quadrature did not reach tolerance " +
                            std::to_string(abs_tol) + " (achieved " +
                            std::to_string(r.error_estimate) + ")");
    return r.value;
}

}  // namespace costfolio
