#pragma once

// Distribution families used across the fitting, Q-analytics and population
// synthesis code. Each family exposes pdf/cdf/survival/quantile; sampling is
// inverse-CDF throughout (closed form where available, monotone bisection
// otherwise) so that draws are a pure function of the seed.

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/rng.hpp"
#include "costfolio/special.hpp"

namespace costfolio {

struct pareto_dist {
    double gamma;   // tail exponent, > 1
    double x_min;   // support lower bound, > 0

    double pdf(double x) const {
        if (x < x_min) return 0.0;
        return (gamma - 1.0) / x_min * std::pow(x / x_min, -gamma);
    }
    double survival(double x) const {
        if (x <= x_min) return 1.0;
        return std::pow(x / x_min, 1.0 - gamma);
    }
    double cdf(double x) const { return 1.0 - survival(x); }
    double quantile(double p) const {
        return x_min * std::pow(1.0 - p, -1.0 / (gamma - 1.0));
    }
};

struct lognormal_dist {
    double mu;      // mean of log
    double sigma;   // sd of log, > 0

    double pdf(double x) const {
        if (x <= 0.0) return 0.0;
        const double z = (std::log(x) - mu) / sigma;
        return std::exp(-0.5 * z * z) / (x * sigma * std::sqrt(2.0 * 3.14159265358979323846));
    }
    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        return norm_cdf((std::log(x) - mu) / sigma);
    }
    double survival(double x) const { return 1.0 - cdf(x); }
    double quantile(double p) const { return std::exp(mu + sigma * norm_quantile(p)); }
};

struct weibull_dist {
    double shape;   // k > 0
    double scale;   // lambda > 0

    double pdf(double x) const {
        if (x < 0.0) return 0.0;
        const double t = x / scale;
        return shape / scale * std::pow(t, shape - 1.0) * std::exp(-std::pow(t, shape));
    }
    double survival(double x) const {
        if (x <= 0.0) return 1.0;
        return std::exp(-std::pow(x / scale, shape));
    }
    double cdf(double x) const { return 1.0 - survival(x); }
    double quantile(double p) const {
        return scale * std::pow(-std::log1p(-p), 1.0 / shape);
    }
};

// Student's t folded onto the positive half-line (fitted to magnitudes).
struct folded_student_dist {
    double dof;     // degrees of freedom, > 0
    double scale;   // > 0

    double pdf(double x) const {
        if (x < 0.0) return 0.0;
        const double u = x / scale;
        const double ln_norm = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                               0.5 * std::log(dof * 3.14159265358979323846);
        return 2.0 / scale *
               std::exp(ln_norm - 0.5 * (dof + 1.0) * std::log1p(u * u / dof));
    }
    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        return 2.0 * student_cdf(x / scale, dof) - 1.0;
    }
    double survival(double x) const { return 1.0 - cdf(x); }
    double quantile(double p) const {
        return scale * student_quantile(0.5 * (1.0 + p), dof);
    }
};

// Survival c^g (c+x)^-g e^(-bx) on x >= 0; b = 0 gives the pure form.
struct zipf_mandelbrot_dist {
    double c;         // offset, > 0
    double gamma;     // exponent, > 0
    double beta_cut;  // exponential cutoff rate, >= 0

    double log_survival(double x) const {
        return gamma * (std::log(c) - std::log(c + x)) - beta_cut * x;
    }
    double survival(double x) const {
        if (x <= 0.0) return 1.0;
        return std::exp(log_survival(x));
    }
    double cdf(double x) const { return 1.0 - survival(x); }
    // Density from differentiating the survival function.
    double pdf(double x) const {
        if (x < 0.0) return 0.0;
        return survival(x) * (beta_cut + gamma / (c + x));
    }
    double quantile(double p) const {
        if (p <= 0.0) return 0.0;
        if (beta_cut == 0.0) return c * (std::pow(1.0 - p, -1.0 / gamma) - 1.0);
        const double target = std::log1p(-p);
        double hi = c;
        while (log_survival(hi) > target) hi *= 2.0;
        double lo = 0.0;
        for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + hi); ++i) {
            const double mid = 0.5 * (lo + hi);
            (log_survival(mid) > target ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
};

using any_dist = std::variant<pareto_dist, lognormal_dist, weibull_dist,
                              folded_student_dist, zipf_mandelbrot_dist>;

inline double pdf(const any_dist& d, double x) {
    return std::visit([x](const auto& m) { return m.pdf(x); }, d);
}
inline double cdf(const any_dist& d, double x) {
    return std::visit([x](const auto& m) { return m.cdf(x); }, d);
}
inline double survival(const any_dist& d, double x) {
    return std::visit([x](const auto& m) { return m.survival(x); }, d);
}
inline double quantile(const any_dist& d, double p) {
    return std::visit([p](const auto& m) { return m.quantile(p); }, d);
}

// Density of log X at u, i.e. pdf(e^u) * e^u.
inline double log_space_pdf(const any_dist& d, double u) {
    const double x = std::exp(u);
    return pdf(d, x) * x;
}

// I.i.d. draws by inverse CDF; deterministic given the seed.
template <typename Dist>
std::vector<double> sample(const Dist& d, std::size_t n, std::uint64_t seed) {
    rng64 rng(seed);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = d.quantile(rng.uniform01());
    return out;
}

inline std::vector<double> sample(const any_dist& d, std::size_t n, std::uint64_t seed) {
    return std::visit([&](const auto& m) { return sample(m, n, seed); }, d);
}

}  // namespace costfolio
