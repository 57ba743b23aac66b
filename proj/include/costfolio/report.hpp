#pragma once

// JSON report schema shared by the fitting and regression surfaces:
// {family, params, ci, ks, n, seed, B}, plus run manifests with input
// hashes for byte-reproducibility.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "costfolio/common.hpp"
#include "costfolio/optimizer.hpp"
#include "costfolio/popsim.hpp"
#include "costfolio/regress.hpp"
#include "costfolio/sha256.hpp"
#include "costfolio/tailfit.hpp"

namespace costfolio {

using json = nlohmann::json;

inline json to_json(const bootstrap_ci& ci) {
    return {{"lower", ci.lower},
            {"upper", ci.upper},
            {"level", ci.level},
            {"replicates", ci.replicates},
            {"method", ci.method}};
}

inline json to_json(const interval& iv) {
    return {{"lower", iv.lower}, {"upper", iv.upper}};
}

inline json fit_report(const pareto_tail_fit& f, std::uint64_t seed, int B) {
    return {{"family", "pareto"},
            {"params", {{"gamma", f.gamma}, {"x_min", f.x_min}, {"n_tail", f.n_tail}}},
            {"ci", {{"gamma", to_json(f.ci_gamma)}, {"x_min", to_json(f.ci_xmin)}}},
            {"ks", f.ks_distance},
            {"n", f.n},
            {"seed", seed},
            {"B", B}};
}

inline json fit_report(const lognormal_fit& f, double ks, std::uint64_t seed) {
    return {{"family", "lognormal"},
            {"params", {{"mu", f.mu}, {"sigma", f.sigma}}},
            {"ci", {{"mu", to_json(f.ci_mu)}, {"sigma", to_json(f.ci_sigma)}}},
            {"ks", ks},
            {"n", f.n},
            {"seed", seed},
            {"B", 0}};
}

inline json fit_report(const weibull_fit& f, double ks, std::uint64_t seed) {
    return {{"family", "weibull"},
            {"params", {{"shape", f.shape}, {"scale", f.scale}}},
            {"ci", json::object()},
            {"ks", ks},
            {"n", f.n},
            {"seed", seed},
            {"B", 0}};
}

inline json fit_report(const student_fit& f, double ks, std::uint64_t seed) {
    return {{"family", "student"},
            {"params", {{"dof", f.dof}, {"scale", f.scale}}},
            {"ci", json::object()},
            {"ks", ks},
            {"n", f.n},
            {"seed", seed},
            {"B", 0}};
}

inline json fit_report(const zipf_mandelbrot_fit& f, std::uint64_t seed, int B) {
    return {{"family", f.cutoff ? "zm-cutoff" : "zm"},
            {"params",
             {{"c", f.c}, {"gamma", f.gamma}, {"beta_cut", f.beta_cut},
              {"clamped_boundary", f.clamped_boundary}}},
            {"ci",
             {{"c", to_json(f.ci_c)},
              {"gamma", to_json(f.ci_gamma)},
              {"beta_cut", to_json(f.ci_beta)}}},
            {"ks", f.ks},
            {"n", f.n},
            {"seed", seed},
            {"B", B}};
}

inline json to_json(const segment_fit& s) {
    return {{"beta", s.beta},     {"a", s.a},
            {"xi", s.xi},         {"r2", s.r2},
            {"n", s.n},           {"ci_beta", to_json(s.beta_ci)},
            {"ci_a", to_json(s.a_ci)}};
}

inline json fit_report(const segmented_fit& f) {
    return {{"family", "segmented"},
            {"params",
             {{"lower", to_json(f.lower)},
              {"upper", to_json(f.upper)},
              {"theta1", f.theta1},
              {"theta2", f.theta2},
              {"n_gap", f.n_gap}}},
            {"ci",
             {{"beta1", to_json(f.lower.beta_ci)}, {"beta2", to_json(f.upper.beta_ci)}}},
            {"ks", nullptr},
            {"n", f.lower.n + f.upper.n + f.n_gap},
            {"seed", 0},
            {"B", 0}};
}

inline json to_json(const exponent_check& c) {
    return {{"name", c.name},       {"estimate", c.estimate},
            {"ci_lower", c.ci_lower}, {"ci_upper", c.ci_upper},
            {"theory", c.theory},   {"tolerance", c.tolerance},
            {"pass", c.pass}};
}

inline json to_json(const validation_report& r) {
    json alpha = json::array(), beta = json::array();
    for (const auto& c : r.alpha) alpha.push_back(to_json(c));
    for (const auto& c : r.beta) beta.push_back(to_json(c));
    return {{"alpha", alpha},
            {"beta", beta},
            {"delta_eff", r.delta_eff_hat},
            {"chi", to_json(r.chi)},
            {"single_regime_detected", r.single_regime_detected},
            {"theta1", r.theta1},
            {"theta2", r.theta2},
            {"n_traders", r.n_traders},
            {"n_transactions", r.n_transactions},
            {"n_floored", r.n_floored},
            {"pass", r.pass}};
}

// --------------------------------------------------------------------------
// Manifest: enough provenance to reproduce a run byte-for-byte.

inline std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open '" + path + "'");
    sha256 h;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.hex_digest();
}

inline json make_manifest(const std::string& command, const json& parameters,
                          const std::vector<std::string>& input_paths) {
    json inputs = json::array();
    for (const auto& p : input_paths)
        inputs.push_back({{"path", p}, {"sha256", hash_file(p)}});
    return {{"command", command},
            {"version", kVersion},
            {"parameters", parameters},
            {"inputs", inputs}};
}

}  // namespace costfolio
