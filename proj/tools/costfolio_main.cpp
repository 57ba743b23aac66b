// costfolio CLI: heavy-tail fitting, turnover-wealth regression, Q-law
// curves, cost-aware portfolio optimization, and synthetic-population
// simulation/validation. Reports are JSON, curves are CSV; every run
// carries a manifest (inputs, hashes, seed, version) for reproducibility.
//
// Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 validation failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "costfolio/popsim.hpp"
#include "costfolio/qtheory.hpp"
#include "costfolio/report.hpp"

namespace fs = std::filesystem;
using namespace costfolio;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitValidation = 4;

// Temp-file-then-rename so output paths are never half-written.
void atomic_write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw input_error("cannot write '" + tmp.string() + "'");
        out << content;
    }
    fs::rename(tmp, path);
}

void emit_report(const json& report, const std::optional<std::string>& out_path) {
    const std::string text = report.dump(2) + "\n";
    if (out_path)
        atomic_write(*out_path, text);
    else
        std::cout << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Column extraction from a generic headered CSV.
std::vector<double> load_column(const std::string& path, const std::string& column) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error("missing header", 1, column);
    std::vector<std::string_view> fields;
    split_csv_line(line, fields);
    std::size_t col = fields.size();
    for (std::size_t i = 0; i < fields.size(); ++i)
        if (fields[i] == column) col = i;
    if (col == fields.size())
        throw parse_error("column '" + column + "' not in header", 1, column);
    std::vector<double> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        split_csv_line(line, fields);
        if (col >= fields.size())
            throw parse_error("row has too few fields", line_no, column);
        out.push_back(parse_double_field(fields[col], line_no, column));
    }
    return out;
}

std::vector<fee_segment> load_fee_segments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw parse_error("missing header", 1, "lower_bound");
    std::vector<std::string_view> fields;
    split_csv_line(line, fields);
    if (fields.size() != 3 || fields[0] != "lower_bound" || fields[1] != "upper_bound" ||
        fields[2] != "fee")
        throw parse_error("expected header 'lower_bound,upper_bound,fee'", 1, "header");
    std::vector<fee_segment> segs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        split_csv_line(line, fields);
        if (fields.size() != 3) throw parse_error("expected 3 fields", line_no, "row");
        segs.push_back({parse_double_field(fields[0], line_no, "lower_bound"),
                        parse_double_field(fields[1], line_no, "upper_bound"),
                        parse_double_field(fields[2], line_no, "fee")});
    }
    validate_segments(segs);
    return segs;
}

market_params load_market(const std::string& path) {
    const json j = json::parse(read_file(path));
    market_params m;
    m.expected_market_return = j.at("expected_market_return").get<double>();
    m.market_variance = j.at("market_variance").get<double>();
    m.risk_free = j.at("risk_free").get<double>();
    m.mean_beta = j.at("mean_beta").get<double>();
    m.mean_idio_variance = j.at("mean_idio_variance").get<double>();
    m.validate();
    return m;
}

// Minimal key = value config reader ('#' comments, dotted keys, optional
// quotes). Flags override file values; every effective value is echoed
// into the run report.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const char* ws = " \t\r";
            const auto b = s.find_first_not_of(ws);
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(ws);
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("expected 'key = value'", line_no, "config");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (key.empty() || value.empty())
            throw parse_error("expected 'key = value'", line_no, "config");
        kv[key] = value;
    }
    return kv;
}

double to_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw input_error("config key '" + key + "': not a number: " + it->second);
    }
}

population_config config_from_file(const std::map<std::string, std::string>& kv) {
    population_config cfg;
    cfg.n_traders = static_cast<std::int64_t>(to_double(kv, "n_traders", 10000));
    cfg.seed = static_cast<std::uint64_t>(to_double(kv, "seed", 1));
    cfg.x = to_double(kv, "x", 1.0);
    cfg.kappa_noise = to_double(kv, "kappa_noise", 0.0);
    cfg.pv_mu = to_double(kv, "pv.mu", 13.94);
    cfg.pv_sigma = to_double(kv, "pv.sigma", 2.0);
    cfg.market.expected_market_return = to_double(kv, "market.expected_return", 0.08);
    cfg.market.market_variance = to_double(kv, "market.variance", 0.04);
    cfg.market.risk_free = to_double(kv, "market.risk_free", 0.01);
    cfg.market.mean_beta = to_double(kv, "market.mean_beta", 1.0);
    cfg.market.mean_idio_variance = to_double(kv, "market.idio_variance", 0.02);
    cfg.loess_span = to_double(kv, "loess.span", 0.3);
    cfg.loess_robustness = static_cast<int>(to_double(kv, "loess.robustness", 4));
    cfg.tol_alpha = to_double(kv, "tol.alpha", 0.01);
    cfg.tol_beta = to_double(kv, "tol.beta", 0.01);
    cfg.tol_chi = to_double(kv, "tol.chi", 0.02);
    if (const auto it = kv.find("category"); it != kv.end())
        cfg.category = parse_category(it->second);
    const std::string mode =
        kv.count("mode") ? kv.at("mode") : std::string("optimizer");
    if (mode == "optimizer") {
        cfg.mode = generation_mode::optimizer;
        cfg.fee_regimes.push_back(
            {to_double(kv, "fee.c", 0.005), to_double(kv, "fee.delta", 0.63)});
        if (kv.count("fee2.c") || kv.count("fee2.delta")) {
            cfg.fee_regimes.push_back(
                {to_double(kv, "fee2.c", 0.005), to_double(kv, "fee2.delta", 0.0)});
            cfg.theta = to_double(kv, "theta", cfg.pv_mu);
        }
    } else if (mode == "turnover-law") {
        cfg.mode = generation_mode::turnover_law;
        turnover_wealth_model m;
        m.regimes.push_back({to_double(kv, "tw.a", 0.0), to_double(kv, "tw.beta", 1.0),
                             to_double(kv, "tw.xi", 0.5)});
        if (kv.count("tw2.a") || kv.count("tw2.beta")) {
            m.regimes.push_back({to_double(kv, "tw2.a", 0.0),
                                 to_double(kv, "tw2.beta", 1.0),
                                 to_double(kv, "tw2.xi", 0.5)});
            m.theta = to_double(kv, "theta", cfg.pv_mu);
        }
        cfg.tw_model = std::move(m);
    } else {
        throw input_error("config: mode must be 'optimizer' or 'turnover-law'");
    }
    return cfg;
}

json config_echo(const population_config& cfg) {
    json j{{"n_traders", cfg.n_traders},
           {"seed", cfg.seed},
           {"mode", cfg.mode == generation_mode::optimizer ? "optimizer" : "turnover-law"},
           {"x", cfg.x},
           {"kappa_noise", cfg.kappa_noise},
           {"category", to_string(cfg.category)},
           {"pv", {{"mu", cfg.pv_mu}, {"sigma", cfg.pv_sigma}}},
           {"market",
            {{"expected_return", cfg.market.expected_market_return},
             {"variance", cfg.market.market_variance},
             {"risk_free", cfg.market.risk_free},
             {"mean_beta", cfg.market.mean_beta},
             {"idio_variance", cfg.market.mean_idio_variance}}},
           {"loess", {{"span", cfg.loess_span}, {"robustness", cfg.loess_robustness}}},
           {"tolerances",
            {{"alpha", cfg.tol_alpha}, {"beta", cfg.tol_beta}, {"chi", cfg.tol_chi}}}};
    json fees = json::array();
    for (const auto& f : cfg.fee_regimes) fees.push_back({{"c", f.c}, {"delta", f.delta}});
    j["fee_regimes"] = fees;
    if (cfg.theta) j["theta"] = *cfg.theta;
    if (cfg.tw_model) {
        json regimes = json::array();
        for (const auto& r : cfg.tw_model->regimes)
            regimes.push_back({{"a", r.a}, {"beta", r.beta}, {"xi", r.xi}});
        j["tw_model"] = {{"regimes", regimes}};
        if (cfg.tw_model->theta) j["tw_model"]["theta"] = *cfg.tw_model->theta;
    }
    return j;
}

std::string log_spaced(double lo, double hi, int points, std::vector<double>& grid) {
    grid.clear();
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < points; ++i)
        grid.push_back(std::exp(llo + (lhi - llo) * i / (points - 1.0)));
    return {};
}

// ---------------------------------------------------------------------------
// fit-dist

int cmd_fit_dist(const std::string& input, const std::string& column,
                 const std::string& family, int bootstrap, std::uint64_t seed,
                 const std::optional<std::string>& out,
                 const std::optional<std::string>& curve_path) {
    const auto data = load_column(input, column);
    if (data.empty()) throw input_error("no rows in '" + input + "'");

    json report;
    any_dist model = lognormal_dist{0.0, 1.0};
    if (family == "pareto") {
        pareto_fit_options opts;
        opts.bootstrap_replicates = bootstrap;
        opts.seed = seed;
        const auto f = fit_pareto_tail(data, opts);
        report = fit_report(f, seed, bootstrap);
        model = f.to_dist();
    } else if (family == "lognormal") {
        const auto f = fit_lognormal(data);
        report = fit_report(f, ks_statistic(data, f.to_dist()), seed);
        model = f.to_dist();
    } else if (family == "weibull") {
        const auto f = fit_weibull(data);
        report = fit_report(f, ks_statistic(data, f.to_dist()), seed);
        model = f.to_dist();
    } else if (family == "student") {
        const auto f = fit_student(data);
        report = fit_report(f, ks_statistic(data, f.to_dist()), seed);
        model = f.to_dist();
    } else if (family == "zm" || family == "zm-cutoff") {
        zm_fit_options opts;
        opts.bootstrap_replicates = bootstrap;
        opts.seed = seed;
        const auto f = fit_zipf_mandelbrot(data, family == "zm-cutoff", opts);
        report = fit_report(f, seed, bootstrap);
        model = f.to_dist();
    } else {
        throw input_error("unknown family '" + family + "'");
    }

    report["config"] = {{"input", input},   {"column", column}, {"family", family},
                        {"bootstrap", bootstrap}, {"seed", seed}};
    report["manifest"] = make_manifest("fit-dist", report["config"], {input});

    if (curve_path) {
        std::vector<double> sorted(data.begin(), data.end());
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> grid;
        log_spaced(sorted.front(), sorted.back(), 200, grid);
        std::string csv = "x,model_survival,empirical_survival\n";
        for (double x : grid) {
            const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x);
            csv += format_double(x) + "," + format_double(survival(model, x)) + "," +
                   format_double(static_cast<double>(above) /
                                 static_cast<double>(sorted.size())) +
                   "\n";
        }
        atomic_write(*curve_path, csv);
    }
    emit_report(report, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// turnover-law

int cmd_turnover_law(const std::string& tx_path, const std::string& snap_path,
                     const std::optional<std::string>& category, double span,
                     int robustness, const std::optional<std::string>& out,
                     const std::optional<std::string>& loess_csv) {
    std::ifstream tx_in(tx_path), snap_in(snap_path);
    if (!tx_in) throw input_error("cannot open '" + tx_path + "'");
    if (!snap_in) throw input_error("cannot open '" + snap_path + "'");
    auto txs = parse_transactions(tx_in);
    const auto snaps = parse_snapshots(snap_in);

    std::map<std::string, std::size_t> category_counts;
    if (category) {
        const client_category want = parse_category(*category);
        std::vector<transaction> kept;
        kept.reserve(txs.size());
        for (auto& t : txs)
            if (t.category == want) kept.push_back(std::move(t));
        txs = std::move(kept);
    }
    const snapshot_index index(snaps);
    const auto agg = aggregate_population(txs, index);
    if (agg.traders.size() < 20)
        throw numeric_error("turnover-law: fewer than 20 usable traders");

    std::vector<double> x, y;
    for (const auto& a : agg.traders) {
        ++category_counts[to_string(a.category)];
        x.push_back(a.mean_log_pv);
        y.push_back(a.mean_log_turnover);
    }
    const auto lf = loess(x, y, span, robustness);
    const auto th = detect_thresholds(lf);

    json report{{"family", "turnover-law"},
                {"n_traders", agg.traders.size()},
                {"skipped_traders", agg.skipped_traders},
                {"dropped_rows", agg.dropped_rows},
                {"category_counts", category_counts},
                {"single_regime", th.single_regime},
                {"theta1", th.theta1},
                {"theta2", th.theta2}};
    if (th.single_regime) {
        const auto f = ols(x, y, false);
        report["fit"] = {{"beta", f.slope},
                         {"a", f.intercept},
                         {"r2", f.r2},
                         {"ci_beta", to_json(f.slope_ci)}};
    } else {
        const auto seg = fit_double_linear(x, y, th.theta1, th.theta2);
        report["fit"] = fit_report(seg)["params"];
        const auto norm = residual_normality(seg);
        report["residual_normality"] = {{"fraction_normal", norm.fraction_normal},
                                        {"tail_excess", norm.tail_excess},
                                        {"tail_flagged", norm.tail_flagged},
                                        {"degenerate", norm.degenerate}};
    }
    report["config"] = {{"transactions", tx_path},
                        {"snapshots", snap_path},
                        {"category", category ? *category : "all"},
                        {"span", span},
                        {"robustness", robustness}};
    report["manifest"] =
        make_manifest("turnover-law", report["config"], {tx_path, snap_path});

    if (loess_csv) {
        std::string csv = "x,y_fit\n";
        for (std::size_t i = 0; i < lf.x.size(); ++i)
            csv += format_double(lf.x[i]) + "," + format_double(lf.y_fit[i]) + "\n";
        atomic_write(*loess_csv, csv);
    }
    emit_report(report, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// q

turnover_wealth_model model_from_json(const json& j) {
    turnover_wealth_model m;
    for (const auto& r : j.at("regimes"))
        m.regimes.push_back({r.at("a").get<double>(), r.at("beta").get<double>(),
                             r.at("xi").get<double>()});
    if (j.contains("theta") && !j["theta"].is_null())
        m.theta = j["theta"].get<double>();
    return m;
}

int cmd_q(const std::optional<std::string>& params_path,
          const std::vector<std::string>& from_fits, double qmin, double qmax,
          int points, const std::optional<std::string>& out_cdf,
          const std::optional<std::string>& out_pdf,
          const std::optional<std::string>& out) {
    turnover_wealth_model model;
    lognormal_dist pv{0.0, 1.0};
    std::vector<std::string> inputs;
    if (params_path) {
        const json j = json::parse(read_file(*params_path));
        model = model_from_json(j);
        pv = {j.at("pv").at("mu").get<double>(), j.at("pv").at("sigma").get<double>()};
        inputs.push_back(*params_path);
    } else if (from_fits.size() == 2) {
        // A lognormal fit-dist report plus a turnover-law report.
        const json jl = json::parse(read_file(from_fits[0]));
        if (jl.at("family") != "lognormal")
            throw input_error("--from-fits: first report must be a lognormal fit");
        pv = {jl.at("params").at("mu").get<double>(),
              jl.at("params").at("sigma").get<double>()};
        const json jt = json::parse(read_file(from_fits[1]));
        if (jt.at("family") != "turnover-law")
            throw input_error("--from-fits: second report must be a turnover-law fit");
        if (jt.at("single_regime").get<bool>()) {
            model.regimes.push_back({jt.at("fit").at("a").get<double>(),
                                     jt.at("fit").at("beta").get<double>(), 0.5});
        } else {
            const auto& f = jt.at("fit");
            model.regimes.push_back({f.at("lower").at("a").get<double>(),
                                     f.at("lower").at("beta").get<double>(),
                                     f.at("lower").at("xi").get<double>()});
            model.regimes.push_back({f.at("upper").at("a").get<double>(),
                                     f.at("upper").at("beta").get<double>(),
                                     f.at("upper").at("xi").get<double>()});
            model.theta = jt.at("theta1").get<double>();
        }
        inputs = from_fits;
    } else {
        throw input_error("q: need --params or exactly two --from-fits reports");
    }

    std::vector<double> grid;
    log_spaced(qmin, qmax, points, grid);
    const bool two = model.regimes.size() == 2;
    std::string cdf_csv = "q,cdf\n", pdf_csv = "q,pdf\n";
    for (double q : grid) {
        const double c = two ? bilinear_q_cdf(q, model, pv)
                             : q_cdf(q, model, any_dist{pv});
        const double d = two ? bilinear_q_pdf(q, model, pv)
                             : q_pdf(q, model, any_dist{pv});
        cdf_csv += format_double(q) + "," + format_double(c) + "\n";
        pdf_csv += format_double(q) + "," + format_double(d) + "\n";
    }
    if (out_cdf) atomic_write(*out_cdf, cdf_csv);
    if (out_pdf) atomic_write(*out_pdf, pdf_csv);

    json report{{"family", "q-curves"},
                {"regimes", model.regimes.size()},
                {"qmin", qmin},
                {"qmax", qmax},
                {"points", points}};
    if (model.regimes.size() == 1) {
        const auto qm = closed_form_q(model, pv.mu, pv.sigma);
        report["closed_form"] = {{"M", qm.m}, {"S", qm.s}};
    }
    report["config"] = {{"params", params_path ? *params_path : ""},
                        {"from_fits", from_fits},
                        {"qmin", qmin},
                        {"qmax", qmax},
                        {"points", points}};
    report["manifest"] = make_manifest("q", report["config"], inputs);
    emit_report(report, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const std::string& fees_path, const std::string& market_path,
                 double pv, std::optional<double> lambda, std::optional<double> x,
                 std::optional<double> n_assets, int bootstrap, std::uint64_t seed,
                 const std::optional<std::string>& out) {
    if (!(pv > 0.0)) throw input_error("optimize: --pv must be positive");
    if (lambda.has_value() == x.has_value())
        throw input_error("optimize: pass exactly one of --lambda or --x");
    const auto segments = load_fee_segments(fees_path);
    const auto market = load_market(market_path);
    const auto ff = fit_fee_powerlaw(segments, bootstrap, seed);
    fee_schedule schedule;
    schedule.segments = segments;
    schedule.fitted = ff.params;
    const auto& p = ff.params;

    optimal_allocation alloc;
    if (lambda) {
        alloc.lambda = *lambda;
        if (n_assets) {
            alloc.n_star_raw = *n_assets;
            alloc.n_star = std::lround(*n_assets);
        } else {
            // Joint stationarity: N/x is pinned by lambda, then x follows.
            if (p.delta >= 1.0)
                throw numeric_error("optimize: delta >= 1 has no N dependence");
            const double rho = std::pow(
                market.mean_idio_variance * std::pow(pv, 1.0 - p.delta) /
                    ((1.0 - p.delta) * p.c * (1.0 + market.risk_free) * *lambda),
                1.0 / (2.0 - p.delta));
            const double b =
                market.mean_beta * market.mean_beta * market.market_variance;
            const double rhs =
                0.5 * *lambda *
                (market.risk_premium() - p.delta * (1.0 + market.risk_free) * p.c *
                                             std::pow(rho / pv, 1.0 - p.delta));
            const double x_joint = (rhs - market.mean_idio_variance / rho) / b;
            if (!(x_joint > 0.0))
                throw numeric_error("optimize: fees exceed the risk premium; "
                                    "all-cash optimum");
            alloc.n_star_raw = std::max(1.0, rho * std::min(x_joint, 1.0));
            alloc.n_star = std::max(1L, std::lround(alloc.n_star_raw));
        }
        const auto xs =
            solve_x_star(std::max(alloc.n_star_raw, 1.0), *lambda, pv, market, schedule);
        alloc.x_star = xs.x;
        alloc.x_boundary = xs.boundary;
    } else {
        alloc.x_star = *x;
        alloc.n_star_raw = solve_n_star(*x, pv, market, schedule);
        alloc.lambda = lambda_from_n(*x, alloc.n_star_raw, pv, market, p);
        // Integer N: evaluate both neighbours of the real-valued optimum.
        const double lo = std::max(1.0, std::floor(alloc.n_star_raw));
        const double hi = std::ceil(alloc.n_star_raw);
        alloc.n_star = static_cast<long>(
            objective(*x, lo, alloc.lambda, pv, market, schedule) >=
                    objective(*x, hi, alloc.lambda, pv, market, schedule)
                ? lo
                : hi);
    }
    alloc.k_ratio = k_ratio_exact(std::max(alloc.n_star_raw, 1.0), market);
    alloc.objective_value = objective(alloc.x_star, std::max(alloc.n_star_raw, 1.0),
                                      alloc.lambda, pv, market, schedule);

    json config{{"fees", fees_path},
                {"market", market_path},
                {"pv", pv},
                {"bootstrap", bootstrap},
                {"seed", seed}};
    if (lambda) config["lambda"] = *lambda;
    if (x) config["x"] = *x;
    if (n_assets) config["n"] = *n_assets;
    json report{{"inputs", config},
                {"fee_fit",
                 {{"c", p.c},
                  {"delta", p.delta},
                  {"f_max", p.f_max},
                  {"ci_c", to_json(ff.ci_c)},
                  {"ci_delta", to_json(ff.ci_delta)}}},
                {"x_star", alloc.x_star},
                {"n_star", alloc.n_star},
                {"n_star_raw", alloc.n_star_raw},
                {"k_ratio", alloc.k_ratio},
                {"lambda", alloc.lambda},
                {"objective", alloc.objective_value},
                {"flags", {{"x_boundary", alloc.x_boundary}}}};
    report["manifest"] = make_manifest("optimize", config, {fees_path, market_path});
    emit_report(report, out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate / validate

json population_json(const population& pop) {
    json traders = json::array();
    for (const auto& t : pop.traders)
        traders.push_back({{"trader_id", t.trader_id},
                           {"pv", t.pv},
                           {"zeta", t.zeta},
                           {"n_assets", t.n_assets},
                           {"regime", t.regime},
                           {"n_floored", t.n_floored}});
    return {{"n_floored", pop.n_floored}, {"traders", traders}};
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const population_config& cfg) {
    const auto pop = generate_population(cfg);
    fs::create_directories(out_dir);
    std::ostringstream tx, snap;
    write_transactions_csv(pop, cfg, tx);
    write_snapshots_csv(pop, snap);
    atomic_write(fs::path(out_dir) / "transactions.csv", tx.str());
    atomic_write(fs::path(out_dir) / "snapshots.csv", snap.str());
    atomic_write(fs::path(out_dir) / "population.json",
                 population_json(pop).dump(2) + "\n");
    const json manifest = make_manifest("simulate", config_echo(cfg), {config_path});
    atomic_write(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << out_dir << "/transactions.csv, snapshots.csv, "
              << "population.json, manifest.json\n";
    return kExitOk;
}

std::string validation_text(const validation_report& rep) {
    std::ostringstream os;
    os << "closed-loop validation over " << rep.n_traders << " traders ("
       << rep.n_transactions << " transactions, " << rep.n_floored << " floored)\n";
    os << "detected regime structure: "
       << (rep.single_regime_detected ? "single" : "double") << " (theta1="
       << rep.theta1 << ", theta2=" << rep.theta2 << ")\n";
    auto row = [&](const exponent_check& c) {
        os << "  " << c.name << " = " << c.estimate << "  [" << c.ci_lower << ", "
           << c.ci_upper << "]  theory " << c.theory << "  tol " << c.tolerance
           << "  " << (c.pass ? "PASS" : "FAIL") << "\n";
    };
    for (const auto& c : rep.alpha) row(c);
    for (const auto& c : rep.beta) row(c);
    row(rep.chi);
    for (std::size_t i = 0; i < rep.delta_eff_hat.size(); ++i)
        os << "  delta_eff[" << i + 1 << "] = " << rep.delta_eff_hat[i] << "\n";
    os << (rep.pass ? "VALIDATION PASS" : "VALIDATION FAIL") << "\n";
    return os.str();
}

int cmd_validate(const std::string& config_path, const std::string& out_dir,
                 const population_config& cfg) {
    cmd_simulate(config_path, out_dir, cfg);
    const auto rep = run_validation(cfg);
    json j = to_json(rep);
    j["config"] = config_echo(cfg);
    j["manifest"] = make_manifest("validate", j["config"], {config_path});
    atomic_write(fs::path(out_dir) / "validation.json", j.dump(2) + "\n");
    const std::string text = validation_text(rep);
    atomic_write(fs::path(out_dir) / "validation.txt", text);
    std::cout << text;
    return rep.pass ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"turnover, account value and diversification analytics"};
    app.require_subcommand(1);

    // fit-dist
    auto* fit = app.add_subcommand("fit-dist", "fit a heavy-tail family to a data column");
    std::string fd_input, fd_column, fd_family;
    int fd_bootstrap = 1999;
    std::uint64_t fd_seed = 1;
    std::optional<std::string> fd_out, fd_curve;
    fit->add_option("--input", fd_input)->required();
    fit->add_option("--column", fd_column)->required();
    fit->add_option("--family", fd_family)
        ->required()
        ->check(CLI::IsMember({"pareto", "lognormal", "weibull", "student", "zm",
                               "zm-cutoff"}));
    fit->add_option("--bootstrap", fd_bootstrap);
    fit->add_option("--seed", fd_seed);
    fit->add_option("--out", fd_out);
    fit->add_option("--curve", fd_curve);

    // turnover-law
    auto* law = app.add_subcommand("turnover-law",
                                   "double-linear turnover vs account value fit");
    std::string tl_tx, tl_snap;
    std::optional<std::string> tl_category, tl_out, tl_loess;
    double tl_span = 0.75;
    int tl_robust = 4;
    law->add_option("--transactions", tl_tx)->required();
    law->add_option("--snapshots", tl_snap)->required();
    law->add_option("--category", tl_category);
    law->add_option("--span", tl_span);
    law->add_option("--robustness", tl_robust);
    law->add_option("--out", tl_out);
    law->add_option("--loess-csv", tl_loess);

    // q
    auto* qcmd = app.add_subcommand("q", "Q = T/P_v distribution curves");
    std::optional<std::string> q_params, q_out_cdf, q_out_pdf, q_out;
    std::vector<std::string> q_from_fits;
    double q_min = 1e-4, q_max = 10.0;
    int q_points = 200;
    qcmd->add_option("--params", q_params);
    qcmd->add_option("--from-fits", q_from_fits)->expected(2);
    qcmd->add_option("--qmin", q_min);
    qcmd->add_option("--qmax", q_max);
    qcmd->add_option("--points", q_points);
    qcmd->add_option("--out-cdf", q_out_cdf);
    qcmd->add_option("--out-pdf", q_out_pdf);
    qcmd->add_option("--out", q_out);

    // optimize
    auto* opt = app.add_subcommand("optimize", "optimal invested fraction and asset count");
    std::string op_fees, op_market;
    double op_pv = 0.0;
    std::optional<double> op_lambda, op_x, op_n;
    int op_bootstrap = 1999;
    std::uint64_t op_seed = 1;
    std::optional<std::string> op_out;
    opt->add_option("--fees", op_fees)->required();
    opt->add_option("--market", op_market)->required();
    opt->add_option("--pv", op_pv)->required();
    opt->add_option("--lambda", op_lambda);
    opt->add_option("--x", op_x);
    opt->add_option("--n", op_n);
    opt->add_option("--bootstrap", op_bootstrap);
    opt->add_option("--seed", op_seed);
    opt->add_option("--out", op_out);

    // simulate / validate
    auto add_sim_flags = [](CLI::App* cmd, std::string& config_path, std::string& out_dir,
                            std::optional<std::int64_t>& n_traders,
                            std::optional<std::uint64_t>& seed) {
        cmd->add_option("--config", config_path)->required();
        cmd->add_option("--out-dir", out_dir)->required();
        cmd->add_option("--n-traders", n_traders);
        cmd->add_option("--seed", seed);
    };
    auto* sim = app.add_subcommand("simulate", "generate a synthetic trader population");
    std::string sim_config, sim_out;
    std::optional<std::int64_t> sim_n;
    std::optional<std::uint64_t> sim_seed;
    add_sim_flags(sim, sim_config, sim_out, sim_n, sim_seed);

    auto* val = app.add_subcommand("validate",
                                   "closed-loop exponent validation on synthetic data");
    std::string val_config, val_out;
    std::optional<std::int64_t> val_n;
    std::optional<std::uint64_t> val_seed;
    add_sim_flags(val, val_config, val_out, val_n, val_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit)
            return cmd_fit_dist(fd_input, fd_column, fd_family, fd_bootstrap, fd_seed,
                                fd_out, fd_curve);
        if (*law)
            return cmd_turnover_law(tl_tx, tl_snap, tl_category, tl_span, tl_robust,
                                    tl_out, tl_loess);
        if (*qcmd)
            return cmd_q(q_params, q_from_fits, q_min, q_max, q_points, q_out_cdf,
                         q_out_pdf, q_out);
        if (*opt)
            return cmd_optimize(op_fees, op_market, op_pv, op_lambda, op_x, op_n,
                                op_bootstrap, op_seed, op_out);
        if (*sim || *val) {
            const std::string config_path = *sim ? sim_config : val_config;
            auto kv = read_config_file(config_path);
            auto cfg = config_from_file(kv);
            const auto& n_override = *sim ? sim_n : val_n;
            const auto& seed_override = *sim ? sim_seed : val_seed;
            if (n_override) cfg.n_traders = *n_override;
            if (seed_override) cfg.seed = *seed_override;
            if (*sim) return cmd_simulate(config_path, sim_out, cfg);
            return cmd_validate(config_path, val_out, cfg);
        }
    } catch (const parse_error& e) {
        std::cerr << json{{"error", {{"kind", "parse"}, {"message", e.what()},
                                     {"line", e.line()}, {"column", e.column()}}}}
                         .dump()
                  << "\n";
        return kExitInput;
    } catch (const input_error& e) {
        std::cerr << json{{"error", {{"kind", "input"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return kExitInput;
    } catch (const numeric_error& e) {
        std::cerr << json{{"error", {{"kind", "numerical"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
