#pragma once

// Ingestion of transaction logs and daily account-value snapshots, plus the
// per-trader aggregates (mean turnover, Q ratio, portfolio-building set)
// that feed the regression and validation pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "costfolio/common.hpp"
#include "costfolio/csv.hpp"
#include "costfolio/parallel.hpp"

namespace costfolio {

// --------------------------------------------------------------------------
// Calendar arithmetic (proleptic Gregorian, Howard Hinnant's algorithms).

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 +
           static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

// UTC instant with second resolution.
struct utc_time {
    std::int64_t seconds = 0;  // since 1970-01-01T00:00:00Z

    std::int64_t day() const {
        return seconds >= 0 ? seconds / 86400 : (seconds - 86399) / 86400;
    }
    auto operator<=>(const utc_time&) const = default;
};

// Calendar date as days since the epoch.
struct civil_date {
    std::int64_t days = 0;
    auto operator<=>(const civil_date&) const = default;
};

namespace detail {

inline int parse_int(std::string_view s, std::size_t line, const std::string& col) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw parse_error("not an integer: '" + std::string(s) + "'", line, col);
    return v;
}

}  // namespace detail

// "YYYY-MM-DD"
inline civil_date parse_date(std::string_view s, std::size_t line = 0,
                             const std::string& column = "date") {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-')
        throw parse_error("bad date '" + std::string(s) + "'", line, column);
    const int y = detail::parse_int(s.substr(0, 4), line, column);
    const int m = detail::parse_int(s.substr(5, 2), line, column);
    const int d = detail::parse_int(s.substr(8, 2), line, column);
    if (m < 1 || m > 12 || d < 1 || d > 31)
        throw parse_error("bad date '" + std::string(s) + "'", line, column);
    return {days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d))};
}

// "YYYY-MM-DDTHH:MM:SSZ" (optionally with fractional seconds, ignored).
inline utc_time parse_timestamp(std::string_view s, std::size_t line = 0,
                                const std::string& column = "timestamp") {
    if (s.size() < 20 || s[10] != 'T' || s.back() != 'Z' || s[13] != ':' || s[16] != ':')
        throw parse_error("bad timestamp '" + std::string(s) + "'", line, column);
    const civil_date date = parse_date(s.substr(0, 10), line, column);
    const int hh = detail::parse_int(s.substr(11, 2), line, column);
    const int mm = detail::parse_int(s.substr(14, 2), line, column);
    const int ss = detail::parse_int(s.substr(17, 2), line, column);
    if (hh > 23 || mm > 59 || ss > 60)
        throw parse_error("bad timestamp '" + std::string(s) + "'", line, column);
    const std::string_view rest = s.substr(19, s.size() - 20);
    if (!rest.empty() && rest[0] != '.')
        throw parse_error("bad timestamp '" + std::string(s) + "'", line, column);
    return {date.days * 86400 + hh * 3600 + mm * 60 + ss};
}

inline std::string format_date(civil_date d) {
    int y;
    unsigned m, day;
    civil_from_days(d.days, y, m, day);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, day);
    return buf;
}

inline std::string format_timestamp(utc_time t) {
    const std::int64_t day = t.day();
    std::int64_t rem = t.seconds - day * 86400;
    char buf[32];
    int y;
    unsigned m, d;
    civil_from_days(day, y, m, d);
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem % 3600) / 60),
                  static_cast<int>(rem % 60));
    return buf;
}

// --------------------------------------------------------------------------
// Domain types.

enum class asset_class { stock, derivative, bond, fund };
enum class trade_side { buy, sell };
enum class client_category { individual, company, asset_manager };

inline const char* to_string(asset_class a) {
    switch (a) {
        case asset_class::stock: return "stock";
        case asset_class::derivative: return "derivative";
        case asset_class::bond: return "bond";
        case asset_class::fund: return "fund";
    }
    return "?";
}
inline const char* to_string(trade_side s) {
    return s == trade_side::buy ? "buy" : "sell";
}
inline const char* to_string(client_category c) {
    switch (c) {
        case client_category::individual: return "individual";
        case client_category::company: return "company";
        case client_category::asset_manager: return "asset_manager";
    }
    return "?";
}

inline client_category parse_category(std::string_view s, std::size_t line = 0) {
    if (s == "individual") return client_category::individual;
    if (s == "company") return client_category::company;
    if (s == "asset_manager") return client_category::asset_manager;
    throw parse_error("unknown category '" + std::string(s) + "'", line, "category");
}

struct transaction {
    std::string trader_id;
    client_category category = client_category::individual;
    utc_time timestamp;
    std::string asset_id;
    asset_class asset = asset_class::stock;
    trade_side side = trade_side::buy;
    double price = 0.0;
    double volume = 0.0;
    double turnover = 0.0;  // price * volume, fees excluded
};

struct account_snapshot {
    std::string trader_id;
    civil_date date;
    double account_value = 0.0;
};

struct trader_aggregate {
    std::string trader_id;
    client_category category = client_category::individual;
    double mean_turnover = 0.0;      // <T> over all transactions
    double mean_log_turnover = 0.0;  // <log T> over all transactions
    double mean_log_pv = 0.0;        // <log P_v> over resolvable transactions
    double q_ratio = 0.0;            // Q = <T / P_v> over resolvable transactions
    double phi_turnover = 0.0;       // T_phi: sum of first-buy turnovers
    std::size_t n_assets = 0;        // |Phi|
    double mean_pv_phi = 0.0;        // <P_v> at Phi transaction times
    std::size_t n_transactions = 0;
    std::size_t dropped_no_pv = 0;   // excluded from Q / <log P_v>
};

// --------------------------------------------------------------------------
// Parsing. Headers are fixed; an optional trailing `currency` column is
// accepted on transactions but every row must agree on its value.

inline constexpr const char* kTransactionsHeader =
    "trader_id,category,timestamp,asset_id,asset_class,side,price,volume";
inline constexpr const char* kSnapshotsHeader = "trader_id,date,account_value";

inline std::vector<transaction> parse_transactions(std::istream& in) {
    static const std::vector<std::string> columns = {
        "trader_id", "category", "timestamp", "asset_id",
        "asset_class", "side",   "price",     "volume"};
    std::string line;
    if (!std::getline(in, line))
        throw parse_error("missing header", 1, "trader_id");
    std::vector<std::string_view> fields;
    split_csv_line(line, fields);
    bool has_currency = false;
    if (fields.size() == columns.size() + 1 && fields.back() == "currency") {
        has_currency = true;
    } else if (fields.size() != columns.size()) {
        throw parse_error("expected header '" + std::string(kTransactionsHeader) + "'",
                          1, "header");
    }
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (fields[i] != columns[i])
            throw parse_error("expected header column '" + columns[i] + "'", 1,
                              columns[i]);

    std::vector<transaction> out;
    std::unordered_map<std::string, client_category> categories;
    std::string currency;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        split_csv_line(line, fields);
        const std::size_t expected = columns.size() + (has_currency ? 1 : 0);
        if (fields.size() != expected)
            throw parse_error("expected " + std::to_string(expected) + " fields, got " +
                                  std::to_string(fields.size()),
                              line_no, "row");
        transaction tx;
        tx.trader_id = std::string(fields[0]);
        if (tx.trader_id.empty())
            throw parse_error("empty trader_id", line_no, "trader_id");
        tx.category = parse_category(fields[1], line_no);
        tx.timestamp = parse_timestamp(fields[2], line_no);
        tx.asset_id = std::string(fields[3]);
        if (tx.asset_id.empty()) throw parse_error("empty asset_id", line_no, "asset_id");
        if (fields[4] == "stock") tx.asset = asset_class::stock;
        else if (fields[4] == "derivative") tx.asset = asset_class::derivative;
        else if (fields[4] == "bond") tx.asset = asset_class::bond;
        else if (fields[4] == "fund") tx.asset = asset_class::fund;
        else
            throw parse_error("unknown asset_class '" + std::string(fields[4]) + "'",
                              line_no, "asset_class");
        if (fields[5] == "buy") tx.side = trade_side::buy;
        else if (fields[5] == "sell") tx.side = trade_side::sell;
        else
            throw parse_error("unknown side '" + std::string(fields[5]) + "'", line_no,
                              "side");
        tx.price = parse_double_field(fields[6], line_no, "price");
        if (!(tx.price > 0.0))
            throw parse_error("price must be positive", line_no, "price");
        tx.volume = parse_double_field(fields[7], line_no, "volume");
        if (!(tx.volume > 0.0))
            throw parse_error("volume must be positive", line_no, "volume");
        tx.turnover = tx.price * tx.volume;
        if (has_currency) {
            if (currency.empty()) currency = std::string(fields[8]);
            else if (currency != fields[8])
                throw parse_error("mixed currencies ('" + currency + "' vs '" +
                                      std::string(fields[8]) + "') are not supported",
                                  line_no, "currency");
        }
        const auto [it, inserted] = categories.emplace(tx.trader_id, tx.category);
        if (!inserted && it->second != tx.category)
            throw parse_error("trader '" + tx.trader_id + "' has conflicting categories",
                              line_no, "category");
        out.push_back(std::move(tx));
    }
    std::stable_sort(out.begin(), out.end(), [](const transaction& a, const transaction& b) {
        if (a.trader_id != b.trader_id) return a.trader_id < b.trader_id;
        return a.timestamp < b.timestamp;
    });
    return out;
}

inline std::vector<account_snapshot> parse_snapshots(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("missing header", 1, "trader_id");
    std::vector<std::string_view> fields;
    split_csv_line(line, fields);
    if (fields.size() != 3 || fields[0] != "trader_id" || fields[1] != "date" ||
        fields[2] != "account_value")
        throw parse_error("expected header '" + std::string(kSnapshotsHeader) + "'", 1,
                          "header");
    std::vector<account_snapshot> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        split_csv_line(line, fields);
        if (fields.size() != 3)
            throw parse_error("expected 3 fields, got " + std::to_string(fields.size()),
                              line_no, "row");
        account_snapshot snap;
        snap.trader_id = std::string(fields[0]);
        if (snap.trader_id.empty())
            throw parse_error("empty trader_id", line_no, "trader_id");
        snap.date = parse_date(fields[1], line_no);
        snap.account_value = parse_double_field(fields[2], line_no, "account_value");
        if (snap.account_value < 0.0)
            throw parse_error("account_value must be non-negative", line_no,
                              "account_value");
        out.push_back(std::move(snap));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const account_snapshot& a, const account_snapshot& b) {
                         if (a.trader_id != b.trader_id) return a.trader_id < b.trader_id;
                         return a.date < b.date;
                     });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].trader_id == out[i - 1].trader_id && out[i].date == out[i - 1].date)
            throw parse_error("duplicate snapshot for trader '" + out[i].trader_id +
                                  "' on " + format_date(out[i].date),
                              0, "date");
    return out;
}

// --------------------------------------------------------------------------
// Snapshot lookup: previous end-of-day value proxies the intraday value,
// with strict date precedence (a day's own snapshot is not usable intraday).

class snapshot_index {
public:
    snapshot_index() = default;
    explicit snapshot_index(std::span<const account_snapshot> snaps) {
        for (const auto& s : snaps) by_trader_[s.trader_id].push_back({s.date.days, s.account_value});
        for (auto& [id, v] : by_trader_)
            std::sort(v.begin(), v.end());
    }

    // Account value in effect at instant t: most recent snapshot strictly
    // before t's calendar date. Empty when no prior snapshot exists
    // ("no account value available"); the caller may skip the transaction.
    std::optional<double> account_value_at(const std::string& trader_id,
                                           utc_time t) const {
        const auto it = by_trader_.find(trader_id);
        if (it == by_trader_.end()) return std::nullopt;
        const auto& v = it->second;
        const std::pair<std::int64_t, double> key{t.day(), -1.0};
        auto pos = std::lower_bound(v.begin(), v.end(), key);
        if (pos == v.begin()) return std::nullopt;
        return (--pos)->second;
    }

private:
    std::unordered_map<std::string, std::vector<std::pair<std::int64_t, double>>> by_trader_;
};

inline std::optional<double> account_value_at(std::span<const account_snapshot> snaps,
                                              const std::string& trader_id, utc_time t) {
    return snapshot_index(snaps).account_value_at(trader_id, t);
}

// --------------------------------------------------------------------------
// Portfolio-building transactions: the first buy of each asset never bought
// before. Sells are ignored entirely and never mark an asset as seen.

inline std::vector<std::size_t> extract_portfolio_building(
    std::span<const transaction> txs) {
    std::vector<std::size_t> phi;
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < txs.size(); ++i) {
        if (txs[i].side != trade_side::buy) continue;
        if (seen.insert(txs[i].asset_id).second) phi.push_back(i);
    }
    return phi;
}

// Aggregate one trader's sorted transactions. Transactions without a
// resolvable account value are dropped from Q and the P_v statistics but
// kept for the turnover means; the dropped count is reported.
inline trader_aggregate aggregate_trader(std::span<const transaction> txs,
                                         const snapshot_index& snaps) {
    if (txs.empty()) throw numeric_error("aggregate_trader: insufficient data");
    trader_aggregate agg;
    agg.trader_id = txs.front().trader_id;
    agg.category = txs.front().category;
    agg.n_transactions = txs.size();

    double sum_t = 0.0, sum_log_t = 0.0;
    double sum_q = 0.0, sum_log_pv = 0.0;
    std::size_t n_pv = 0;
    for (const auto& tx : txs) {
        sum_t += tx.turnover;
        sum_log_t += std::log(tx.turnover);
    }
    const auto phi = extract_portfolio_building(txs);
    double sum_phi_t = 0.0, sum_phi_pv = 0.0;
    std::size_t n_phi_pv = 0;
    for (std::size_t i : phi) sum_phi_t += txs[i].turnover;

    std::size_t phi_cursor = 0;
    for (std::size_t i = 0; i < txs.size(); ++i) {
        const auto pv = snaps.account_value_at(agg.trader_id, txs[i].timestamp);
        const bool in_phi = phi_cursor < phi.size() && phi[phi_cursor] == i;
        if (in_phi) ++phi_cursor;
        if (!pv || !(*pv > 0.0)) {
            ++agg.dropped_no_pv;
            continue;
        }
        sum_q += txs[i].turnover / *pv;
        sum_log_pv += std::log(*pv);
        ++n_pv;
        if (in_phi) {
            sum_phi_pv += *pv;
            ++n_phi_pv;
        }
    }
    if (n_pv == 0)
        throw numeric_error("aggregate_trader: insufficient data (no transaction with "
                            "a resolvable account value for trader '" +
                            agg.trader_id + "')");

    const double n_all = static_cast<double>(txs.size());
    agg.mean_turnover = sum_t / n_all;
    agg.mean_log_turnover = sum_log_t / n_all;
    agg.q_ratio = sum_q / static_cast<double>(n_pv);
    agg.mean_log_pv = sum_log_pv / static_cast<double>(n_pv);
    agg.phi_turnover = sum_phi_t;
    agg.n_assets = phi.size();
    agg.mean_pv_phi = n_phi_pv > 0 ? sum_phi_pv / static_cast<double>(n_phi_pv) : 0.0;
    return agg;
}

struct population_aggregates {
    std::vector<trader_aggregate> traders;
    std::size_t skipped_traders = 0;  // no resolvable account value at all
    std::size_t dropped_rows = 0;     // rows excluded from Q statistics
};

// Per-trader aggregation over a (trader_id, timestamp)-sorted transaction
// list. Pure per trader, so the loop is parallel; output order follows
// trader_id regardless of scheduling.
inline population_aggregates aggregate_population(std::span<const transaction> txs,
                                                  const snapshot_index& snaps) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= txs.size(); ++i) {
        if (i == txs.size() || txs[i].trader_id != txs[start].trader_id) {
            ranges.emplace_back(start, i);
            start = i;
        }
    }
    std::vector<std::optional<trader_aggregate>> slots(ranges.size());
    parallel_for(ranges.size(), [&](std::size_t k) {
        const auto [lo, hi] = ranges[k];
        try {
            slots[k] = aggregate_trader(txs.subspan(lo, hi - lo), snaps);
        } catch (const numeric_error&) {
            slots[k] = std::nullopt;
        }
    });
    population_aggregates out;
    out.traders.reserve(slots.size());
    for (auto& s : slots) {
        if (s) {
            out.dropped_rows += s->dropped_no_pv;
            out.traders.push_back(std::move(*s));
        } else {
            ++out.skipped_traders;
        }
    }
    return out;
}

}  // namespace costfolio
