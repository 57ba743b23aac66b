#pragma once

#include <stdexcept>
#include <string>

namespace costfolio {

inline constexpr const char* kVersion = "0.1.0";

// Bad input: malformed files, invalid arguments, schema violations.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input rejected while parsing a structured file; carries position.
class parse_error : public input_error {
public:
    parse_error(const std::string& msg, std::size_t line, std::string column)
        : input_error(msg + " (line " + std::to_string(line) + ", column '" + column + "')"),
          line_(line),
          column_(std::move(column)) {}

    std::size_t line() const { return line_; }
    const std::string& column() const { return column_; }

private:
    std::size_t line_;
    std::string column_;
};

// Numerical failure: non-convergence, degenerate data, out-of-range regime.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace costfolio
