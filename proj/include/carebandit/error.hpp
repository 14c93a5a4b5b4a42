#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace carebandit {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value or key (CLI exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or out-of-range input file content (CLI exit code 1).
class LoadError : public Error {
public:
    LoadError(const std::string& message, std::size_t row = 0, std::string column = {})
        : Error(format(message, row, column)), row_(row), column_(std::move(column)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    static std::string format(const std::string& message, std::size_t row, const std::string& column) {
        std::string out;
        if (row > 0) out += "row " + std::to_string(row);
        if (!column.empty()) out += (out.empty() ? "column '" : ", column '") + column + "'";
        return out.empty() ? message : out + ": " + message;
    }

    std::size_t row_;
    std::string column_;
};

/// Loss of positive-definiteness, non-finite values, failed calibration (CLI exit code 2).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace carebandit
