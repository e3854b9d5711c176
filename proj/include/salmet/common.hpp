#pragma once

#include <stdexcept>
#include <string>

namespace salmet {

// Error taxonomy, mirrored by the CLI exit codes: config=2, format=3, contract=4.

// Invalid run configuration (bad flag combinations, out-of-range settings).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad magic, truncated payload, unparseable row).
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation precondition (dimension mismatch, out-of-range index).
class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw contract_error(msg);
}

}  // namespace salmet
