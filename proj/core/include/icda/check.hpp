#pragma once

#include <stdexcept>
#include <string>

namespace icda {

// Precondition or shape violation by the caller. These indicate bugs in the
// calling code, not bad data, so they are never caught internally.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Factorization failed even at the largest permitted jitter.
struct SingularMatrixError : std::runtime_error {
    explicit SingularMatrixError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed experiment configuration (unknown key, unparsable value, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void contract_fail(const char* cond, const char* file, int line,
                                       const std::string& msg) {
    throw ContractViolation(std::string(file) + ":" + std::to_string(line) + ": requirement (" +
                            cond + ") failed: " + msg);
}

}  // namespace icda

#define ICDA_REQUIRE(cond, msg)                                  \
    do {                                                         \
        if (!(cond)) ::icda::contract_fail(#cond, __FILE__, __LINE__, (msg)); \
    } while (0)
