#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace branchnet {

// Error taxonomy. Everything user-facing is a subclass of std::runtime_error
// so the CLI can catch one type and emit a machine-readable record.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// BRANCHNET_DETERMINISTIC=1 forces single-threaded BLAS and blanks wall-time
// fields in emitted CSV so repeated runs are byte-identical.
bool deterministic_mode();

// Thread budget for BLAS kernels. 0 = library default. Deterministic mode
// always pins to 1 regardless of what was requested.
void set_num_threads(int n);
int num_threads();

// NaN scanning after every op. On by default in debug builds, or when
// BRANCHNET_DEBUG_NAN=1, or when forced programmatically.
bool nan_debug_enabled();
void set_nan_debug(bool on);

// Derive independent RNG streams from one master seed (splitmix64 mixing).
uint64_t mix64(uint64_t a, uint64_t b);
std::mt19937 make_rng(uint64_t seed, uint64_t stream);

double now_ms();

}  // namespace branchnet
