#include "branchnet/util.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace branchnet {

bool deterministic_mode() {
    const char* v = std::getenv("BRANCHNET_DETERMINISTIC");
    return v != nullptr && v[0] == '1';
}

namespace {
std::atomic<int> g_threads{1};
std::atomic<int> g_nan_debug{-1};  // -1 = not forced, read env/build mode
}  // namespace

void set_num_threads(int n) {
    if (deterministic_mode()) n = 1;
    if (n <= 0) n = 1;
    g_threads.store(n);
    openblas_set_num_threads(n);
}

int num_threads() { return g_threads.load(); }

bool nan_debug_enabled() {
    int forced = g_nan_debug.load();
    if (forced >= 0) return forced != 0;
    const char* v = std::getenv("BRANCHNET_DEBUG_NAN");
    if (v != nullptr) return v[0] == '1';
#ifndef NDEBUG
    return true;
#else
    return false;
#endif
}

void set_nan_debug(bool on) { g_nan_debug.store(on ? 1 : 0); }

uint64_t mix64(uint64_t a, uint64_t b) {
    // splitmix64 over the combined value
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::mt19937 make_rng(uint64_t seed, uint64_t stream) {
    return std::mt19937(static_cast<uint32_t>(mix64(seed, stream) >> 16));
}

double now_ms() {
    auto t = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::milli>(t).count();
}

}  // namespace branchnet
