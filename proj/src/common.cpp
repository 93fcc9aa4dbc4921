#include "cqe/common.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace cqe::logging {

namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
}  // namespace

void warn(std::string_view message) {
    ++g_warnings;
    if (g_quiet.load()) return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << "warning: " << message << '\n';
}

std::size_t warning_count() { return g_warnings.load(); }

void reset_warning_count() { g_warnings.store(0); }

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace cqe::logging
