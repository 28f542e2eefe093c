#include "prism/log.hpp"

#include <cstdarg>
#include <cstdio>
#include <mutex>

namespace prism {
namespace {

LogLevel g_level = LogLevel::kInfo;
std::mutex g_mutex;

const char* tag(LogLevel level) {
    switch (level) {
        case LogLevel::kDebug: return "debug";
        case LogLevel::kInfo: return "info";
        case LogLevel::kWarn: return "warn";
        case LogLevel::kError: return "error";
    }
    return "?";
}

void vlog(LogLevel level, const char* fmt, va_list args) {
    if (level < g_level) {
        return;
    }
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[%s] ", tag(level));
    std::vfprintf(stderr, fmt, args);
    std::fputc('\n', stderr);
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

#define PRISM_LOG_IMPL(level)        \
    va_list args;                    \
    va_start(args, fmt);             \
    vlog(level, fmt, args);          \
    va_end(args)

void log_debug(const char* fmt, ...) { PRISM_LOG_IMPL(LogLevel::kDebug); }
void log_info(const char* fmt, ...) { PRISM_LOG_IMPL(LogLevel::kInfo); }
void log_warn(const char* fmt, ...) { PRISM_LOG_IMPL(LogLevel::kWarn); }
void log_error(const char* fmt, ...) { PRISM_LOG_IMPL(LogLevel::kError); }

#undef PRISM_LOG_IMPL

}  // namespace prism
