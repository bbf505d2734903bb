#include "modforge/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include <nlohmann/json.hpp>

namespace modforge::log {

namespace {
std::atomic<Format> g_format{Format::Text};
std::atomic<Level> g_level{Level::Info};
std::mutex g_mu;

const char* name(Level level) {
    switch (level) {
        case Level::Debug:
            return "debug";
        case Level::Info:
            return "info";
        case Level::Warn:
            return "warn";
        case Level::Error:
            return "error";
    }
    return "info";
}
}  // namespace

void set_format(Format format) { g_format = format; }
void set_level(Level level) { g_level = level; }

void write(Level level, const std::string& message) {
    if (level < g_level.load()) return;
    std::string line;
    if (g_format.load() == Format::Json) {
        nlohmann::json j{{"level", name(level)}, {"msg", message}};
        line = j.dump();
    } else {
        line = std::string("[") + name(level) + "] " + message;
    }
    std::lock_guard lock(g_mu);
    std::cerr << line << '\n';
}

}  // namespace modforge::log
