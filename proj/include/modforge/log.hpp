#pragma once

#include <string>

namespace modforge::log {

enum class Format { Text, Json };
enum class Level { Debug, Info, Warn, Error };

void set_format(Format format);
void set_level(Level level);

/// Writes one line to stderr. Thread-safe.
void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void error(const std::string& m) { write(Level::Error, m); }

}  // namespace modforge::log
