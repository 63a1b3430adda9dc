#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace faconf {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from FACONF_LOG (error|info|debug), default info.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("FACONF_LOG");
        if (env == nullptr) return LogLevel::Info;
        const std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << "[debug] " << msg << "\n";
}

inline void log_error(const std::string& msg) { std::cerr << "[error] " << msg << "\n"; }

}  // namespace faconf
