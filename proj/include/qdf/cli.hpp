#pragma once

#include <map>
#include <stdexcept>
#include <string>

namespace qdf::cli {

// Bad flags, bad config files, or inconsistent checkpoint/model pairings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// key = value lines; '#' starts a comment, later keys override earlier ones.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

// Entry point for the qdf binary.  Exit codes: 0 success, 2 configuration
// error, 3 numeric failure.
int run(int argc, const char* const* argv);

}  // namespace qdf::cli
