#pragma once

// INI-style configuration. Sections and keys are documented in docs/config.md;
// unknown sections or keys are rejected so typos do not silently fall back to
// defaults. Overrides use the form "section.key=value".

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "uavsim/simulator.hpp"

namespace uavsim {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ConfigError on syntax, unknown keys, bad values or failed validation.
SimConfig parse_config(std::string_view ini_text, std::span<const std::string> overrides = {});

/// Throws IoError when the file cannot be read.
SimConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

}  // namespace uavsim
