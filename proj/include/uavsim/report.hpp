#pragma once

// Versioned CSV tables and the per-step JSON Lines trace. Every CSV starts
// with "# uavsim <version> <table> v1 ..." followed by a fixed column header.

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

#include "uavsim/simulator.hpp"

namespace uavsim {

inline constexpr int kCsvSchemaVersion = 1;

/// One row per step: loss events and packets, the cumulative ledger and, per
/// UAV, the chosen sensor (-1 for none) and commanded velocity.
void write_episode_csv(std::ostream& out, const EpisodeResult& result, std::string_view tool_version);

/// One row per sensor: lost packets over the episode.
void write_sensor_csv(std::ostream& out, const EpisodeResult& result, std::string_view tool_version);

/// One JSON object per (step, uav) decision, in execution order.
void write_trace_jsonl(std::ostream& out, const EpisodeResult& result);

/// Writes to a temporary sibling and renames it over `path`, so readers never
/// observe a partial file. Throws IoError.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace uavsim
