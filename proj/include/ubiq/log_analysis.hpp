#pragma once

// Offline analysis of JSONL event logs: merging per-peer files, rebuilding
// the latency matrix from "Latency" events and the per-second bandwidth
// series from "Stats" events.

#include "ubiq/event_log.hpp"
#include "ubiq/latency.hpp"
#include "ubiq/stats.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ubiq {

inline constexpr const char* kStatsEvent = "Stats";
inline constexpr const char* kLatencyEvent = "Latency";

/// Logs one stats window as a "Stats" event.
void log_stats(EventLogger& logger, const StatsSample& sample);

struct LoadedLog {
    std::vector<LogEvent> events;
    /// "file:line: reason" for every line that failed to parse.
    std::vector<std::string> skipped;
};

/// Reads every file, keeping events sorted by (peer, ticks) with file order
/// breaking ties. Throws Error(config) for an unreadable file.
LoadedLog load_logs(const std::vector<std::string>& paths);

LatencyMatrix latency_from_events(const std::vector<LogEvent>& events);

struct BandwidthRow {
    std::int64_t t = 0;
    std::uint64_t bytes_total = 0;
    std::uint64_t bytes_avatar = 0;
    std::uint64_t bytes_rooms = 0;
    std::uint64_t bytes_log = 0;
    std::uint64_t messages = 0;
    double overhead = 0;
};

/// Sums "Stats" events into one-second buckets, t measured in whole seconds
/// from the earliest stats event. Overhead is recomputed from the summed
/// message and byte counts.
std::vector<BandwidthRow> bandwidth_series(const std::vector<LogEvent>& events);

/// Columns: t, bytes_total, bytes_avatar, bytes_rooms, bytes_log, overhead.
std::string bandwidth_csv(const std::vector<BandwidthRow>& rows);

} // namespace ubiq
