#pragma once

// Headless load generator. A fleet of bots joins one room through a relay,
// each streaming avatar poses at a fixed rate and running the latency meter.

#include "ubiq/wire.hpp"

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace ubiq::harness {

struct BotConfig {
    std::string server = "127.0.0.1:8001";
    /// Join code, or "new" to have the first bot create a room.
    std::string room = "new";
    int bots = 2;
    double pose_rate = 60.0;
    std::size_t payload_bytes = 84;
    double duration_seconds = 30.0;
    /// How long to wait for in-flight poses once sending stops.
    double drain_seconds = 5.0;
    /// When set, bot i writes its events (stats each second, latency samples)
    /// to <log_dir>/bot-<i>.jsonl.
    std::string log_dir;
    /// Throws Error(config).
    void validate() const;
};

struct BotSummary {
    int index = 0;
    std::string peer_uuid;
    bool joined = false;
    std::string error;
    std::uint64_t poses_sent = 0;
    std::uint64_t poses_received = 0;
    std::uint64_t poses_expected = 0;
    /// One-way relayed pose latency (sender clock to receiver clock, same process).
    double relay_mean_ms = 0;
    double relay_p50_ms = 0;
    double relay_p95_ms = 0;
    /// Half round-trip samples from the 1 Hz meter.
    std::uint64_t meter_samples = 0;
    double meter_mean_ms = 0;
    double meter_p95_ms = 0;
    std::uint64_t bytes_in = 0;
    std::uint64_t bytes_out = 0;

    Json to_json() const;
};

struct FleetSummary {
    BotConfig config;
    std::string joincode;
    double elapsed_seconds = 0;
    std::vector<BotSummary> bots;
    double relay_p50_ms = 0;
    double relay_p95_ms = 0;
    std::uint64_t lost = 0;
    std::uint64_t expected = 0;
    /// Aggregate client throughput, in plus out, bytes per second.
    double bandwidth_bytes_per_second = 0;

    bool complete() const;
    Json to_json() const;
};

/// Runs the fleet to completion. Join failures are reported per bot; the
/// summary covers whichever bots made it into the room.
FleetSummary bot_run(const BotConfig& config);

/// Nearest-rank percentile of `values` (0 when empty); `q` in [0, 1].
double percentile(std::vector<double> values, double q);

} // namespace ubiq::harness
