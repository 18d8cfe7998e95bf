#pragma once

// Peer-to-peer latency metering: each peer pings every other peer once per
// second and records half the round-trip time on its own clock.

#include "ubiq/event_log.hpp"
#include "ubiq/rooms.hpp"
#include "ubiq/scene.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ubiq {

struct RunningStats {
    std::uint64_t count = 0;
    double mean = 0.0;
    double last = 0.0;

    void add(double value) {
        ++count;
        mean += (value - mean) / static_cast<double>(count);
        last = value;
    }
};

/// Directed (from, to) latency statistics in milliseconds.
class LatencyMatrix {
public:
    void record(const std::string& from, const std::string& to, double ms);
    std::optional<RunningStats> get(const std::string& from, const std::string& to) const;

    /// All peers seen on either side, sorted.
    std::vector<std::string> peers() const;
    std::size_t pair_count() const noexcept { return cells_.size(); }
    const std::map<std::pair<std::string, std::string>, RunningStats>& cells() const noexcept { return cells_; }

    void merge(const LatencyMatrix& other);

    /// Square CSV of mean latencies; the diagonal and missing pairs are empty.
    std::string to_csv() const;

private:
    std::map<std::pair<std::string, std::string>, RunningStats> cells_;
};

class LatencyMeter final : public MessageHandler {
public:
    using Clock = std::chrono::steady_clock;

    LatencyMeter(PeerScene scene, RoomClient& rooms, std::function<Clock::time_point()> clock = Clock::now,
                 EventLogger* log = nullptr);
    ~LatencyMeter() override;

    LatencyMeter(const LatencyMeter&) = delete;
    LatencyMeter& operator=(const LatencyMeter&) = delete;

    /// Sends one ping per known peer when a sampling period is due; returns pings sent.
    std::size_t tick(Clock::time_point now);
    std::size_t tick() { return tick(clock_()); }

    void set_period(std::chrono::microseconds period) { period_ = period; }

    const LatencyMatrix& matrix() const noexcept { return matrix_; }
    /// Every half-RTT sample recorded, in arrival order.
    const std::vector<double>& samples() const noexcept { return samples_; }
    std::size_t pending() const noexcept { return pending_.size(); }

    void process_message(const ReceivedMessage& message) override;

private:
    struct Pending {
        std::string peer_uuid;
        std::int64_t sent_us;
    };

    PeerScene scene_;
    RoomClient& rooms_;
    std::function<Clock::time_point()> clock_;
    EventLogger* log_;
    std::chrono::microseconds period_{std::chrono::seconds(1)};
    std::optional<Clock::time_point> next_due_;
    std::uint64_t next_id_ = 1;
    std::map<std::string, NetworkId> targets_;
    std::map<std::uint64_t, Pending> pending_;
    LatencyMatrix matrix_;
    std::vector<double> samples_;
    std::size_t added_slot_ = 0;
    std::size_t removed_slot_ = 0;
    NetworkContext context_;
};

} // namespace ubiq
