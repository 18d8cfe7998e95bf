#pragma once

// Throughput and prefix-overhead instrumentation for one peer's connections.

#include "ubiq/scene.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>

namespace ubiq {

enum class TrafficCategory { avatar, rooms, log, latency, other };

inline constexpr std::size_t kTrafficCategoryCount = 5;

std::string_view to_string(TrafficCategory category) noexcept;

/// Default attribution by component id.
TrafficCategory classify_component(ComponentId component) noexcept;

struct StatsSample {
    using Clock = std::chrono::steady_clock;

    Clock::time_point window_start;
    Clock::time_point window_end;
    std::uint64_t bytes_in = 0;
    std::uint64_t bytes_out = 0;
    std::uint64_t message_count = 0;
    std::uint64_t payload_bytes = 0;
    std::map<std::string, std::uint64_t> category_bytes;
    /// 14 * messages / framed bytes; 0 for an idle window.
    double overhead_ratio = 0.0;

    std::uint64_t bytes_total() const noexcept { return bytes_in + bytes_out; }
    Json to_json() const;
};

class StatsMonitor final : public TrafficObserver {
public:
    using Clock = StatsSample::Clock;
    using Classifier = std::function<TrafficCategory(ComponentId)>;

    explicit StatsMonitor(Clock::time_point window_start = Clock::now(), Classifier classify = classify_component);

    void on_inbound(const Frame& frame) override { count(frame, true); }
    void on_outbound(const Frame& frame) override { count(frame, false); }

    /// Closes the current window at `window_end` and starts the next one.
    StatsSample sample(Clock::time_point window_end);

private:
    void count(const Frame& frame, bool inbound);

    Classifier classify_;
    std::mutex mutex_;
    Clock::time_point window_start_;
    std::uint64_t bytes_in_ = 0;
    std::uint64_t bytes_out_ = 0;
    std::uint64_t messages_ = 0;
    std::uint64_t payload_ = 0;
    std::array<std::uint64_t, kTrafficCategoryCount> categories_{};
};

} // namespace ubiq
