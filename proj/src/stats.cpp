#include "ubiq/stats.hpp"

namespace ubiq {

std::string_view to_string(TrafficCategory category) noexcept {
    switch (category) {
    case TrafficCategory::avatar: return "avatar";
    case TrafficCategory::rooms: return "rooms";
    case TrafficCategory::log: return "log";
    case TrafficCategory::latency: return "latency";
    case TrafficCategory::other: return "other";
    }
    return "other";
}

TrafficCategory classify_component(ComponentId component) noexcept {
    if (component == ids::kAvatarPose) {
        return TrafficCategory::avatar;
    }
    if (component == ids::kRoomServer || component == ids::kRoomClient) {
        return TrafficCategory::rooms;
    }
    if (component == ids::kLogEmitter || component == ids::kLogCollector) {
        return TrafficCategory::log;
    }
    if (component == ids::kLatencyMeter) {
        return TrafficCategory::latency;
    }
    return TrafficCategory::other;
}

Json StatsSample::to_json() const {
    Json categories = Json::object();
    for (const auto& [name, bytes] : category_bytes) {
        categories[name] = bytes;
    }
    const auto window_us =
        std::chrono::duration_cast<std::chrono::microseconds>(window_end - window_start).count();
    return Json{{"window_us", window_us},
                {"bytes_in", bytes_in},
                {"bytes_out", bytes_out},
                {"bytes_total", bytes_total()},
                {"messages", message_count},
                {"categories", categories},
                {"overhead", overhead_ratio}};
}

StatsMonitor::StatsMonitor(Clock::time_point window_start, Classifier classify)
    : classify_(std::move(classify)), window_start_(window_start) {}

void StatsMonitor::count(const Frame& frame, bool inbound) {
    const auto category = static_cast<std::size_t>(classify_(frame.address().component));
    std::lock_guard lock(mutex_);
    (inbound ? bytes_in_ : bytes_out_) += frame.size();
    ++messages_;
    payload_ += frame.payload().size();
    categories_[category] += frame.size();
}

StatsSample StatsMonitor::sample(Clock::time_point window_end) {
    std::lock_guard lock(mutex_);
    StatsSample out;
    out.window_start = window_start_;
    out.window_end = window_end;
    out.bytes_in = bytes_in_;
    out.bytes_out = bytes_out_;
    out.message_count = messages_;
    out.payload_bytes = payload_;
    for (std::size_t i = 0; i < kTrafficCategoryCount; ++i) {
        out.category_bytes[std::string(to_string(static_cast<TrafficCategory>(i)))] = categories_[i];
    }
    const auto framed = bytes_in_ + bytes_out_;
    out.overhead_ratio =
        framed == 0 ? 0.0 : static_cast<double>(kPrefixSize * messages_) / static_cast<double>(framed);

    window_start_ = window_end;
    bytes_in_ = bytes_out_ = messages_ = payload_ = 0;
    categories_.fill(0);
    return out;
}

} // namespace ubiq
