#pragma once

// Structured event logging. Every event is one JSON line
//
//   {"ticks":<µs>,"peer":"<uuid>","event":"<name>","args":{...}}
//
// written locally and, when a collector has announced itself, also streamed
// byte-identical to the collecting peer.

#include "ubiq/rooms.hpp"
#include "ubiq/scene.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ubiq {

/// Microseconds on the local monotonic clock.
std::int64_t monotonic_ticks();

struct LogEvent {
    std::int64_t ticks = 0;
    std::string peer;
    std::string event;
    Json args = Json::object();

    std::string to_line() const;
    /// Throws Error(parse_error) if a required field is missing.
    static LogEvent parse(std::string_view line);
};

/// Append-only JSONL file. Thread-safe. A write failure is reported once
/// through `error()` and the sink; later writes are skipped.
class JsonlWriter {
public:
    explicit JsonlWriter(std::string path, std::function<void(const std::string&)> on_error = {});

    void write_line(std::string_view line);
    const std::string& path() const noexcept { return path_; }
    std::optional<std::string> error() const;
    std::size_t lines_written() const;

private:
    std::string path_;
    std::function<void(const std::string&)> on_error_;
    mutable std::mutex mutex_;
    std::ofstream out_;
    std::optional<std::string> error_;
    std::size_t lines_ = 0;
};

class LogCollector;

/// Per-peer event emitter. Listens on (3, 4) for collector announcements.
class EventLogger final : public MessageHandler {
public:
    EventLogger(PeerScene scene, std::string peer_uuid, std::string path = {});

    EventLogger(const EventLogger&) = delete;
    EventLogger& operator=(const EventLogger&) = delete;

    /// Returns the emitted line.
    std::string log(const std::string& event, const Json& args = Json::object());

    const std::string& peer_uuid() const noexcept { return peer_uuid_; }
    std::size_t emitted() const noexcept { return emitted_; }
    std::optional<std::string> write_error() const { return file_ ? file_->error() : std::nullopt; }
    std::optional<NetworkId> collector() const noexcept { return remote_collector_; }

    /// Routes lines straight to a collector on the same peer.
    void set_local_collector(LogCollector* collector);

    void process_message(const ReceivedMessage& message) override;

private:
    PeerScene scene_;
    std::string peer_uuid_;
    std::unique_ptr<JsonlWriter> file_;
    std::int64_t last_ticks_ = 0;
    std::size_t emitted_ = 0;
    std::optional<NetworkId> remote_collector_;
    LogCollector* local_collector_ = nullptr;
    NetworkContext context_;
};

/// Gathers lines from every emitter in the room at (scene id, 6).
class LogCollector final : public MessageHandler {
public:
    LogCollector(PeerScene scene, RoomClient& rooms, EventLogger* local = nullptr);
    ~LogCollector() override;

    LogCollector(const LogCollector&) = delete;
    LogCollector& operator=(const LogCollector&) = delete;

    /// Announces this peer as the collector; re-announces to late joiners.
    void start();
    bool active() const noexcept { return active_; }

    /// Writes all collected lines sorted by (peer, ticks); returns the count.
    std::size_t flush(const std::string& path) const;
    std::vector<std::string> sorted_lines() const;
    std::size_t size() const noexcept { return lines_.size(); }

    void accept_line(std::string line);
    void process_message(const ReceivedMessage& message) override;

private:
    void announce();

    PeerScene scene_;
    RoomClient& rooms_;
    EventLogger* local_;
    bool active_ = false;
    std::size_t peer_added_slot_ = 0;
    std::vector<std::string> lines_;
    NetworkContext context_;
};

} // namespace ubiq
