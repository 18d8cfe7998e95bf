#pragma once

// The standalone rendezvous/relay: TCP and WebSocket listeners in front of a
// RoomServer, plus idle-room eviction and structured lifecycle logging.

#include "ubiq/rooms.hpp"
#include "ubiq/transport.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <mutex>

namespace ubiq {

class JsonlWriter;

struct ServerConfig {
    std::string host = "0.0.0.0";
    /// 0 binds an ephemeral port; negative disables the listener.
    int tcp_port = 8001;
    int ws_port = 8002;
    int idle_room_seconds = 60;
    std::string log_path;
    std::size_t max_message_bytes = kMaxMessageLength;
    std::optional<std::uint64_t> seed;
    std::chrono::microseconds inject_send_delay{0};

    /// Throws Error(config) on invalid or clashing ports.
    void validate() const;
};

/// Exit codes of the ubiq-server executable.
enum class ServerExit : int { clean = 0, bind_failure = 2, config_error = 3 };

class RelayServer {
public:
    explicit RelayServer(ServerConfig config);
    ~RelayServer();

    RelayServer(const RelayServer&) = delete;
    RelayServer& operator=(const RelayServer&) = delete;

    /// Binds listeners and starts serving. Throws Error(config) or Error(bind_failed).
    void start();
    /// Closes listeners and every connection; idempotent.
    void stop();

    std::uint16_t tcp_port() const noexcept;
    std::uint16_t ws_port() const noexcept;

    RoomServer& rooms() noexcept { return *rooms_; }
    /// Serves an already-established connection (e.g. one end of a loopback pair).
    void attach(const ConnectionPtr& connection) { rooms_->attach(connection); }

private:
    void log(const std::string& event, const Json& args);
    void maintenance_loop();

    ServerConfig config_;
    std::unique_ptr<JsonlWriter> log_;
    std::unique_ptr<RoomServer> rooms_;
    std::unique_ptr<IoRuntime> io_;
    Listener tcp_listener_;
    Listener ws_listener_;

    std::mutex stop_mutex_;
    std::condition_variable stop_signal_;
    bool stopping_ = false;
    bool started_ = false;
    std::thread maintenance_;
};

/// Runs a relay until `stop` becomes true. Returns the process exit code.
ServerExit run(const ServerConfig& config, const std::atomic<bool>& stop);

} // namespace ubiq
