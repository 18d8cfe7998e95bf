#include "ubiq/relay_server.hpp"

#include "ubiq/error.hpp"
#include "ubiq/event_log.hpp"

#include <thread>

namespace ubiq {

void ServerConfig::validate() const {
    auto check_port = [](int port, const char* name) {
        if (port > 65535) {
            throw Error(Errc::config, std::string(name) + " out of range: " + std::to_string(port));
        }
    };
    check_port(tcp_port, "tcp port");
    check_port(ws_port, "websocket port");
    if (tcp_port < 0 && ws_port < 0) {
        throw Error(Errc::config, "no listener enabled");
    }
    if (tcp_port > 0 && tcp_port == ws_port) {
        throw Error(Errc::config, "tcp and websocket ports must differ");
    }
    if (idle_room_seconds < 0) {
        throw Error(Errc::config, "idle room seconds must be non-negative");
    }
    if (max_message_bytes < kAddressSize || max_message_bytes > kMaxMessageLength) {
        throw Error(Errc::config, "max message bytes must be within [10, 1048576]");
    }
}

RelayServer::RelayServer(ServerConfig config) : config_(std::move(config)) {
    config_.validate();
    if (!config_.log_path.empty()) {
        log_ = std::make_unique<JsonlWriter>(config_.log_path);
    }
    RoomServerOptions options;
    options.idle_room_timeout = std::chrono::seconds(config_.idle_room_seconds);
    options.seed = config_.seed;
    options.inject_send_delay = config_.inject_send_delay;
    options.max_message_bytes = config_.max_message_bytes;
    options.on_event = [this](const std::string& event, const Json& args) { log(event, args); };
    rooms_ = std::make_unique<RoomServer>(std::move(options));
}

RelayServer::~RelayServer() { stop(); }

void RelayServer::log(const std::string& event, const Json& args) {
    if (log_) {
        log_->write_line(LogEvent{monotonic_ticks(), "server", event, args}.to_line());
    }
}

void RelayServer::start() {
    if (started_) {
        return;
    }
    io_ = std::make_unique<IoRuntime>(1);
    auto accept = [this](ConnectionPtr connection) { rooms_->attach(connection); };
    if (config_.tcp_port >= 0) {
        tcp_listener_ = listen(*io_, ConnectionSpec::tcp(config_.host, static_cast<std::uint16_t>(config_.tcp_port)),
                               accept);
    }
    if (config_.ws_port >= 0) {
        ws_listener_ = listen(
            *io_, ConnectionSpec::websocket(config_.host, static_cast<std::uint16_t>(config_.ws_port)), accept);
    }
    started_ = true;
    maintenance_ = std::thread([this] { maintenance_loop(); });
    log("ServerStarted", Json{{"tcp_port", tcp_port()}, {"ws_port", ws_port()}});
}

void RelayServer::maintenance_loop() {
    std::unique_lock lock(stop_mutex_);
    while (!stopping_) {
        stop_signal_.wait_for(lock, std::chrono::seconds(1));
        if (stopping_) {
            break;
        }
        lock.unlock();
        rooms_->evict_idle(RoomServer::Clock::now());
        lock.lock();
    }
}

void RelayServer::stop() {
    {
        std::lock_guard lock(stop_mutex_);
        if (stopping_ || !started_) {
            stopping_ = true;
            return;
        }
        stopping_ = true;
    }
    stop_signal_.notify_all();
    if (maintenance_.joinable()) {
        maintenance_.join();
    }
    tcp_listener_.close();
    ws_listener_.close();
    const auto stats = rooms_->stats();
    rooms_->close_all();
    // Give queued close frames a moment to flush before the event loop stops.
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    io_.reset();
    log("ServerStopped", Json{{"connections_closed", stats.connections}, {"rooms", stats.rooms}});
}

std::uint16_t RelayServer::tcp_port() const noexcept { return tcp_listener_.port(); }

std::uint16_t RelayServer::ws_port() const noexcept { return ws_listener_.port(); }

ServerExit run(const ServerConfig& config, const std::atomic<bool>& stop) {
    std::unique_ptr<RelayServer> server;
    try {
        server = std::make_unique<RelayServer>(config);
        server->start();
    } catch (const Error& e) {
        std::fprintf(stderr, "ubiq-server: %s\n", e.what());
        return e.code() == Errc::bind_failed ? ServerExit::bind_failure : ServerExit::config_error;
    }
    std::fprintf(stderr, "ubiq-server: listening tcp=%u ws=%u\n", server->tcp_port(), server->ws_port());
    while (!stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server->stop();
    return ServerExit::clean;
}

} // namespace ubiq
