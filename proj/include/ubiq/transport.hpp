#pragma once

// Connections carry framed byte streams between peers. Three kinds exist:
// raw TCP, WebSocket (binary frames) and an in-process loopback pair. All of
// them reframe inbound bytes, so delivery never depends on how the underlying
// stream was fragmented.

#include "ubiq/wire.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ubiq {

enum class TransportKind { tcp, websocket, loopback };

struct ConnectionSpec {
    TransportKind kind = TransportKind::loopback;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    static ConnectionSpec tcp(std::string host, std::uint16_t port) {
        return {TransportKind::tcp, std::move(host), port};
    }
    static ConnectionSpec websocket(std::string host, std::uint16_t port) {
        return {TransportKind::websocket, std::move(host), port};
    }
    static ConnectionSpec loopback() { return {}; }

    /// Parses "host:port". Throws Error(config).
    static ConnectionSpec parse(std::string_view endpoint, TransportKind kind = TransportKind::tcp);
};

enum class ConnectionState { connecting, open, closed };

class DelayLine;

class Connection : public std::enable_shared_from_this<Connection> {
public:
    struct Handlers {
        std::function<void(const Frame&)> on_frame;
        std::function<void()> on_open;
        /// Fired exactly once; also reports connection failures.
        std::function<void(std::string_view reason)> on_close;
    };

    virtual ~Connection();

    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    std::uint64_t id() const noexcept { return id_; }
    const ConnectionSpec& spec() const noexcept { return spec_; }
    ConnectionState state() const noexcept { return state_.load(); }
    std::string close_reason() const;

    /// Installs handlers and begins delivery. Frames that arrived earlier are
    /// delivered first, in order.
    void start(Handlers handlers);

    /// Thread-safe, never blocks on I/O and never runs this connection's own
    /// handlers on the calling thread.
    void send(const Frame& frame);

    /// Thread-safe and idempotent.
    virtual void close() = 0;

    /// Outbound bytes queued beyond this limit close the connection.
    void set_outbound_limit(std::size_t bytes) noexcept { outbound_limit_ = bytes; }

    /// Holds every outbound frame for `delay` before transmitting (fault injection).
    void set_send_delay(std::chrono::microseconds delay);

    /// Blocks until the connection leaves the connecting state or the timeout passes.
    bool wait_open(std::chrono::milliseconds timeout) const;

protected:
    explicit Connection(ConnectionSpec spec);

    virtual void transmit(const Frame& frame) = 0;

    /// Reframes raw inbound bytes; a malformed stream closes the connection.
    void deliver(ByteView bytes);
    /// Delivers an already-framed message (loopback fast path).
    void deliver_frame(const Frame& frame);
    void mark_open();
    void mark_closed(std::string reason);

    std::size_t outbound_limit() const noexcept { return outbound_limit_; }

private:
    void dispatch_frames(std::vector<Frame>& frames);

    const std::uint64_t id_;
    const ConnectionSpec spec_;
    std::atomic<ConnectionState> state_{ConnectionState::connecting};
    std::atomic<std::size_t> outbound_limit_{0};

    mutable std::mutex mutex_;
    mutable std::condition_variable state_changed_;
    Handlers handlers_;
    bool started_ = false;
    bool open_pending_ = false;
    bool close_pending_ = false;
    std::string close_reason_;
    std::vector<Frame> pending_;

    std::mutex deliver_mutex_;
    FrameReader reader_;

    std::chrono::microseconds send_delay_{0};
    std::shared_ptr<DelayLine> delay_line_;
};

using ConnectionPtr = std::shared_ptr<Connection>;

/// Owns the I/O event loop threads that drive TCP and WebSocket connections.
class IoRuntime {
public:
    explicit IoRuntime(unsigned threads = 1);
    ~IoRuntime();

    IoRuntime(const IoRuntime&) = delete;
    IoRuntime& operator=(const IoRuntime&) = delete;

    struct Impl;
    Impl& impl() noexcept { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

/// Starts connecting asynchronously. Failures surface through on_close, never as exceptions.
ConnectionPtr connect(IoRuntime& io, const ConnectionSpec& spec);

using Acceptor = std::function<void(ConnectionPtr)>;

/// Accepting endpoint; closes on destruction.
class Listener {
public:
    Listener() = default;
    Listener(Listener&&) noexcept;
    Listener& operator=(Listener&&) noexcept;
    ~Listener();

    /// Actual bound port (useful when listening on port 0).
    std::uint16_t port() const noexcept;
    void close();

    struct Impl;
    explicit Listener(std::shared_ptr<Impl> impl);

private:
    std::shared_ptr<Impl> impl_;
};

/// Binds and accepts tcp or websocket connections. Throws Error(bind_failed).
Listener listen(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor);

struct LoopbackOptions {
    /// One-way delay applied in both directions.
    std::chrono::microseconds one_way_delay{0};
};

/// Two cross-wired in-process connections; no network I/O.
std::pair<ConnectionPtr, ConnectionPtr> loopback_pair(LoopbackOptions options = {});

} // namespace ubiq
