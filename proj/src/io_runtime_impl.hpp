#pragma once

#include "ubiq/transport.hpp"

#include <boost/asio.hpp>

#include <thread>
#include <vector>

namespace ubiq {

struct IoRuntime::Impl {
    boost::asio::io_context context;
    boost::asio::executor_work_guard<boost::asio::io_context::executor_type> guard{context.get_executor()};
    std::vector<std::thread> threads;
};

namespace detail {

/// Tracks an encoded frame queued for a socket write.
struct OutboundQueue {
    std::vector<Frame> frames;
    std::size_t bytes = 0;
};

ConnectionPtr connect_tcp(IoRuntime& io, const ConnectionSpec& spec);
ConnectionPtr connect_websocket(IoRuntime& io, const ConnectionSpec& spec);
Listener listen_tcp(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor);
Listener listen_websocket(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor);

} // namespace detail
} // namespace ubiq

namespace ubiq {

struct Listener::Impl {
    virtual ~Impl() = default;
    virtual std::uint16_t port() const noexcept = 0;
    virtual void close() = 0;
};

} // namespace ubiq
