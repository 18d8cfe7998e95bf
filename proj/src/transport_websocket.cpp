#include "io_runtime_impl.hpp"
#include "ubiq/error.hpp"

#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <future>

namespace ubiq::detail {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using asio::ip::tcp;

namespace {

// One encoded message per binary frame on send; inbound frames go through the
// reframer so split or coalesced frames are accepted too.
class WebSocketConnection final : public Connection {
public:
    WebSocketConnection(asio::io_context& context, ConnectionSpec spec)
        : Connection(std::move(spec)), ws_(context), resolver_(context) {}

    WebSocketConnection(tcp::socket socket, ConnectionSpec spec)
        : Connection(std::move(spec)), ws_(std::move(socket)), resolver_(ws_.get_executor()) {}

    void begin_connect() {
        auto self = shared();
        resolver_.async_resolve(
            spec().host, std::to_string(spec().port),
            [self](boost::system::error_code ec, tcp::resolver::results_type results) {
                if (ec) {
                    self->fail("resolve failed: " + ec.message());
                    return;
                }
                asio::async_connect(
                    self->ws_.next_layer(), results, [self](boost::system::error_code ec, const tcp::endpoint&) {
                        if (ec) {
                            self->fail("connect failed: " + ec.message());
                            return;
                        }
                        boost::system::error_code ignored;
                        self->ws_.next_layer().set_option(tcp::no_delay(true), ignored);
                        self->configure();
                        const auto host = self->spec().host + ":" + std::to_string(self->spec().port);
                        self->ws_.async_handshake(host, "/", [self](boost::system::error_code ec) {
                            if (ec) {
                                self->fail("handshake failed: " + ec.message());
                                return;
                            }
                            self->on_open();
                        });
                    });
            });
    }

    void begin_accept(std::function<void(ConnectionPtr)> accepted) {
        configure();
        auto self = shared();
        ws_.async_accept([self, accepted = std::move(accepted)](boost::system::error_code ec) {
            if (ec) {
                self->fail("handshake failed: " + ec.message());
                return;
            }
            self->on_open();
            accepted(self);
        });
    }

    void close() override {
        mark_closed("closed locally");
        auto self = shared();
        asio::post(ws_.get_executor(), [self] {
            if (self->closing_ || !self->ws_.is_open()) {
                self->shutdown_socket();
                return;
            }
            self->closing_ = true;
            self->ws_.async_close(websocket::close_code::normal,
                                  [self](boost::system::error_code) { self->shutdown_socket(); });
        });
    }

protected:
    void transmit(const Frame& frame) override {
        bool overflow = false;
        {
            std::lock_guard lock(write_mutex_);
            const auto limit = outbound_limit();
            if (limit != 0 && queued_bytes_ + frame.size() > limit) {
                overflow = true;
            } else {
                queued_bytes_ += frame.size();
            }
        }
        auto self = shared();
        if (overflow) {
            asio::post(ws_.get_executor(), [self] { self->fail("outbound buffer limit exceeded"); });
            return;
        }
        asio::post(ws_.get_executor(), [self, frame] {
            self->queue_.push_back(frame);
            if (self->queue_.size() == 1 && self->state() == ConnectionState::open) {
                self->write();
            }
        });
    }

private:
    std::shared_ptr<WebSocketConnection> shared() {
        return std::static_pointer_cast<WebSocketConnection>(shared_from_this());
    }

    void configure() {
        ws_.binary(true);
        ws_.read_message_max(kMaxMessageLength + kLengthFieldSize);
    }

    void on_open() {
        mark_open();
        read();
        if (!queue_.empty()) {
            write();
        }
    }

    void read() {
        auto self = shared();
        ws_.async_read(read_buffer_, [self](boost::system::error_code ec, std::size_t) {
            if (ec) {
                self->fail(ec == websocket::error::closed ? "closed by peer" : "read failed: " + ec.message());
                return;
            }
            const auto data = self->read_buffer_.cdata();
            self->deliver(ByteView(static_cast<const std::uint8_t*>(data.data()), data.size()));
            self->read_buffer_.consume(self->read_buffer_.size());
            if (self->state() != ConnectionState::closed) {
                self->read();
            }
        });
    }

    // Runs on the executor; queue_.front() is the frame in flight.
    void write() {
        auto self = shared();
        const auto bytes = queue_.front().bytes();
        ws_.async_write(asio::buffer(bytes.data(), bytes.size()),
                        [self](boost::system::error_code ec, std::size_t) {
                            {
                                std::lock_guard lock(self->write_mutex_);
                                self->queued_bytes_ -= self->queue_.front().size();
                            }
                            self->queue_.pop_front();
                            if (ec) {
                                self->fail("write failed: " + ec.message());
                                return;
                            }
                            if (!self->queue_.empty() && !self->closing_) {
                                self->write();
                            }
                        });
    }

    void fail(std::string reason) {
        mark_closed(std::move(reason));
        shutdown_socket();
    }

    void shutdown_socket() {
        boost::system::error_code ignored;
        resolver_.cancel();
        auto& socket = ws_.next_layer();
        if (socket.is_open()) {
            socket.shutdown(tcp::socket::shutdown_both, ignored);
            socket.close(ignored);
        }
    }

    websocket::stream<tcp::socket> ws_;
    tcp::resolver resolver_;
    beast::flat_buffer read_buffer_;
    std::deque<Frame> queue_;
    bool closing_ = false;

    std::mutex write_mutex_;
    std::size_t queued_bytes_ = 0;
};

} // namespace

class WebSocketListenerImpl final : public Listener::Impl,
                                    public std::enable_shared_from_this<WebSocketListenerImpl> {
public:
    WebSocketListenerImpl(asio::io_context& context, const ConnectionSpec& spec, Acceptor acceptor)
        : context_(context), acceptor_(context), on_accept_(std::move(acceptor)) {
        boost::system::error_code ec;
        const auto address = asio::ip::make_address(spec.host == "localhost" ? "127.0.0.1" : spec.host, ec);
        if (ec) {
            throw Error(Errc::bind_failed, "bad listen address '" + spec.host + "'");
        }
        const tcp::endpoint endpoint(address, spec.port);
        acceptor_.open(endpoint.protocol(), ec);
        if (!ec) {
            acceptor_.set_option(tcp::acceptor::reuse_address(true), ec);
            acceptor_.bind(endpoint, ec);
        }
        if (!ec) {
            acceptor_.listen(asio::socket_base::max_listen_connections, ec);
        }
        if (ec) {
            throw Error(Errc::bind_failed, spec.host + ":" + std::to_string(spec.port) + ": " + ec.message());
        }
        port_ = acceptor_.local_endpoint().port();
    }

    void start() { accept(); }

    std::uint16_t port() const noexcept override { return port_; }

    void close() override {
        auto self = shared_from_this();
        if (context_.get_executor().running_in_this_thread() || context_.stopped()) {
            boost::system::error_code ignored;
            acceptor_.close(ignored);
            return;
        }
        std::promise<void> done;
        asio::post(context_, [&] {
            boost::system::error_code ignored;
            self->acceptor_.close(ignored);
            done.set_value();
        });
        done.get_future().wait();
    }

private:
    void accept() {
        auto self = shared_from_this();
        acceptor_.async_accept([self](boost::system::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec == asio::error::operation_aborted || !self->acceptor_.is_open()) {
                    return;
                }
            } else {
                boost::system::error_code ignored;
                socket.set_option(tcp::no_delay(true), ignored);
                auto remote = socket.remote_endpoint(ignored);
                auto conn = std::make_shared<WebSocketConnection>(
                    std::move(socket), ConnectionSpec::websocket(remote.address().to_string(), remote.port()));
                conn->begin_accept(self->on_accept_);
            }
            self->accept();
        });
    }

    asio::io_context& context_;
    tcp::acceptor acceptor_;
    Acceptor on_accept_;
    std::uint16_t port_ = 0;
};

ConnectionPtr connect_websocket(IoRuntime& io, const ConnectionSpec& spec) {
    auto conn = std::make_shared<WebSocketConnection>(io.impl().context, spec);
    conn->begin_connect();
    return conn;
}

Listener listen_websocket(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor) {
    auto impl = std::make_shared<WebSocketListenerImpl>(io.impl().context, spec, std::move(acceptor));
    impl->start();
    return Listener(impl);
}

} // namespace ubiq::detail
