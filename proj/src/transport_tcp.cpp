#include "io_runtime_impl.hpp"
#include "ubiq/error.hpp"

#include <array>
#include <future>

namespace ubiq::detail {

namespace asio = boost::asio;
using asio::ip::tcp;

namespace {

class TcpConnection final : public Connection {
public:
    TcpConnection(asio::io_context& context, ConnectionSpec spec)
        : Connection(std::move(spec)), socket_(context), resolver_(context) {}

    TcpConnection(tcp::socket socket, ConnectionSpec spec)
        : Connection(std::move(spec)), socket_(std::move(socket)), resolver_(socket_.get_executor()) {}

    void begin_connect() {
        auto self = shared();
        resolver_.async_resolve(spec().host, std::to_string(spec().port),
                                [self](boost::system::error_code ec, tcp::resolver::results_type results) {
                                    if (ec) {
                                        self->fail("resolve failed: " + ec.message());
                                        return;
                                    }
                                    asio::async_connect(self->socket_, results,
                                                        [self](boost::system::error_code ec, const tcp::endpoint&) {
                                                            if (ec) {
                                                                self->fail("connect failed: " + ec.message());
                                                                return;
                                                            }
                                                            self->on_connected();
                                                        });
                                });
    }

    void on_connected() {
        boost::system::error_code ignored;
        socket_.set_option(tcp::no_delay(true), ignored);
        mark_open();
        read();
        bool kick = false;
        {
            std::lock_guard lock(write_mutex_);
            if (!queue_.empty() && !write_in_flight_) {
                write_in_flight_ = true;
                kick = true;
            }
        }
        if (kick) {
            write();
        }
    }

    void open_accepted() {
        mark_open();
        read();
    }

    void close() override {
        mark_closed("closed locally");
        auto self = shared();
        asio::post(socket_.get_executor(), [self] { self->shutdown_socket(); });
    }

protected:
    void transmit(const Frame& frame) override {
        bool kick = false;
        bool overflow = false;
        {
            std::lock_guard lock(write_mutex_);
            const auto limit = outbound_limit();
            if (limit != 0 && queued_bytes_ + frame.size() > limit) {
                overflow = true;
            } else {
                queue_.push_back(frame);
                queued_bytes_ += frame.size();
                if (!write_in_flight_ && state() == ConnectionState::open) {
                    write_in_flight_ = true;
                    kick = true;
                }
            }
        }
        if (overflow) {
            auto self = shared();
            asio::post(socket_.get_executor(), [self] { self->fail("outbound buffer limit exceeded"); });
            return;
        }
        if (kick) {
            auto self = shared();
            asio::post(socket_.get_executor(), [self] { self->write(); });
        }
    }

private:
    std::shared_ptr<TcpConnection> shared() { return std::static_pointer_cast<TcpConnection>(shared_from_this()); }

    void read() {
        auto self = shared();
        socket_.async_read_some(asio::buffer(read_buffer_), [self](boost::system::error_code ec, std::size_t n) {
            if (ec) {
                self->fail(ec == asio::error::eof ? "closed by peer" : "read failed: " + ec.message());
                return;
            }
            self->deliver(ByteView(self->read_buffer_.data(), n));
            if (self->state() != ConnectionState::closed) {
                self->read();
            }
        });
    }

    void write() {
        {
            std::lock_guard lock(write_mutex_);
            writing_.swap(queue_);
        }
        buffers_.clear();
        buffers_.reserve(writing_.size());
        for (const auto& frame : writing_) {
            buffers_.emplace_back(frame.bytes().data(), frame.bytes().size());
        }
        auto self = shared();
        asio::async_write(socket_, buffers_, [self](boost::system::error_code ec, std::size_t written) {
            bool more = false;
            {
                std::lock_guard lock(self->write_mutex_);
                self->queued_bytes_ -= written;
                self->writing_.clear();
                more = !self->queue_.empty();
                self->write_in_flight_ = more && !ec;
            }
            if (ec) {
                self->fail("write failed: " + ec.message());
                return;
            }
            if (more) {
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
        if (socket_.is_open()) {
            socket_.shutdown(tcp::socket::shutdown_both, ignored);
            socket_.close(ignored);
        }
    }

    tcp::socket socket_;
    tcp::resolver resolver_;
    std::array<std::uint8_t, 64 * 1024> read_buffer_{};

    std::mutex write_mutex_;
    std::vector<Frame> queue_;
    std::vector<Frame> writing_;
    std::vector<asio::const_buffer> buffers_;
    std::size_t queued_bytes_ = 0;
    bool write_in_flight_ = false;
};

template <typename Fn>
void run_on(asio::io_context& context, Fn fn) {
    if (context.get_executor().running_in_this_thread() || context.stopped()) {
        fn();
        return;
    }
    std::promise<void> done;
    asio::post(context, [&] {
        fn();
        done.set_value();
    });
    done.get_future().wait();
}

} // namespace

class TcpListenerImpl final : public Listener::Impl, public std::enable_shared_from_this<TcpListenerImpl> {
public:
    TcpListenerImpl(asio::io_context& context, const ConnectionSpec& spec, Acceptor acceptor)
        : context_(context), acceptor_(context), on_accept_(std::move(acceptor)), spec_(spec) {
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
        run_on(context_, [self] {
            boost::system::error_code ignored;
            self->acceptor_.close(ignored);
        });
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
                auto conn = std::make_shared<TcpConnection>(
                    std::move(socket), ConnectionSpec::tcp(remote.address().to_string(), remote.port()));
                conn->open_accepted();
                self->on_accept_(conn);
            }
            self->accept();
        });
    }

    asio::io_context& context_;
    tcp::acceptor acceptor_;
    Acceptor on_accept_;
    ConnectionSpec spec_;
    std::uint16_t port_ = 0;
};

ConnectionPtr connect_tcp(IoRuntime& io, const ConnectionSpec& spec) {
    auto conn = std::make_shared<TcpConnection>(io.impl().context, spec);
    conn->begin_connect();
    return conn;
}

Listener listen_tcp(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor) {
    auto impl = std::make_shared<TcpListenerImpl>(io.impl().context, spec, std::move(acceptor));
    impl->start();
    return Listener(impl);
}

} // namespace ubiq::detail
