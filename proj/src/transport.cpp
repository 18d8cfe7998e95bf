#include "ubiq/transport.hpp"

#include "io_runtime_impl.hpp"
#include "ubiq/error.hpp"

#include <charconv>
#include <queue>

namespace ubiq {

namespace {

std::atomic<std::uint64_t> next_connection_id{1};

} // namespace

/// Timer thread that runs deferred work in due-time order (FIFO for ties).
class DelayLine {
public:
    using Clock = std::chrono::steady_clock;

    DelayLine() : worker_([this] { run(); }) {}

    ~DelayLine() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        worker_.join();
    }

    static std::shared_ptr<DelayLine> shared() {
        static std::shared_ptr<DelayLine> line = std::make_shared<DelayLine>();
        return line;
    }

    void schedule(Clock::time_point due, std::function<void()> task) {
        {
            std::lock_guard lock(mutex_);
            tasks_.push(Task{due, seq_++, std::move(task)});
        }
        wake_.notify_one();
    }

private:
    struct Task {
        Clock::time_point due;
        std::uint64_t seq;
        std::function<void()> fn;

        bool operator>(const Task& other) const {
            return due != other.due ? due > other.due : seq > other.seq;
        }
    };

    void run() {
        std::unique_lock lock(mutex_);
        while (!stopping_) {
            if (tasks_.empty()) {
                wake_.wait(lock);
                continue;
            }
            const auto due = tasks_.top().due;
            if (Clock::now() < due) {
                wake_.wait_until(lock, due);
                continue;
            }
            auto fn = std::move(const_cast<Task&>(tasks_.top()).fn);
            tasks_.pop();
            lock.unlock();
            fn();
            lock.lock();
        }
    }

    std::mutex mutex_;
    std::condition_variable wake_;
    std::priority_queue<Task, std::vector<Task>, std::greater<>> tasks_;
    std::uint64_t seq_ = 0;
    bool stopping_ = false;
    std::thread worker_;
};

ConnectionSpec ConnectionSpec::parse(std::string_view endpoint, TransportKind kind) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw Error(Errc::config, "expected host:port, got '" + std::string(endpoint) + "'");
    }
    unsigned port = 0;
    const auto digits = endpoint.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || port == 0 || port > 65535) {
        throw Error(Errc::config, "bad port in '" + std::string(endpoint) + "'");
    }
    return {kind, std::string(endpoint.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

Connection::Connection(ConnectionSpec spec) : id_(next_connection_id++), spec_(std::move(spec)) {}

Connection::~Connection() = default;

std::string Connection::close_reason() const {
    std::lock_guard lock(mutex_);
    return close_reason_;
}

void Connection::start(Handlers handlers) {
    std::lock_guard deliver_lock(deliver_mutex_);
    std::vector<Frame> pending;
    bool fire_open = false;
    bool fire_close = false;
    std::string reason;
    {
        std::lock_guard lock(mutex_);
        handlers_ = std::move(handlers);
        started_ = true;
        pending.swap(pending_);
        fire_open = std::exchange(open_pending_, false);
        fire_close = std::exchange(close_pending_, false);
        reason = close_reason_;
    }
    if (fire_open && handlers_.on_open) {
        handlers_.on_open();
    }
    for (const auto& frame : pending) {
        if (handlers_.on_frame) {
            handlers_.on_frame(frame);
        }
    }
    if (fire_close && handlers_.on_close) {
        handlers_.on_close(reason);
    }
}

void Connection::send(const Frame& frame) {
    if (state() == ConnectionState::closed) {
        return;
    }
    if (send_delay_.count() > 0) {
        auto self = shared_from_this();
        delay_line_->schedule(DelayLine::Clock::now() + send_delay_,
                              [self, frame] {
                                  if (self->state() != ConnectionState::closed) {
                                      self->transmit(frame);
                                  }
                              });
        return;
    }
    transmit(frame);
}

void Connection::set_send_delay(std::chrono::microseconds delay) {
    send_delay_ = delay;
    if (delay.count() > 0 && !delay_line_) {
        delay_line_ = DelayLine::shared();
    }
}

bool Connection::wait_open(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    state_changed_.wait_for(lock, timeout, [this] { return state() != ConnectionState::connecting; });
    return state() == ConnectionState::open;
}

void Connection::dispatch_frames(std::vector<Frame>& frames) {
    bool started = false;
    {
        std::lock_guard lock(mutex_);
        started = started_;
        if (!started) {
            pending_.insert(pending_.end(), frames.begin(), frames.end());
            return;
        }
    }
    for (const auto& frame : frames) {
        if (state() == ConnectionState::closed) {
            return;
        }
        if (handlers_.on_frame) {
            handlers_.on_frame(frame);
        }
    }
}

void Connection::deliver(ByteView bytes) {
    std::string error;
    {
        std::lock_guard deliver_lock(deliver_mutex_);
        if (state() == ConnectionState::closed) {
            return;
        }
        std::vector<Frame> frames;
        try {
            frames = reader_.feed(bytes);
        } catch (const Error& e) {
            error = e.what();
        }
        dispatch_frames(frames);
    }
    if (!error.empty()) {
        {
            std::lock_guard lock(mutex_);
            if (close_reason_.empty()) {
                close_reason_ = error;
            }
        }
        close();
    }
}

void Connection::deliver_frame(const Frame& frame) {
    std::lock_guard deliver_lock(deliver_mutex_);
    if (state() == ConnectionState::closed) {
        return;
    }
    std::vector<Frame> frames{frame};
    dispatch_frames(frames);
}

void Connection::mark_open() {
    auto expected = ConnectionState::connecting;
    if (!state_.compare_exchange_strong(expected, ConnectionState::open)) {
        return;
    }
    bool fire = false;
    {
        std::lock_guard lock(mutex_);
        if (started_) {
            fire = true;
        } else {
            open_pending_ = true;
        }
    }
    state_changed_.notify_all();
    if (fire && handlers_.on_open) {
        handlers_.on_open();
    }
}

void Connection::mark_closed(std::string reason) {
    if (state_.exchange(ConnectionState::closed) == ConnectionState::closed) {
        return;
    }
    bool fire = false;
    std::string final_reason;
    {
        std::lock_guard lock(mutex_);
        if (close_reason_.empty()) {
            close_reason_ = std::move(reason);
        }
        final_reason = close_reason_;
        if (started_) {
            fire = true;
        } else {
            close_pending_ = true;
        }
    }
    state_changed_.notify_all();
    if (fire && handlers_.on_close) {
        handlers_.on_close(final_reason);
    }
}

namespace {

class LoopbackConnection final : public Connection {
public:
    LoopbackConnection() : Connection(ConnectionSpec::loopback()) {}

    void link(const std::shared_ptr<LoopbackConnection>& peer) {
        peer_ = peer;
        mark_open();
    }

    void close() override {
        mark_closed("closed locally");
        if (auto peer = peer_.lock()) {
            peer->mark_closed("closed by peer");
        }
    }

protected:
    void transmit(const Frame& frame) override {
        if (auto peer = peer_.lock()) {
            peer->deliver_frame(frame);
        }
    }

private:
    std::weak_ptr<LoopbackConnection> peer_;
};

} // namespace

std::pair<ConnectionPtr, ConnectionPtr> loopback_pair(LoopbackOptions options) {
    auto a = std::make_shared<LoopbackConnection>();
    auto b = std::make_shared<LoopbackConnection>();
    a->link(b);
    b->link(a);
    a->set_send_delay(options.one_way_delay);
    b->set_send_delay(options.one_way_delay);
    return {a, b};
}

IoRuntime::IoRuntime(unsigned threads) : impl_(std::make_unique<Impl>()) {
    for (unsigned i = 0; i < std::max(1u, threads); ++i) {
        impl_->threads.emplace_back([ctx = &impl_->context] { ctx->run(); });
    }
}

IoRuntime::~IoRuntime() {
    impl_->guard.reset();
    impl_->context.stop();
    for (auto& thread : impl_->threads) {
        thread.join();
    }
}

ConnectionPtr connect(IoRuntime& io, const ConnectionSpec& spec) {
    switch (spec.kind) {
    case TransportKind::tcp: return detail::connect_tcp(io, spec);
    case TransportKind::websocket: return detail::connect_websocket(io, spec);
    case TransportKind::loopback: break;
    }
    throw Error(Errc::config, "loopback connections are created with loopback_pair()");
}

Listener listen(IoRuntime& io, const ConnectionSpec& spec, Acceptor acceptor) {
    switch (spec.kind) {
    case TransportKind::tcp: return detail::listen_tcp(io, spec, std::move(acceptor));
    case TransportKind::websocket: return detail::listen_websocket(io, spec, std::move(acceptor));
    case TransportKind::loopback: break;
    }
    throw Error(Errc::config, "cannot listen on a loopback spec");
}

Listener::Listener(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
Listener::Listener(Listener&&) noexcept = default;
Listener& Listener::operator=(Listener&& other) noexcept {
    if (this != &other) {
        close();
        impl_ = std::move(other.impl_);
    }
    return *this;
}
Listener::~Listener() { close(); }

std::uint16_t Listener::port() const noexcept { return impl_ ? impl_->port() : 0; }

void Listener::close() {
    if (impl_) {
        impl_->close();
        impl_.reset();
    }
}

} // namespace ubiq
