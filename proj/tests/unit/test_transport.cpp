#include "test_support.hpp"

#include "ubiq/error.hpp"
#include "ubiq/transport.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <set>
#include <thread>

using namespace ubiq;
namespace asio = boost::asio;
namespace beast = boost::beast;
using tcp = asio::ip::tcp;
using namespace std::chrono_literals;

namespace {

// Thread-safe sink for frames and close events of one connection.
struct Sink {
    std::mutex mutex;
    std::condition_variable changed;
    std::vector<Bytes> frames;
    std::vector<std::chrono::steady_clock::time_point> arrivals;
    bool closed = false;
    std::string reason;

    Connection::Handlers handlers() {
        Connection::Handlers h;
        h.on_frame = [this](const Frame& f) {
            std::lock_guard lock(mutex);
            frames.emplace_back(f.bytes().begin(), f.bytes().end());
            arrivals.push_back(std::chrono::steady_clock::now());
            changed.notify_all();
        };
        h.on_close = [this](std::string_view r) {
            std::lock_guard lock(mutex);
            closed = true;
            reason = std::string(r);
            changed.notify_all();
        };
        return h;
    }

    bool wait_frames(std::size_t n, std::chrono::milliseconds timeout = 5s) {
        std::unique_lock lock(mutex);
        return changed.wait_for(lock, timeout, [&] { return frames.size() >= n; });
    }

    bool wait_closed(std::chrono::milliseconds timeout = 5s) {
        std::unique_lock lock(mutex);
        return changed.wait_for(lock, timeout, [&] { return closed; });
    }
};

// Accepted server-side connections, collected from the acceptor callback.
struct Accepted {
    std::mutex mutex;
    std::condition_variable changed;
    std::vector<ConnectionPtr> connections;

    Acceptor acceptor() {
        return [this](ConnectionPtr c) {
            std::lock_guard lock(mutex);
            connections.push_back(std::move(c));
            changed.notify_all();
        };
    }

    bool wait(std::size_t n, std::chrono::milliseconds timeout = 5s) {
        std::unique_lock lock(mutex);
        return changed.wait_for(lock, timeout, [&] { return connections.size() >= n; });
    }
};

Frame numbered(std::uint32_t i, std::size_t size = 8) {
    Bytes payload(size);
    for (std::size_t k = 0; k < size; ++k) payload[k] = static_cast<std::uint8_t>(i + k);
    return Frame::make(Address{NetworkId{i + 1}, ComponentId{1}}, payload);
}

Bytes flatten(const std::vector<Bytes>& frames) {
    Bytes out;
    for (const auto& f : frames) out.insert(out.end(), f.begin(), f.end());
    return out;
}

void check_bidirectional(const ConnectionPtr& client, Sink& client_sink, const ConnectionPtr& server,
                         Sink& server_sink) {
    std::vector<Bytes> to_server;
    std::vector<Bytes> to_client;
    for (std::uint32_t i = 0; i < 200; ++i) {
        const auto a = numbered(i, i % 50);
        const auto b = numbered(1000 + i, (i * 7) % 90);
        client->send(a);
        server->send(b);
        to_server.emplace_back(a.bytes().begin(), a.bytes().end());
        to_client.emplace_back(b.bytes().begin(), b.bytes().end());
    }
    ASSERT_TRUE(server_sink.wait_frames(200));
    ASSERT_TRUE(client_sink.wait_frames(200));
    std::lock_guard l1(server_sink.mutex);
    std::lock_guard l2(client_sink.mutex);
    EXPECT_EQ(flatten(server_sink.frames), flatten(to_server));
    EXPECT_EQ(flatten(client_sink.frames), flatten(to_client));
}

} // namespace

TEST(ConnectionSpec, ParsesHostAndPort) {
    const auto spec = ConnectionSpec::parse("example.org:8001");
    EXPECT_EQ(spec.host, "example.org");
    EXPECT_EQ(spec.port, 8001);
    EXPECT_EQ(spec.kind, TransportKind::tcp);
    EXPECT_THROW(ConnectionSpec::parse("nohost"), Error);
    EXPECT_THROW(ConnectionSpec::parse("h:0"), Error);
    EXPECT_THROW(ConnectionSpec::parse("h:70000"), Error);
    EXPECT_THROW(ConnectionSpec::parse("h:12x"), Error);
}

TEST(Loopback, BytesArriveUnmodifiedAndInOrder) {
    auto [a, b] = loopback_pair();
    Sink sink;
    b->start(sink.handlers());
    a->start({});
    std::vector<Bytes> sent;
    for (std::uint32_t i = 0; i < 100; ++i) {
        const auto f = numbered(i, i);
        a->send(f);
        sent.emplace_back(f.bytes().begin(), f.bytes().end());
    }
    ASSERT_TRUE(sink.wait_frames(100));
    EXPECT_EQ(sink.frames, sent);
    EXPECT_EQ(a->state(), ConnectionState::open);
}

TEST(Loopback, CloseIsObservedByPeer) {
    auto [a, b] = loopback_pair();
    Sink sink;
    b->start(sink.handlers());
    a->close();
    EXPECT_TRUE(sink.wait_closed());
    EXPECT_EQ(b->state(), ConnectionState::closed);
    b->send(numbered(1));
}

TEST(Loopback, FramesBeforeStartAreDeliveredFirst) {
    auto [a, b] = loopback_pair();
    a->send(numbered(1));
    a->send(numbered(2));
    Sink sink;
    b->start(sink.handlers());
    a->send(numbered(3));
    ASSERT_TRUE(sink.wait_frames(3));
    EXPECT_EQ(Frame(std::make_shared<const Bytes>(sink.frames[0])).address().object.value, 2u);
    EXPECT_EQ(Frame(std::make_shared<const Bytes>(sink.frames[2])).address().object.value, 4u);
}

TEST(Loopback, ThroughputExceedsTenThousandMessagesPerSecond) {
    auto [a, b] = loopback_pair();
    std::atomic<int> received{0};
    Connection::Handlers h;
    h.on_frame = [&](const Frame&) { ++received; };
    b->start(std::move(h));
    const auto frame = numbered(1, 32);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 20'000; ++i) a->send(frame);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_EQ(received.load(), 20'000);
    EXPECT_GT(20'000 / elapsed, 10'000.0);
}

TEST(Loopback, InjectedDelayHoldsFrames) {
    auto [a, b] = loopback_pair(LoopbackOptions{40ms});
    Sink sink;
    b->start(sink.handlers());
    const auto sent = std::chrono::steady_clock::now();
    a->send(numbered(1));
    ASSERT_TRUE(sink.wait_frames(1));
    EXPECT_GE(sink.arrivals[0] - sent, 40ms);
}

TEST(Tcp, ListenConnectExchange) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    ASSERT_NE(listener.port(), 0);
    auto client = connect(io, ConnectionSpec::tcp("127.0.0.1", listener.port()));
    Sink client_sink;
    client->start(client_sink.handlers());
    ASSERT_TRUE(client->wait_open(5s));
    ASSERT_TRUE(accepted.wait(1));
    std::this_thread::sleep_for(50ms);
    EXPECT_EQ(accepted.connections.size(), 1u);
    Sink server_sink;
    auto server = accepted.connections[0];
    server->start(server_sink.handlers());
    check_bidirectional(client, client_sink, server, server_sink);
    client->close();
    EXPECT_TRUE(server_sink.wait_closed());
}

TEST(Tcp, ConnectToClosedPortReportsCloseEvent) {
    IoRuntime io(1);
    std::uint16_t port = 0;
    {
        auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), [](ConnectionPtr) {});
        port = listener.port();
    }
    auto client = connect(io, ConnectionSpec::tcp("127.0.0.1", port));
    Sink sink;
    client->start(sink.handlers());
    ASSERT_TRUE(sink.wait_closed(5s));
    EXPECT_EQ(client->state(), ConnectionState::closed);
    EXPECT_FALSE(sink.reason.empty());
}

TEST(Tcp, ClosedListenerRefusesConnections) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    const auto port = listener.port();
    listener.close();
    auto client = connect(io, ConnectionSpec::tcp("127.0.0.1", port));
    Sink sink;
    client->start(sink.handlers());
    EXPECT_TRUE(sink.wait_closed(5s));
    EXPECT_TRUE(accepted.connections.empty());
}

TEST(Tcp, PortInUseIsBindError) {
    IoRuntime io(1);
    auto first = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), [](ConnectionPtr) {});
    try {
        auto second = listen(io, ConnectionSpec::tcp("127.0.0.1", first.port()), [](ConnectionPtr) {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::bind_failed);
    }
}

TEST(Tcp, FiftyConcurrentConnectsYieldFiftyDistinctConnections) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    std::vector<ConnectionPtr> clients;
    for (int i = 0; i < 50; ++i) {
        clients.push_back(connect(io, ConnectionSpec::tcp("127.0.0.1", listener.port())));
        clients.back()->start({});
    }
    ASSERT_TRUE(accepted.wait(50));
    std::this_thread::sleep_for(50ms);
    std::lock_guard lock(accepted.mutex);
    EXPECT_EQ(accepted.connections.size(), 50u);
    std::set<std::uint64_t> ids;
    for (const auto& c : accepted.connections) ids.insert(c->id());
    EXPECT_EQ(ids.size(), 50u);
}

TEST(Tcp, ByteAtATimeStreamIsReframed) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    asio::io_context raw_io;
    tcp::socket socket(raw_io);
    socket.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), listener.port()));
    socket.set_option(tcp::no_delay(true));
    ASSERT_TRUE(accepted.wait(1));
    Sink sink;
    accepted.connections[0]->start(sink.handlers());
    std::vector<Bytes> sent;
    Bytes stream;
    for (std::uint32_t i = 0; i < 20; ++i) {
        const auto f = numbered(i, i * 3);
        sent.emplace_back(f.bytes().begin(), f.bytes().end());
        stream.insert(stream.end(), f.bytes().begin(), f.bytes().end());
    }
    for (std::size_t i = 0; i < stream.size(); ++i) {
        asio::write(socket, asio::buffer(&stream[i], 1));
        if (i % 97 == 0) std::this_thread::sleep_for(1ms);
    }
    ASSERT_TRUE(sink.wait_frames(20));
    EXPECT_EQ(sink.frames, sent);
}

TEST(Tcp, MalformedStreamClosesConnection) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    asio::io_context raw_io;
    tcp::socket socket(raw_io);
    socket.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), listener.port()));
    ASSERT_TRUE(accepted.wait(1));
    Sink sink;
    accepted.connections[0]->start(sink.handlers());
    const std::uint8_t bad[4] = {3, 0, 0, 0};
    asio::write(socket, asio::buffer(bad));
    EXPECT_TRUE(sink.wait_closed());
    EXPECT_TRUE(sink.frames.empty());
}

TEST(Tcp, OutboundLimitClosesSlowConnection) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::tcp("127.0.0.1", 0), accepted.acceptor());
    auto client = connect(io, ConnectionSpec::tcp("127.0.0.1", listener.port()));
    Sink sink;
    client->start(sink.handlers());
    ASSERT_TRUE(client->wait_open(5s));
    client->set_outbound_limit(10);
    client->send(numbered(1, 100));
    EXPECT_TRUE(sink.wait_closed());
    EXPECT_NE(sink.reason.find("limit"), std::string::npos);
}

TEST(WebSocket, ListenConnectExchange) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::websocket("127.0.0.1", 0), accepted.acceptor());
    auto client = connect(io, ConnectionSpec::websocket("127.0.0.1", listener.port()));
    Sink client_sink;
    client->start(client_sink.handlers());
    ASSERT_TRUE(client->wait_open(5s));
    ASSERT_TRUE(accepted.wait(1));
    Sink server_sink;
    auto server = accepted.connections[0];
    server->start(server_sink.handlers());
    check_bidirectional(client, client_sink, server, server_sink);
    client->close();
    EXPECT_TRUE(server_sink.wait_closed());
}

TEST(WebSocket, OneMessagePerBinaryFrameAndSplitFramesBothAccepted) {
    IoRuntime io(1);
    Accepted accepted;
    auto listener = listen(io, ConnectionSpec::websocket("127.0.0.1", 0), accepted.acceptor());
    asio::io_context raw_io;
    beast::websocket::stream<tcp::socket> ws(raw_io);
    ws.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), listener.port()));
    ws.handshake("127.0.0.1", "/");
    ws.binary(true);
    ASSERT_TRUE(accepted.wait(1));
    Sink sink;
    accepted.connections[0]->start(sink.handlers());

    std::vector<Bytes> sent;
    Bytes stream;
    for (std::uint32_t i = 0; i < 6; ++i) {
        const auto f = numbered(i, 20 + i);
        sent.emplace_back(f.bytes().begin(), f.bytes().end());
        stream.insert(stream.end(), f.bytes().begin(), f.bytes().end());
    }
    // Canonical: one message per frame for the first two.
    std::size_t offset = 0;
    for (int i = 0; i < 2; ++i) {
        ws.write(asio::buffer(sent[static_cast<std::size_t>(i)]));
        offset += sent[static_cast<std::size_t>(i)].size();
    }
    // Tolerated: the rest split across frames at awkward boundaries.
    const std::size_t cuts[] = {5, 13, 40, 3};
    for (const auto cut : cuts) {
        ws.write(asio::buffer(stream.data() + offset, cut));
        offset += cut;
    }
    ws.write(asio::buffer(stream.data() + offset, stream.size() - offset));
    ASSERT_TRUE(sink.wait_frames(6));
    EXPECT_EQ(sink.frames, sent);

    // Outbound frames from the server are one message each.
    accepted.connections[0]->send(numbered(77, 5));
    beast::flat_buffer buffer;
    ws.read(buffer);
    EXPECT_TRUE(ws.got_binary());
    const auto expected = numbered(77, 5);
    ASSERT_EQ(buffer.size(), expected.size());
    EXPECT_TRUE(std::equal(expected.bytes().begin(), expected.bytes().end(),
                           static_cast<const std::uint8_t*>(buffer.data().data())));
    ws.close(beast::websocket::close_code::normal);
}
