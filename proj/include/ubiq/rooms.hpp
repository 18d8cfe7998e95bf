#pragma once

// Rooms: rendezvous by out-of-band join codes. The protocol is plain JSON
// text objects exchanged between a RoomClient at (scene id, 2) and the
// RoomServer at (1, 1), so it runs over any transport the scene has.

#include "ubiq/scene.hpp"
#include "ubiq/signal.hpp"
#include "ubiq/wire.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ubiq {

using Properties = std::map<std::string, std::string>;

/// Serialized property maps above this size are rejected.
inline constexpr std::size_t kMaxPropertiesBytes = 8 * 1024;

struct RoomRecord {
    std::string uuid;
    std::string joincode;
    std::string name;
    bool publish = false;
    Properties properties;

    friend bool operator==(const RoomRecord&, const RoomRecord&) = default;
};

struct PeerRecord {
    std::string uuid;
    NetworkId scene_id;
    Properties properties;

    friend bool operator==(const PeerRecord&, const PeerRecord&) = default;
};

/// Entry of a discovery listing.
struct RoomSummary {
    std::string uuid;
    std::string joincode;
    std::string name;
    std::size_t members = 0;
};

Json to_json(const RoomRecord& room);
Json to_json(const PeerRecord& peer);
Json to_json(const Properties& properties);
/// Throw Error(parse_error) on schema violations.
RoomRecord room_from_json(const Json& value);
PeerRecord peer_from_json(const Json& value);
Properties properties_from_json(const Json& value);
std::size_t serialized_size(const Properties& properties);

/// True for exactly three decimal digits.
bool is_valid_joincode(std::string_view code);

/// Picks a uniformly random code in "000".."999" not present in `live`.
/// Returns nullopt once all 1000 codes are taken.
std::optional<std::string> allocate_code(const std::set<std::string>& live, Rng& rng);

struct JoinTarget {
    enum class Kind { joincode, uuid, create };

    Kind kind = Kind::create;
    std::string value;
    bool publish = false;

    static JoinTarget code(std::string joincode) { return {Kind::joincode, std::move(joincode), false}; }
    static JoinTarget room_uuid(std::string uuid) { return {Kind::uuid, std::move(uuid), false}; }
    static JoinTarget create(std::string name, bool publish) { return {Kind::create, std::move(name), publish}; }
};

/// Client half of the rooms protocol. Confined to its scene's update context:
/// events fire from inside PeerScene::dispatch().
class RoomClient final : public MessageHandler {
public:
    explicit RoomClient(PeerScene scene, std::string peer_uuid = {});

    RoomClient(const RoomClient&) = delete;
    RoomClient& operator=(const RoomClient&) = delete;

    /// Opens a connection to a relay on the client's scene.
    ConnectionPtr connect(IoRuntime& io, const ConnectionSpec& spec);

    void join(const JoinTarget& target);
    /// No-op when not in a room.
    void leave();
    /// Merges into this peer's advertised properties. Throws
    /// Error(not_in_room) or Error(properties_too_large).
    void set_peer_properties(const Properties& updates);
    void set_room_properties(const Properties& updates);
    /// Properties advertised with the next join; only allowed outside a room.
    void set_initial_properties(const Properties& properties);
    /// Answered through `rooms_discovered`.
    void discover();
    void ping(std::uint64_t id);

    const PeerRecord& me() const noexcept { return me_; }
    const std::optional<RoomRecord>& room() const noexcept { return room_; }
    const std::map<std::string, PeerRecord>& peers() const noexcept { return peers_; }
    PeerScene& scene() noexcept { return scene_; }

    Signal<const RoomRecord&> joined_room;
    Signal<> left_room;
    Signal<const PeerRecord&> peer_added;
    Signal<const PeerRecord&> peer_removed;
    Signal<const PeerRecord&> peer_updated;
    Signal<const RoomRecord&> room_updated;
    Signal<const std::string&> rejected;
    Signal<const std::vector<RoomSummary>&> rooms_discovered;
    Signal<std::uint64_t> pong;

    void process_message(const ReceivedMessage& message) override;

private:
    void request(const std::string& type, const Json& args = nullptr);

    PeerScene scene_;
    PeerRecord me_;
    std::optional<RoomRecord> room_;
    std::map<std::string, PeerRecord> peers_;
    NetworkContext context_;
};

struct RoomServerStats {
    std::uint64_t discarded = 0;
    std::uint64_t protocol_messages = 0;
    std::uint64_t forwarded_messages = 0;
    std::uint64_t forwarded_deliveries = 0;
    std::uint64_t rejections = 0;
    std::size_t rooms = 0;
    std::size_t connections = 0;
};

struct RoomServerOptions {
    using Clock = std::chrono::steady_clock;

    std::chrono::seconds idle_room_timeout{60};
    std::optional<std::uint64_t> seed;
    std::function<Clock::time_point()> clock = [] { return Clock::now(); };
    /// Per-connection outbound buffer cap; exceeding it closes that member.
    std::size_t outbound_limit = 4u << 20;
    /// Artificial delay on every server write (fault injection only).
    std::chrono::microseconds inject_send_delay{0};
    /// Messages whose length field exceeds this are discarded.
    std::size_t max_message_bytes = kMaxMessageLength;
    /// Structured event sink (server lifecycle and membership).
    std::function<void(const std::string& event, const Json& args)> on_event;
};

/// Server half of the rooms protocol plus the sandbox-then-forward relay.
/// Room state mutations are serialized; the relay never inspects payloads of
/// in-room traffic.
class RoomServer {
public:
    using Clock = RoomServerOptions::Clock;

    explicit RoomServer(RoomServerOptions options = {});
    ~RoomServer();

    RoomServer(const RoomServer&) = delete;
    RoomServer& operator=(const RoomServer&) = delete;

    /// Takes over a connection; it starts sandboxed.
    void attach(const ConnectionPtr& connection);

    /// Routes one inbound message: protocol handling, fanout or discard.
    void handle(const ConnectionPtr& from, const Frame& frame);
    void disconnect(std::uint64_t connection_id);

    /// Forwards `frame` byte-identical to every other member of `room_uuid`;
    /// returns the number of deliveries.
    std::size_t fanout(const std::string& room_uuid, std::uint64_t from_connection, const Frame& frame);

    /// Removes empty rooms idle beyond the timeout; returns their uuids.
    std::vector<std::string> evict_idle(Clock::time_point now);

    /// Closes every attached connection.
    void close_all();

    RoomServerStats stats() const;
    std::vector<RoomRecord> rooms() const;
    std::vector<PeerRecord> members(const std::string& room_uuid) const;

    struct Impl;

private:
    static void handle_impl(Impl& impl, const ConnectionPtr& from, const Frame& frame);
    static void disconnect_impl(Impl& impl, std::uint64_t connection_id);

    std::shared_ptr<Impl> impl_;
};

} // namespace ubiq
