#include "test_support.hpp"

#include "ubiq/error.hpp"
#include "ubiq/rooms.hpp"

#include <gtest/gtest.h>

#include <regex>

using namespace ubiq;
using ubiq::testing::pump_for;
using ubiq::testing::pump_until;
using namespace std::chrono_literals;

namespace {

struct Client {
    PeerScene scene;
    RoomClient rooms;
    int joined = 0;
    int left = 0;
    std::vector<std::string> added;
    std::vector<std::string> removed;
    std::vector<PeerRecord> updated;
    std::vector<RoomRecord> room_updates;
    std::vector<std::string> rejections;
    std::optional<std::vector<RoomSummary>> listing;
    std::optional<std::uint64_t> pong;

    Client(RoomServer& server, const std::string& name) : rooms(scene, name) {
        auto [client_end, server_end] = loopback_pair();
        server.attach(server_end);
        scene.add_connection(client_end);
        rooms.joined_room.connect([this](const RoomRecord&) { ++joined; });
        rooms.left_room.connect([this] { ++left; });
        rooms.peer_added.connect([this](const PeerRecord& p) { added.push_back(p.uuid); });
        rooms.peer_removed.connect([this](const PeerRecord& p) { removed.push_back(p.uuid); });
        rooms.peer_updated.connect([this](const PeerRecord& p) { updated.push_back(p); });
        rooms.room_updated.connect([this](const RoomRecord& r) { room_updates.push_back(r); });
        rooms.rejected.connect([this](const std::string& r) { rejections.push_back(r); });
        rooms.rooms_discovered.connect([this](const std::vector<RoomSummary>& l) { listing = l; });
        rooms.pong.connect([this](std::uint64_t id) { pong = id; });
    }
};

RoomServerOptions seeded(std::uint64_t seed) {
    RoomServerOptions options;
    options.seed = seed;
    return options;
}

std::string create_room(Client& c, const std::string& name = "room", bool publish = false) {
    c.rooms.join(JoinTarget::create(name, publish));
    EXPECT_TRUE(pump_until({c.scene}, [&] { return c.rooms.room().has_value(); }));
    return c.rooms.room() ? c.rooms.room()->joincode : std::string{};
}

std::set<std::string> keys(const std::map<std::string, PeerRecord>& peers) {
    std::set<std::string> out;
    for (const auto& [k, v] : peers) out.insert(k);
    return out;
}

} // namespace

TEST(JoinCodes, ValidityCheck) {
    EXPECT_TRUE(is_valid_joincode("042"));
    EXPECT_TRUE(is_valid_joincode("999"));
    EXPECT_FALSE(is_valid_joincode("42"));
    EXPECT_FALSE(is_valid_joincode("0420"));
    EXPECT_FALSE(is_valid_joincode("a42"));
    EXPECT_FALSE(is_valid_joincode(""));
}

TEST(JoinCodes, SeededAllocationIsPinned) {
    // Pinned from an independent MT19937-64 reference with rejection sampling.
    Rng rng(1);
    EXPECT_EQ(allocate_code({}, rng), "528");
    Rng rng42(42);
    EXPECT_EQ(allocate_code({}, rng42), "406");
}

TEST(JoinCodes, LastFreeCodeIsChosenAndFullIsNone) {
    std::set<std::string> live;
    char text[8];
    for (int i = 0; i < 1000; ++i) {
        std::snprintf(text, sizeof text, "%03d", i);
        if (i != 517) live.insert(text);
    }
    Rng rng(5);
    EXPECT_EQ(allocate_code(live, rng), "517");
    live.insert("517");
    EXPECT_EQ(allocate_code(live, rng), std::nullopt);
}

TEST(JoinCodes, AllocationNeverCollidesWithLiveCodes) {
    Rng rng(8);
    std::set<std::string> live;
    for (int i = 0; i < 1000; ++i) {
        const auto code = allocate_code(live, rng);
        ASSERT_TRUE(code.has_value());
        ASSERT_TRUE(is_valid_joincode(*code));
        ASSERT_FALSE(live.contains(*code));
        live.insert(*code);
    }
    EXPECT_FALSE(allocate_code(live, rng).has_value());
}

TEST(RoomRecords, JsonRoundTrip) {
    RoomRecord room{"u-1", "042", "Hello World", true, {{"scene", "hello-world"}}};
    EXPECT_EQ(room_from_json(to_json(room)), room);
    PeerRecord peer{"p-1", NetworkId{18446744073709551615ull}, {{"ubiq.avatar.blueprint", "floating"}}};
    const auto json = to_json(peer);
    EXPECT_TRUE(json["sceneid"].is_string());
    EXPECT_EQ(peer_from_json(json), peer);
    EXPECT_THROW(peer_from_json(Json{{"uuid", "x"}}), Error);
    EXPECT_THROW(properties_from_json(Json{{"k", 1}}), Error);
}

TEST(Rooms, CreateYieldsThreeDigitCode) {
    RoomServer server(seeded(1));
    Client a(server, "a");
    a.rooms.join(JoinTarget::create("Hello World", true));
    ASSERT_TRUE(pump_until({a.scene}, [&] { return a.joined == 1; }));
    EXPECT_TRUE(std::regex_match(a.rooms.room()->joincode, std::regex("[0-9]{3}")));
    EXPECT_EQ(a.rooms.room()->name, "Hello World");
    EXPECT_TRUE(a.rooms.room()->publish);
    EXPECT_TRUE(a.rooms.peers().empty());
}

TEST(Rooms, JoinByCodeSeesExistingMember) {
    RoomServer server(seeded(2));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return b.joined == 1 && a.added.size() == 1; }));
    EXPECT_EQ(b.added, std::vector<std::string>{"a"});
    EXPECT_EQ(a.added, std::vector<std::string>{"b"});
    EXPECT_EQ(b.rooms.room()->uuid, a.rooms.room()->uuid);
    EXPECT_FALSE(b.rooms.peers().contains("b"));
}

TEST(Rooms, JoinByUuid) {
    RoomServer server(seeded(3));
    Client a(server, "a");
    Client b(server, "b");
    create_room(a);
    b.rooms.join(JoinTarget::room_uuid(a.rooms.room()->uuid));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return b.joined == 1; }));
    EXPECT_EQ(b.rooms.room()->joincode, a.rooms.room()->joincode);
}

TEST(Rooms, UnknownCodeIsRejected) {
    RoomServer server(seeded(4));
    Client a(server, "a");
    a.rooms.join(JoinTarget::code("999"));
    ASSERT_TRUE(pump_until({a.scene}, [&] { return !a.rejections.empty(); }));
    EXPECT_EQ(a.rejections[0], "no such room");
    EXPECT_FALSE(a.rooms.room().has_value());
}

TEST(Rooms, LeaveNotifiesRemainingMembers) {
    RoomServer server(seeded(5));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.added.size() == 1; }));
    a.rooms.leave();
    EXPECT_EQ(a.left, 1);
    EXPECT_FALSE(a.rooms.room().has_value());
    EXPECT_EQ(a.removed, std::vector<std::string>{"b"});
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return b.removed.size() == 1; }));
    EXPECT_EQ(b.removed[0], "a");
    a.rooms.leave();
    EXPECT_EQ(a.left, 1);
}

TEST(Rooms, AbruptDisconnectLooksLikeLeave) {
    RoomServer server(seeded(6));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.added.size() == 1; }));
    a.scene.shutdown();
    ASSERT_TRUE(pump_until({b.scene}, [&] { return b.removed.size() == 1; }));
    EXPECT_EQ(b.removed[0], "a");
    EXPECT_TRUE(b.rooms.peers().empty());
}

TEST(Rooms, PeerPropertiesPropagate) {
    RoomServer server(seeded(7));
    Client a(server, "a");
    Client b(server, "b");
    Client c(server, "c");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    c.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene, c.scene}, [&] { return a.added.size() == 2 && b.added.size() == 2; }));
    a.rooms.set_peer_properties({{"ubiq.avatar.blueprint", "floating"}});
    ASSERT_TRUE(pump_until({a.scene, b.scene, c.scene}, [&] { return b.updated.size() == 1 && c.updated.size() == 1; }));
    EXPECT_EQ(b.rooms.peers().at("a").properties.at("ubiq.avatar.blueprint"), "floating");
    EXPECT_EQ(c.rooms.peers().at("a").properties.at("ubiq.avatar.blueprint"), "floating");
    EXPECT_TRUE(a.updated.empty());
    EXPECT_EQ(a.rooms.me().properties.at("ubiq.avatar.blueprint"), "floating");
}

TEST(Rooms, EmptyPropertyUpdateEmitsNothing) {
    RoomServer server(seeded(8));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.added.size() == 1; }));
    a.rooms.set_peer_properties({});
    a.rooms.set_room_properties({});
    pump_for({a.scene, b.scene}, 50ms);
    EXPECT_TRUE(b.updated.empty());
    EXPECT_TRUE(b.room_updates.empty());
    EXPECT_TRUE(a.room_updates.empty());
}

TEST(Rooms, PropertiesBeforeJoiningAreALocalError) {
    RoomServer server(seeded(9));
    Client a(server, "a");
    try {
        a.rooms.set_peer_properties({{"k", "v"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::not_in_room);
    }
    EXPECT_THROW(a.rooms.set_room_properties({{"k", "v"}}), Error);
}

TEST(Rooms, OversizedPropertiesAreRejected) {
    RoomServer server(seeded(10));
    Client a(server, "a");
    create_room(a);
    try {
        a.rooms.set_peer_properties({{"big", std::string(kMaxPropertiesBytes, 'x')}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::properties_too_large);
    }
    // The server enforces the same bound on raw requests.
    a.scene.send_json(ids::kRoomServerAddress,
                      Json{{"type", "UpdatePeerProperties"},
                           {"sceneid", a.scene.id().to_string()},
                           {"args", {{"big", std::string(kMaxPropertiesBytes, 'x')}}}});
    ASSERT_TRUE(pump_until({a.scene}, [&] { return !a.rejections.empty(); }));
    EXPECT_EQ(a.rejections[0], "properties too large");
}

TEST(Rooms, RoomPropertiesReachAllMembers) {
    RoomServer server(seeded(11));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.added.size() == 1; }));
    a.rooms.set_room_properties({{"scene", "hello-world"}});
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.room_updates.size() == 1 && b.room_updates.size() == 1; }));
    EXPECT_EQ(b.rooms.room()->properties.at("scene"), "hello-world");
    EXPECT_EQ(a.rooms.room()->properties.at("scene"), "hello-world");
}

TEST(Rooms, ConcurrentRoomPropertySetsConverge) {
    RoomServer server(seeded(12));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.added.size() == 1; }));
    a.rooms.set_room_properties({{"color", "red"}, {"a-only", "1"}});
    b.rooms.set_room_properties({{"color", "blue"}, {"b-only", "2"}});
    ASSERT_TRUE(pump_until({a.scene, b.scene}, [&] { return a.room_updates.size() == 2 && b.room_updates.size() == 2; }));
    EXPECT_EQ(a.rooms.room()->properties, b.rooms.room()->properties);
    // Last writer (b, whose request reached the server second) wins the shared key.
    EXPECT_EQ(a.rooms.room()->properties.at("color"), "blue");
    EXPECT_EQ(a.rooms.room()->properties.at("a-only"), "1");
    EXPECT_EQ(a.rooms.room()->properties.at("b-only"), "2");
    EXPECT_EQ(server.rooms().front().properties, a.rooms.room()->properties);
}

TEST(Rooms, DiscoverListsOnlyPublishedRooms) {
    RoomServer server(seeded(13));
    Client probe(server, "probe");
    probe.rooms.discover();
    ASSERT_TRUE(pump_until({probe.scene}, [&] { return probe.listing.has_value(); }));
    EXPECT_TRUE(probe.listing->empty());

    Client a(server, "a");
    Client b(server, "b");
    create_room(a, "public", true);
    create_room(b, "private", false);
    probe.listing.reset();
    probe.rooms.discover();
    ASSERT_TRUE(pump_until({probe.scene}, [&] { return probe.listing.has_value(); }));
    ASSERT_EQ(probe.listing->size(), 1u);
    EXPECT_EQ(probe.listing->front().name, "public");
    EXPECT_EQ(probe.listing->front().members, 1u);
}

TEST(Rooms, DiscoverThreePublishedRoomsWithDistinctCodes) {
    RoomServer server(seeded(14));
    Client probe(server, "probe");
    std::vector<std::unique_ptr<Client>> owners;
    for (int i = 0; i < 3; ++i) {
        owners.push_back(std::make_unique<Client>(server, "owner" + std::to_string(i)));
        create_room(*owners.back(), "r" + std::to_string(i), true);
    }
    probe.rooms.discover();
    ASSERT_TRUE(pump_until({probe.scene}, [&] { return probe.listing.has_value(); }));
    ASSERT_EQ(probe.listing->size(), 3u);
    std::set<std::string> codes;
    for (const auto& r : *probe.listing) codes.insert(r.joincode);
    EXPECT_EQ(codes.size(), 3u);
}

TEST(Rooms, PingIsAnswered) {
    RoomServer server(seeded(15));
    Client a(server, "a");
    a.rooms.ping(77);
    ASSERT_TRUE(pump_until({a.scene}, [&] { return a.pong.has_value(); }));
    EXPECT_EQ(*a.pong, 77u);
}

TEST(Rooms, MalformedRequestIsRejectedAndConnectionSurvives) {
    RoomServer server(seeded(16));
    Client a(server, "a");
    const std::string garbage = "{not json";
    a.scene.send(ids::kRoomServerAddress, Bytes(garbage.begin(), garbage.end()));
    a.scene.send_json(ids::kRoomServerAddress, Json{{"type", "Join"}, {"sceneid", a.scene.id().to_string()}});
    a.scene.send_json(ids::kRoomServerAddress, Json{{"type", "Dance"}, {"sceneid", a.scene.id().to_string()}});
    ASSERT_TRUE(pump_until({a.scene}, [&] { return a.rejections.size() == 2; }));
    EXPECT_EQ(a.rejections, (std::vector<std::string>{"bad request", "bad request"}));
    EXPECT_EQ(server.stats().rejections, 3u);
    create_room(a);
    EXPECT_TRUE(a.rooms.room().has_value());
}

TEST(Rooms, ServerFullAfterThousandRooms) {
    RoomServer server(seeded(17));
    Client a(server, "a");
    for (int i = 0; i < 1000; ++i) {
        a.rooms.join(JoinTarget::create("r", false));
    }
    a.rooms.join(JoinTarget::create("one too many", false));
    ASSERT_TRUE(pump_until({a.scene}, [&] { return !a.rejections.empty(); }, 20s));
    EXPECT_EQ(a.rejections[0], "server full");
    EXPECT_EQ(server.rooms().size(), 1000u);
}

TEST(Rooms, JoiningAnotherRoomLeavesTheFirst) {
    RoomServer server(seeded(18));
    Client a(server, "a");
    Client b(server, "b");
    Client c(server, "c");
    const auto first = create_room(a);
    const auto second = create_room(b);
    c.rooms.join(JoinTarget::code(first));
    ASSERT_TRUE(pump_until({a.scene, b.scene, c.scene}, [&] { return a.added.size() == 1; }));
    c.rooms.join(JoinTarget::code(second));
    ASSERT_TRUE(pump_until({a.scene, b.scene, c.scene}, [&] { return a.removed.size() == 1 && b.added.size() == 1; }));
    EXPECT_EQ(c.rooms.room()->joincode, second);
    EXPECT_EQ(keys(c.rooms.peers()), std::set<std::string>{"b"});
}

TEST(Rooms, ChurnEndsWithPeerMapsEqualToServerTruth) {
    RoomServer server(seeded(19));
    std::vector<std::unique_ptr<Client>> clients;
    for (const auto* name : {"a", "b", "c"}) clients.push_back(std::make_unique<Client>(server, name));
    const auto code = create_room(*clients[0]);
    const auto room_uuid = clients[0]->rooms.room()->uuid;
    Rng rng(20);
    for (int cycle = 0; cycle < 60; ++cycle) {
        auto& c = *clients[uniform_below(rng, clients.size())];
        if (c.rooms.room()) {
            c.rooms.leave();
        } else {
            c.rooms.join(JoinTarget::code(code));
        }
        if (uniform_below(rng, 3) == 0) {
            for (auto& each : clients) each->scene.dispatch();
        }
    }
    pump_for({clients[0]->scene, clients[1]->scene, clients[2]->scene}, 100ms);
    std::set<std::string> truth;
    for (const auto& p : server.members(room_uuid)) truth.insert(p.uuid);
    for (auto& c : clients) {
        if (!c->rooms.room()) {
            EXPECT_FALSE(truth.contains(c->rooms.me().uuid));
            continue;
        }
        auto expected = truth;
        expected.erase(c->rooms.me().uuid);
        EXPECT_EQ(keys(c->rooms.peers()), expected) << c->rooms.me().uuid;
        EXPECT_TRUE(truth.contains(c->rooms.me().uuid));
    }
}

TEST(Rooms, EventsPairPerObserver) {
    RoomServer server(seeded(21));
    Client a(server, "a");
    Client b(server, "b");
    const auto code = create_room(a);
    for (int i = 0; i < 10; ++i) {
        b.rooms.join(JoinTarget::code(code));
        pump_until({a.scene, b.scene}, [&] { return b.rooms.room().has_value(); });
        b.rooms.leave();
    }
    pump_for({a.scene, b.scene}, 50ms);
    EXPECT_EQ(a.added.size(), 10u);
    EXPECT_EQ(a.removed.size(), 10u);
    EXPECT_TRUE(a.rooms.peers().empty());
}

TEST(Rooms, EvictionFreesCodeForReuse) {
    auto now = RoomServer::Clock::now();
    RoomServerOptions options = seeded(22);
    options.clock = [&] { return now; };
    RoomServer server(options);
    Client a(server, "a");
    const auto code = create_room(a);
    a.rooms.leave();
    pump_for({a.scene}, 20ms);
    EXPECT_TRUE(server.evict_idle(now + 60s).empty());
    EXPECT_EQ(server.evict_idle(now + 61s).size(), 1u);
    EXPECT_TRUE(server.rooms().empty());

    Client b(server, "b");
    b.rooms.join(JoinTarget::code(code));
    ASSERT_TRUE(pump_until({b.scene}, [&] { return !b.rejections.empty(); }));
    EXPECT_EQ(b.rejections[0], "no such room");
}

TEST(Rooms, OccupiedRoomsAreNeverEvicted) {
    auto now = RoomServer::Clock::now();
    RoomServerOptions options = seeded(23);
    options.clock = [&] { return now; };
    RoomServer server(options);
    Client a(server, "a");
    create_room(a);
    EXPECT_TRUE(server.evict_idle(now + 3600s).empty());
}

TEST(Rooms, TwoIdleRoomsEvictedInOneSweep) {
    auto now = RoomServer::Clock::now();
    RoomServerOptions options = seeded(24);
    options.clock = [&] { return now; };
    RoomServer server(options);
    Client a(server, "a");
    create_room(a);
    create_room(a);
    a.rooms.leave();
    pump_for({a.scene}, 20ms);
    EXPECT_EQ(server.evict_idle(now + 61s).size(), 2u);
}
