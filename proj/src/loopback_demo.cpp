#include "ubiq/loopback_demo.hpp"

#include "ubiq/avatar.hpp"
#include "ubiq/error.hpp"
#include "ubiq/event_log.hpp"
#include "ubiq/rooms.hpp"
#include "ubiq/scene.hpp"
#include "ubiq/spawner.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace ubiq::harness {

namespace {

using Clock = std::chrono::steady_clock;

constexpr ComponentId kFireworkComponent{20};
constexpr const char* kAvatarIdProperty = "ubiq.avatar.networkId";

struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Spawned on both peers; the owner triggers bursts that the replica counts.
class Firework final : public SpawnedObject, public MessageHandler {
public:
    Firework(PeerScene& scene, NetworkId id) : context_(scene.register_component(*this, Address{id, kFireworkComponent})) {}

    void burst(int count) { context_.send_json(Json{{"type", "burst"}, {"count", count}}); }
    int bursts() const noexcept { return bursts_; }

    void process_message(const ReceivedMessage& message) override {
        const auto body = message.json();
        if (body.value("type", "") == "burst") {
            bursts_ += body.value("count", 0);
        }
    }

private:
    int bursts_ = 0;
    NetworkContext context_;
};

struct DemoPeer {
    DemoPeer(const std::string& name, const BlueprintRegistry& blueprints)
        : scene(), rooms(scene, name), spawner(scene, blueprints), logger(scene, name) {}

    PeerScene scene;
    RoomClient rooms;
    Spawner spawner;
    EventLogger logger;
};

class Demo {
public:
    Demo(const LoopbackDemoOptions& options, std::ostream& out) : options_(options), out_(out) {}

    int run() {
        try {
            scene_graph();
            connect();
            join();
            spawn();
            poses();
            logging();
            if (options_.sabotage) {
                check(false, "sabotage: deliberately failing check");
            }
        } catch (const CheckFailed& failure) {
            out_ << "FAIL " << failure.what() << '\n';
            return 1;
        } catch (const Error& error) {
            out_ << "ERROR " << error.what() << '\n';
            return error.code() == Errc::connection_failed ? 2 : 1;
        }
        out_ << "loopback demo: all checks passed\n";
        return 0;
    }

private:
    void check(bool condition, const std::string& what) {
        if (!condition) {
            throw CheckFailed(what);
        }
        out_ << "ok   " << what << '\n';
    }

    void pump_until(const std::function<bool()>& done, const std::string& what) {
        const auto deadline =
            Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(options_.timeout_seconds));
        while (!done()) {
            if (Clock::now() > deadline) {
                throw CheckFailed("timed out waiting for " + what);
            }
            a_->scene.wait_for_inbound(std::chrono::milliseconds(2));
            a_->scene.dispatch();
            b_->scene.dispatch();
        }
        check(true, what);
    }

    void scene_graph() {
        blueprints_.add("firework", [](PeerScene& scene, NetworkId id) { return std::make_unique<Firework>(scene, id); });
        a_ = std::make_unique<DemoPeer>("peer-a", blueprints_);
        b_ = std::make_unique<DemoPeer>("peer-b", blueprints_);

        auto& branch_a = root_.add_child("peer-a");
        auto& branch_b = root_.add_child("peer-b");
        branch_a.attach(a_->scene);
        branch_b.attach(b_->scene);
        auto& hand_a = branch_a.add_child("avatar").add_child("hand");
        auto& hand_b = branch_b.add_child("avatar").add_child("hand");
        check(resolve_scene(hand_a) == a_->scene, "branch a resolves to its own scene");
        check(resolve_scene(hand_b) == b_->scene, "branch b resolves to its own scene");
        check(!(resolve_scene(hand_a) == resolve_scene(hand_b)), "the two branches resolve to different scenes");
    }

    void connect() {
        if (options_.server.empty()) {
            relay_ = std::make_unique<RoomServer>();
            for (auto* peer : {a_.get(), b_.get()}) {
                auto [client, server] = loopback_pair();
                relay_->attach(server);
                peer->scene.add_connection(client);
            }
            out_ << "using in-process relay\n";
            return;
        }
        io_ = std::make_unique<IoRuntime>(1);
        const auto spec = ConnectionSpec::parse(options_.server);
        for (auto* peer : {a_.get(), b_.get()}) {
            auto connection = peer->rooms.connect(*io_, spec);
            if (!connection->wait_open(std::chrono::seconds(5)) || connection->state() != ConnectionState::open) {
                throw Error(Errc::connection_failed, "cannot reach relay at " + options_.server);
            }
        }
        out_ << "using relay at " << options_.server << '\n';
    }

    void join() {
        a_avatar_ = generate_network_id(rng_);
        a_->rooms.set_initial_properties({{kAvatarIdProperty, a_avatar_.to_string()}});
        a_->rooms.join(JoinTarget::create("loopback", false));
        pump_until([&] { return a_->rooms.room().has_value(); }, "peer a created a room");
        const auto code = a_->rooms.room()->joincode;
        check(is_valid_joincode(code), "join code " + code + " is three digits");

        b_->rooms.join(JoinTarget::code(code));
        pump_until([&] { return b_->rooms.room().has_value() && a_->rooms.peers().size() == 1; },
                   "peer b joined by code");
        check(b_->rooms.room()->uuid == a_->rooms.room()->uuid, "both peers are in the same room");
        check(b_->rooms.peers().contains("peer-a") && a_->rooms.peers().contains("peer-b"),
              "each peer lists the other");
    }

    void spawn() {
        const auto id = a_->spawner.spawn("firework");
        pump_until([&] { return b_->spawner.find(id) != nullptr; }, "firework replicated to peer b");
        auto* local = dynamic_cast<Firework*>(a_->spawner.find(id));
        auto* remote = dynamic_cast<Firework*>(b_->spawner.find(id));
        check(local && remote, "both peers hold a firework instance");
        local->burst(3);
        pump_until([&] { return remote->bursts() == 3; }, "peer b saw the firework burst");
    }

    void poses() {
        const auto& advertised = b_->rooms.peers().at("peer-a").properties;
        check(advertised.contains(kAvatarIdProperty) && advertised.at(kAvatarIdProperty) == a_avatar_.to_string(),
              "peer b learned peer a's avatar id from the room");
        RemoteAvatar remote(b_->scene, NetworkId::parse(advertised.at(kAvatarIdProperty)));
        AvatarPose pose;
        constexpr int kPoses = 10;
        for (int i = 0; i < kPoses; ++i) {
            pose.head.position = {0.1f * static_cast<float>(i), 1.7f, 0.0f};
            pose.right_hand.rotation = {0.0f, 0.7071068f, 0.0f, 0.7071068f};
            const auto bytes = pose.encode();
            a_->scene.send(Address{a_avatar_, ids::kAvatarPose}, ByteView(bytes.data(), bytes.size()));
        }
        pump_until([&] { return remote.updates() == kPoses; }, "peer b received every pose");
        check(remote.last_pose() == pose, "the last received pose matches the last sent pose");
    }

    void logging() {
        LogCollector collector(a_->scene, a_->rooms, &a_->logger);
        collector.start();
        pump_until([&] { return b_->logger.collector().has_value(); }, "peer b found the collector");
        for (int i = 0; i < 5; ++i) {
            a_->logger.log("DemoEvent", Json{{"i", i}});
            b_->logger.log("DemoEvent", Json{{"i", i}});
        }
        pump_until([&] { return collector.size() == 10; }, "collector gathered events from both peers");
        if (!options_.log_path.empty()) {
            check(collector.flush(options_.log_path) == 10, "collected log flushed to " + options_.log_path);
        }
    }

    const LoopbackDemoOptions& options_;
    std::ostream& out_;
    Rng rng_ = seeded_from_device();
    BlueprintRegistry blueprints_;
    SceneNode root_{"world"};
    std::unique_ptr<IoRuntime> io_;
    std::unique_ptr<RoomServer> relay_;
    std::unique_ptr<DemoPeer> a_;
    std::unique_ptr<DemoPeer> b_;
    NetworkId a_avatar_;
};

} // namespace

int loopback_demo(const LoopbackDemoOptions& options, std::ostream& out) { return Demo(options, out).run(); }

} // namespace ubiq::harness
