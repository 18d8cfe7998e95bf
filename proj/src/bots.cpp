#include "ubiq/bots.hpp"

#include "ubiq/avatar.hpp"
#include "ubiq/error.hpp"
#include "ubiq/latency.hpp"
#include "ubiq/log_analysis.hpp"
#include "ubiq/random.hpp"
#include "ubiq/rooms.hpp"
#include "ubiq/stats.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <numeric>
#include <thread>

namespace ubiq::harness {

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kAvatarIdProperty = "ubiq.avatar.networkId";
constexpr const char* kBotIndexProperty = "ubiq.bot.index";
// Send timestamps are kept per sender in a ring indexed by sequence number.
constexpr std::size_t kSendRing = 1 << 14;

std::int64_t now_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now().time_since_epoch()).count();
}

// Coordination between bot threads. Bots only touch it to rendezvous and to
// publish send times; results flow back through BotSummary.
struct Fleet {
    explicit Fleet(const BotConfig& c) : config(c), send_times(static_cast<std::size_t>(c.bots)) {
        for (auto& ring : send_times) {
            ring = std::make_unique<std::atomic<std::int64_t>[]>(kSendRing);
        }
        sent = std::make_unique<std::atomic<std::uint64_t>[]>(static_cast<std::size_t>(c.bots));
    }

    const BotConfig& config;
    std::mutex mutex;
    std::condition_variable changed;
    std::string joincode;
    bool create_failed = false;
    int joined = 0;
    int failed = 0;
    int ready = 0;
    int done_sending = 0;
    int finished = 0;
    std::vector<std::unique_ptr<std::atomic<std::int64_t>[]>> send_times;
    std::unique_ptr<std::atomic<std::uint64_t>[]> sent;

    void update(const std::function<void()>& change) {
        {
            std::lock_guard lock(mutex);
            change();
        }
        changed.notify_all();
    }

    template <class Pred>
    bool read(Pred pred) {
        std::lock_guard lock(mutex);
        return pred();
    }
};

class PoseReceiver final : public MessageHandler {
public:
    PoseReceiver(PeerScene& scene, NetworkId avatar_id, int sender, Fleet& fleet, std::vector<double>& latencies)
        : sender_(sender),
          fleet_(fleet),
          latencies_(latencies),
          context_(scene.register_component(*this, Address{avatar_id, ids::kAvatarPose})) {}

    int sender() const noexcept { return sender_; }
    std::uint64_t received() const noexcept { return received_; }

    void process_message(const ReceivedMessage& message) override {
        ++received_;
        if (message.payload.size() < 4 || sender_ < 0) {
            return;
        }
        std::uint32_t bits = 0;
        for (int i = 3; i >= 0; --i) {
            bits = (bits << 8) | message.payload[static_cast<std::size_t>(i)];
        }
        const auto seq = static_cast<std::uint64_t>(std::bit_cast<float>(bits));
        const auto sent_at = fleet_.send_times[static_cast<std::size_t>(sender_)][seq % kSendRing].load();
        if (sent_at > 0) {
            latencies_.push_back(static_cast<double>(now_us() - sent_at) / 1000.0);
        }
    }

private:
    int sender_;
    Fleet& fleet_;
    std::vector<double>& latencies_;
    std::uint64_t received_ = 0;
    NetworkContext context_;
};

Bytes make_pose_payload(std::uint64_t seq, std::size_t size, double t) {
    AvatarPose pose;
    // The sequence number rides in the head x coordinate; float32 holds it
    // exactly up to 2^24 poses per bot.
    pose.head.position = {static_cast<float>(seq), 1.7f, 0.0f};
    pose.left_hand.position = {static_cast<float>(std::sin(t)) * 0.3f, 1.2f, 0.3f};
    pose.right_hand.position = {static_cast<float>(std::cos(t)) * 0.3f, 1.2f, -0.3f};
    const auto encoded = pose.encode();
    Bytes payload(size, 0);
    std::memcpy(payload.data(), encoded.data(), std::min(size, encoded.size()));
    return payload;
}

struct BotOutcome {
    BotSummary summary;
    std::vector<double> latencies;
};

class Bot {
public:
    Bot(int index, Fleet& fleet, IoRuntime& io) : index_(index), fleet_(fleet), io_(io) {}

    void run(BotOutcome& out) {
        auto& summary = out.summary;
        summary.index = index_;
        try {
            if (!join(summary)) {
                fleet_.update([this] { ++fleet_.failed; if (index_ == 0) fleet_.create_failed = true; });
                shutdown();
                return;
            }
            fleet_.update([this] { ++fleet_.joined; });
            rendezvous();
            stream();
            drain();
        } catch (const std::exception& e) {
            summary.error = e.what();
            if (!summary.joined) {
                fleet_.update([this] { ++fleet_.failed; if (index_ == 0) fleet_.create_failed = true; });
            }
        }
        collect(out);
        fleet_.update([this] { ++fleet_.finished; });
        shutdown();
    }

private:
    bool join(BotSummary& summary) {
        rooms_ = std::make_unique<RoomClient>(scene_);
        if (!fleet_.config.log_dir.empty()) {
            logger_ = std::make_unique<EventLogger>(
                scene_, rooms_->me().uuid, fleet_.config.log_dir + "/bot-" + std::to_string(index_) + ".jsonl");
        }
        meter_ = std::make_unique<LatencyMeter>(scene_, *rooms_, LatencyMeter::Clock::now, logger_.get());
        monitor_ = std::make_shared<StatsMonitor>();
        scene_.set_traffic_observer(monitor_);
        summary.peer_uuid = rooms_->me().uuid;

        rooms_->peer_added.connect([this](const PeerRecord& peer) { track(peer); });
        rooms_->rejected.connect([this](const std::string& reason) { rejection_ = reason; });

        auto connection = rooms_->connect(io_, ConnectionSpec::parse(fleet_.config.server));
        if (!connection->wait_open(std::chrono::seconds(5)) ||
            connection->state() != ConnectionState::open) {
            summary.error = "connection failed: " + connection->close_reason();
            return false;
        }
        Rng rng = seeded_from_device();
        avatar_id_ = generate_network_id(rng);
        rooms_->set_initial_properties(
            {{kAvatarIdProperty, avatar_id_.to_string()}, {kBotIndexProperty, std::to_string(index_)}});

        std::string code = fleet_.config.room;
        if (code == "new") {
            if (index_ == 0) {
                rooms_->join(JoinTarget::create("bots", false));
            } else {
                std::unique_lock lock(fleet_.mutex);
                fleet_.changed.wait_for(lock, std::chrono::seconds(10),
                                        [this] { return !fleet_.joincode.empty() || fleet_.create_failed; });
                if (fleet_.joincode.empty()) {
                    summary.error = "room creation did not complete";
                    return false;
                }
                code = fleet_.joincode;
            }
        }
        if (code != "new") {
            rooms_->join(JoinTarget::code(code));
        }
        const auto deadline = Clock::now() + std::chrono::seconds(10);
        while (!rooms_->room() && rejection_.empty() && Clock::now() < deadline) {
            pump(std::chrono::milliseconds(20));
        }
        if (!rooms_->room()) {
            summary.error = rejection_.empty() ? "join timed out" : "join rejected: " + rejection_;
            return false;
        }
        if (index_ == 0 && fleet_.config.room == "new") {
            fleet_.update([this] { fleet_.joincode = rooms_->room()->joincode; });
        }
        summary.joined = true;
        return true;
    }

    void track(const PeerRecord& peer) {
        const auto id = peer.properties.find(kAvatarIdProperty);
        if (id == peer.properties.end() || receivers_.contains(peer.uuid)) {
            return;
        }
        int sender = -1;
        if (const auto index = peer.properties.find(kBotIndexProperty); index != peer.properties.end()) {
            sender = std::stoi(index->second);
            if (sender < 0 || sender >= fleet_.config.bots) {
                sender = -1;
            }
        }
        receivers_.emplace(peer.uuid, std::make_unique<PoseReceiver>(scene_, NetworkId::parse(id->second), sender,
                                                                     fleet_, latencies_));
    }

    // Waits, while serving the scene, until every bot that joined is known
    // to every other, so no pose is sent before its receivers exist.
    void rendezvous() {
        const int total = fleet_.config.bots;
        auto settled = [&] { return fleet_.joined + fleet_.failed == total; };
        const auto deadline = Clock::now() + std::chrono::seconds(30);
        bool counted = false;
        while (Clock::now() < deadline) {
            const int joined = [&] {
                std::lock_guard lock(fleet_.mutex);
                return settled() ? fleet_.joined : -1;
            }();
            if (joined >= 0 && !counted && static_cast<int>(receivers_.size()) >= joined - 1) {
                fleet_.update([this] { ++fleet_.ready; });
                counted = true;
            }
            if (counted && fleet_.read([&] { return fleet_.ready == fleet_.joined; })) {
                return;
            }
            pump(std::chrono::milliseconds(5));
        }
        if (!counted) {
            fleet_.update([this] { ++fleet_.ready; });
        }
    }

    void stream() {
        const auto period = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / fleet_.config.pose_rate));
        const auto start = Clock::now();
        const auto stop = start + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>(fleet_.config.duration_seconds));
        auto next = start;
        auto next_stats = start + std::chrono::seconds(1);
        std::uint64_t seq = 0;
        auto& ring = fleet_.send_times[static_cast<std::size_t>(index_)];
        const Address pose_address{avatar_id_, ids::kAvatarPose};
        for (auto now = Clock::now(); now < stop; now = Clock::now()) {
            while (next <= now && next < stop) {
                ring[seq % kSendRing].store(now_us());
                scene_.send(pose_address, make_pose_payload(seq, fleet_.config.payload_bytes,
                                                            std::chrono::duration<double>(now - start).count()));
                ++seq;
                fleet_.sent[index_].store(seq);
                next += period;
            }
            meter_->tick(now);
            if (logger_ && now >= next_stats) {
                record_stats(now);
                next_stats += std::chrono::seconds(1);
            }
            const auto wait = std::min<Clock::duration>(next - Clock::now(), std::chrono::milliseconds(10));
            pump(std::chrono::duration_cast<std::chrono::microseconds>(std::max<Clock::duration>(wait, {})));
        }
        sent_ = seq;
        fleet_.update([this] { ++fleet_.done_sending; });
    }

    std::uint64_t expected() const {
        std::uint64_t total = 0;
        for (const auto& [uuid, receiver] : receivers_) {
            if (receiver->sender() >= 0) {
                total += fleet_.sent[receiver->sender()].load();
            }
        }
        return total;
    }

    std::uint64_t received() const {
        std::uint64_t total = 0;
        for (const auto& [uuid, receiver] : receivers_) {
            total += receiver->received();
        }
        return total;
    }

    void drain() {
        const auto drain = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(fleet_.config.drain_seconds));
        auto deadline = Clock::now() + drain;
        while (Clock::now() < deadline &&
               !fleet_.read([this] { return fleet_.done_sending + fleet_.failed >= fleet_.config.bots; })) {
            pump(std::chrono::milliseconds(5));
        }
        deadline = Clock::now() + drain;
        while (received() < expected() && Clock::now() < deadline) {
            pump(std::chrono::milliseconds(5));
        }
    }

    void collect(BotOutcome& out) {
        auto& summary = out.summary;
        summary.poses_sent = sent_;
        summary.poses_received = received();
        summary.poses_expected = expected();
        out.latencies = latencies_;
        if (!latencies_.empty()) {
            summary.relay_mean_ms = std::accumulate(latencies_.begin(), latencies_.end(), 0.0) /
                                    static_cast<double>(latencies_.size());
            summary.relay_p50_ms = percentile(latencies_, 0.5);
            summary.relay_p95_ms = percentile(latencies_, 0.95);
        }
        if (meter_) {
            const auto& samples = meter_->samples();
            summary.meter_samples = samples.size();
            if (!samples.empty()) {
                summary.meter_mean_ms =
                    std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
                summary.meter_p95_ms = percentile(samples, 0.95);
            }
        }
        if (monitor_) {
            record_stats(Clock::now());
        }
        summary.bytes_in = bytes_in_;
        summary.bytes_out = bytes_out_;
    }

    void record_stats(Clock::time_point now) {
        const auto sample = monitor_->sample(now);
        bytes_in_ += sample.bytes_in;
        bytes_out_ += sample.bytes_out;
        if (logger_) {
            log_stats(*logger_, sample);
        }
    }

    void pump(std::chrono::microseconds wait) {
        scene_.wait_for_inbound(wait);
        scene_.dispatch();
    }

    void shutdown() {
        receivers_.clear();
        meter_.reset();
        logger_.reset();
        rooms_.reset();
        scene_.shutdown();
    }

    int index_;
    Fleet& fleet_;
    IoRuntime& io_;
    PeerScene scene_;
    std::unique_ptr<RoomClient> rooms_;
    std::unique_ptr<EventLogger> logger_;
    std::unique_ptr<LatencyMeter> meter_;
    std::shared_ptr<StatsMonitor> monitor_;
    std::map<std::string, std::unique_ptr<PoseReceiver>> receivers_;
    std::vector<double> latencies_;
    NetworkId avatar_id_;
    std::string rejection_;
    std::uint64_t sent_ = 0;
    std::uint64_t bytes_in_ = 0;
    std::uint64_t bytes_out_ = 0;
};

} // namespace

void BotConfig::validate() const {
    if (bots < 1) {
        throw Error(Errc::config, "bot count must be positive");
    }
    if (!(pose_rate > 0) || !std::isfinite(pose_rate)) {
        throw Error(Errc::config, "pose rate must be positive");
    }
    if (payload_bytes < 4 || payload_bytes > kMaxPayloadSize) {
        throw Error(Errc::config, "payload bytes must be within [4, " + std::to_string(kMaxPayloadSize) + "]");
    }
    if (!(duration_seconds >= 0) || !(drain_seconds >= 0)) {
        throw Error(Errc::config, "durations must be non-negative");
    }
    if (room != "new" && !is_valid_joincode(room)) {
        throw Error(Errc::config, "room must be a three digit code or \"new\"");
    }
    ConnectionSpec::parse(server);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size())));
    return values[rank == 0 ? 0 : rank - 1];
}

Json BotSummary::to_json() const {
    Json out{{"index", index},
             {"peer", peer_uuid},
             {"joined", joined},
             {"poses_sent", poses_sent},
             {"poses_received", poses_received},
             {"poses_expected", poses_expected},
             {"relay_mean_ms", relay_mean_ms},
             {"relay_p50_ms", relay_p50_ms},
             {"relay_p95_ms", relay_p95_ms},
             {"meter_samples", meter_samples},
             {"meter_mean_ms", meter_mean_ms},
             {"meter_p95_ms", meter_p95_ms},
             {"bytes_in", bytes_in},
             {"bytes_out", bytes_out}};
    if (!error.empty()) {
        out["error"] = error;
    }
    return out;
}

bool FleetSummary::complete() const {
    return std::all_of(bots.begin(), bots.end(), [](const BotSummary& b) { return b.joined && b.error.empty(); });
}

Json FleetSummary::to_json() const {
    Json bot_list = Json::array();
    for (const auto& bot : bots) {
        bot_list.push_back(bot.to_json());
    }
    return Json{{"server", config.server},
                {"room", joincode},
                {"bots", config.bots},
                {"pose_rate", config.pose_rate},
                {"payload_bytes", config.payload_bytes},
                {"duration", config.duration_seconds},
                {"elapsed_seconds", elapsed_seconds},
                {"relay_p50_ms", relay_p50_ms},
                {"relay_p95_ms", relay_p95_ms},
                {"expected", expected},
                {"lost", lost},
                {"bandwidth_bytes_per_second", bandwidth_bytes_per_second},
                {"complete", complete()},
                {"per_bot", std::move(bot_list)}};
}

FleetSummary bot_run(const BotConfig& config) {
    config.validate();
    FleetSummary fleet_summary;
    fleet_summary.config = config;
    if (config.duration_seconds == 0) {
        for (int i = 0; i < config.bots; ++i) {
            BotSummary idle;
            idle.index = i;
            fleet_summary.bots.push_back(idle);
        }
        return fleet_summary;
    }

    Fleet fleet(fleet_summary.config);
    std::vector<BotOutcome> outcomes(static_cast<std::size_t>(config.bots));
    const auto started = Clock::now();
    {
        IoRuntime io(1);
        std::vector<std::thread> threads;
        for (int i = 0; i < config.bots; ++i) {
            threads.emplace_back([&, i] { Bot(i, fleet, io).run(outcomes[static_cast<std::size_t>(i)]); });
        }
        for (auto& thread : threads) {
            thread.join();
        }
    }
    fleet_summary.elapsed_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    fleet_summary.joincode = config.room == "new" ? fleet.joincode : config.room;

    std::vector<double> all;
    std::uint64_t bytes = 0;
    for (auto& outcome : outcomes) {
        all.insert(all.end(), outcome.latencies.begin(), outcome.latencies.end());
        const auto& bot = outcome.summary;
        fleet_summary.expected += bot.poses_expected;
        fleet_summary.lost += bot.poses_expected > bot.poses_received ? bot.poses_expected - bot.poses_received : 0;
        bytes += bot.bytes_in + bot.bytes_out;
        fleet_summary.bots.push_back(std::move(outcome.summary));
    }
    fleet_summary.relay_p50_ms = percentile(all, 0.5);
    fleet_summary.relay_p95_ms = percentile(all, 0.95);
    fleet_summary.bandwidth_bytes_per_second = static_cast<double>(bytes) / config.duration_seconds;
    return fleet_summary;
}

} // namespace ubiq::harness
