#include "ubiq/latency.hpp"

#include <set>
#include <sstream>

namespace ubiq {

namespace {

std::int64_t to_us(LatencyMeter::Clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::microseconds>(t.time_since_epoch()).count();
}

// Pending pings older than this are treated as lost.
constexpr std::int64_t kPendingHorizonUs = 30'000'000;

} // namespace

void LatencyMatrix::record(const std::string& from, const std::string& to, double ms) {
    cells_[{from, to}].add(ms);
}

std::optional<RunningStats> LatencyMatrix::get(const std::string& from, const std::string& to) const {
    auto it = cells_.find({from, to});
    if (it == cells_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<std::string> LatencyMatrix::peers() const {
    std::set<std::string> all;
    for (const auto& [key, stats] : cells_) {
        all.insert(key.first);
        all.insert(key.second);
    }
    return {all.begin(), all.end()};
}

void LatencyMatrix::merge(const LatencyMatrix& other) {
    for (const auto& [key, stats] : other.cells_) {
        auto& mine = cells_[key];
        const auto total = mine.count + stats.count;
        if (total == 0) {
            continue;
        }
        mine.mean = (mine.mean * static_cast<double>(mine.count) + stats.mean * static_cast<double>(stats.count)) /
                    static_cast<double>(total);
        mine.count = total;
        mine.last = stats.last;
    }
}

std::string LatencyMatrix::to_csv() const {
    const auto all = peers();
    std::ostringstream out;
    out << "from";
    for (const auto& peer : all) {
        out << ',' << peer;
    }
    out << '\n';
    for (const auto& from : all) {
        out << from;
        for (const auto& to : all) {
            out << ',';
            if (from == to) {
                continue;
            }
            if (auto stats = get(from, to)) {
                out << stats->mean;
            }
        }
        out << '\n';
    }
    return out.str();
}

LatencyMeter::LatencyMeter(PeerScene scene, RoomClient& rooms, std::function<Clock::time_point()> clock,
                           EventLogger* log)
    : scene_(std::move(scene)),
      rooms_(rooms),
      clock_(std::move(clock)),
      log_(log),
      context_(scene_.register_component(*this, ids::kLatencyMeter)) {
    for (const auto& [uuid, peer] : rooms_.peers()) {
        targets_[uuid] = peer.scene_id;
    }
    added_slot_ = rooms_.peer_added.connect([this](const PeerRecord& peer) { targets_[peer.uuid] = peer.scene_id; });
    removed_slot_ = rooms_.peer_removed.connect([this](const PeerRecord& peer) { targets_.erase(peer.uuid); });
}

LatencyMeter::~LatencyMeter() {
    rooms_.peer_added.disconnect(added_slot_);
    rooms_.peer_removed.disconnect(removed_slot_);
}

std::size_t LatencyMeter::tick(Clock::time_point now) {
    if (next_due_ && now < *next_due_) {
        return 0;
    }
    next_due_ = next_due_ ? *next_due_ + period_ : now + period_;
    if (*next_due_ <= now) {
        next_due_ = now + period_;
    }
    const auto sent_us = to_us(now);
    std::erase_if(pending_, [&](const auto& entry) { return sent_us - entry.second.sent_us > kPendingHorizonUs; });
    const auto me = scene_.id().to_string();
    std::size_t sent = 0;
    for (const auto& [uuid, scene_id] : targets_) {
        const auto id = next_id_++;
        pending_[id] = Pending{uuid, sent_us};
        context_.send_json(Address{scene_id, ids::kLatencyMeter},
                           Json{{"type", "ping"}, {"id", id}, {"t", sent_us}, {"from", me}});
        ++sent;
    }
    return sent;
}

void LatencyMeter::process_message(const ReceivedMessage& message) {
    const Json json = message.json();
    const auto type = json.value("type", std::string{});
    if (type == "ping") {
        const auto from = NetworkId::parse(json.at("from").get<std::string>());
        context_.send_json(Address{from, ids::kLatencyMeter}, Json{{"type", "pong"},
                                                                  {"id", json.at("id")},
                                                                  {"t", json.at("t")},
                                                                  {"from", scene_.id().to_string()}});
        return;
    }
    if (type != "pong") {
        return;
    }
    const auto id = json.at("id").get<std::uint64_t>();
    auto it = pending_.find(id);
    if (it == pending_.end()) {
        return;
    }
    const auto rtt_us = to_us(clock_()) - json.at("t").get<std::int64_t>();
    const double half_rtt_ms = static_cast<double>(rtt_us) / 2000.0;
    const auto& me = rooms_.me().uuid;
    matrix_.record(me, it->second.peer_uuid, half_rtt_ms);
    samples_.push_back(half_rtt_ms);
    if (log_ != nullptr) {
        log_->log("Latency", Json{{"from", me}, {"to", it->second.peer_uuid}, {"ms", half_rtt_ms}});
    }
    pending_.erase(it);
}

} // namespace ubiq
