#include "ubiq/error.hpp"
#include "ubiq/rooms.hpp"

namespace ubiq {

namespace {

const std::string& require_string(const Json& object, const char* key) {
    auto it = object.find(key);
    if (it == object.end() || !it->is_string()) {
        throw Error(Errc::parse_error, std::string("missing string field '") + key + "'");
    }
    return it->get_ref<const std::string&>();
}

Rng& uuid_rng() {
    thread_local Rng rng = seeded_from_device();
    return rng;
}

} // namespace

Json to_json(const Properties& properties) {
    Json out = Json::object();
    for (const auto& [key, value] : properties) {
        out[key] = value;
    }
    return out;
}

Json to_json(const RoomRecord& room) {
    return Json{{"uuid", room.uuid},
                {"joincode", room.joincode},
                {"name", room.name},
                {"publish", room.publish},
                {"properties", to_json(room.properties)}};
}

Json to_json(const PeerRecord& peer) {
    return Json{{"uuid", peer.uuid}, {"sceneid", peer.scene_id.to_string()}, {"properties", to_json(peer.properties)}};
}

Properties properties_from_json(const Json& value) {
    if (value.is_null()) {
        return {};
    }
    if (!value.is_object()) {
        throw Error(Errc::parse_error, "properties must be an object");
    }
    Properties out;
    for (const auto& [key, item] : value.items()) {
        if (!item.is_string()) {
            throw Error(Errc::parse_error, "property '" + key + "' is not a string");
        }
        out[key] = item.get<std::string>();
    }
    return out;
}

RoomRecord room_from_json(const Json& value) {
    if (!value.is_object()) {
        throw Error(Errc::parse_error, "room must be an object");
    }
    RoomRecord room;
    room.uuid = require_string(value, "uuid");
    room.joincode = require_string(value, "joincode");
    room.name = value.value("name", std::string{});
    room.publish = value.value("publish", false);
    room.properties = properties_from_json(value.value("properties", Json(nullptr)));
    return room;
}

PeerRecord peer_from_json(const Json& value) {
    if (!value.is_object()) {
        throw Error(Errc::parse_error, "peer must be an object");
    }
    PeerRecord peer;
    peer.uuid = require_string(value, "uuid");
    peer.scene_id = NetworkId::parse(require_string(value, "sceneid"));
    peer.properties = properties_from_json(value.value("properties", Json(nullptr)));
    return peer;
}

std::size_t serialized_size(const Properties& properties) { return to_json(properties).dump().size(); }

bool is_valid_joincode(std::string_view code) {
    return code.size() == 3 && std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<std::string> allocate_code(const std::set<std::string>& live, Rng& rng) {
    std::vector<std::string> free_codes;
    free_codes.reserve(1000);
    char text[4];
    for (int i = 0; i < 1000; ++i) {
        std::snprintf(text, sizeof text, "%03d", i);
        if (!live.contains(text)) {
            free_codes.emplace_back(text);
        }
    }
    if (free_codes.empty()) {
        return std::nullopt;
    }
    return free_codes[uniform_below(rng, free_codes.size())];
}

RoomClient::RoomClient(PeerScene scene, std::string peer_uuid)
    : scene_(std::move(scene)),
      me_{peer_uuid.empty() ? make_uuid(uuid_rng()) : std::move(peer_uuid), scene_.id(), {}},
      context_(scene_.register_component(*this, ids::kRoomClient)) {}

ConnectionPtr RoomClient::connect(IoRuntime& io, const ConnectionSpec& spec) { return scene_.connect(io, spec); }

void RoomClient::request(const std::string& type, const Json& args) {
    Json message{{"type", type}, {"sceneid", me_.scene_id.to_string()}};
    if (!args.is_null()) {
        message["args"] = args;
    }
    context_.send_json(ids::kRoomServerAddress, message);
}

void RoomClient::join(const JoinTarget& target) {
    Json args{{"peer", to_json(me_)}};
    switch (target.kind) {
    case JoinTarget::Kind::joincode: args["joincode"] = target.value; break;
    case JoinTarget::Kind::uuid: args["uuid"] = target.value; break;
    case JoinTarget::Kind::create:
        args["name"] = target.value;
        args["publish"] = target.publish;
        break;
    }
    request("Join", args);
}

void RoomClient::leave() {
    if (!room_) {
        return;
    }
    request("Leave");
    auto departed = std::move(peers_);
    peers_.clear();
    room_.reset();
    for (const auto& [uuid, peer] : departed) {
        peer_removed(peer);
    }
    left_room();
}

void RoomClient::set_peer_properties(const Properties& updates) {
    if (!room_) {
        throw Error(Errc::not_in_room, "set_peer_properties before joining");
    }
    if (updates.empty()) {
        return;
    }
    Properties merged = me_.properties;
    for (const auto& [key, value] : updates) {
        merged[key] = value;
    }
    if (serialized_size(merged) > kMaxPropertiesBytes) {
        throw Error(Errc::properties_too_large, std::to_string(serialized_size(merged)) + " bytes");
    }
    me_.properties = std::move(merged);
    request("UpdatePeerProperties", to_json(updates));
}

void RoomClient::set_room_properties(const Properties& updates) {
    if (!room_) {
        throw Error(Errc::not_in_room, "set_room_properties before joining");
    }
    if (updates.empty()) {
        return;
    }
    Properties merged = room_->properties;
    for (const auto& [key, value] : updates) {
        merged[key] = value;
    }
    if (serialized_size(merged) > kMaxPropertiesBytes) {
        throw Error(Errc::properties_too_large, std::to_string(serialized_size(merged)) + " bytes");
    }
    request("UpdateRoomProperties", to_json(updates));
}

void RoomClient::set_initial_properties(const Properties& properties) {
    if (room_) {
        throw Error(Errc::config, "initial properties can only be set outside a room");
    }
    if (serialized_size(properties) > kMaxPropertiesBytes) {
        throw Error(Errc::properties_too_large, std::to_string(serialized_size(properties)) + " bytes");
    }
    me_.properties = properties;
}

void RoomClient::discover() { request("DiscoverRooms"); }

void RoomClient::ping(std::uint64_t id) { request("Ping", Json{{"id", id}}); }

void RoomClient::process_message(const ReceivedMessage& message) {
    const Json json = message.json();
    const std::string type = json.value("type", std::string{});
    const Json args = json.value("args", Json(nullptr));

    if (type == "SetRoom") {
        auto previous = std::move(peers_);
        peers_.clear();
        for (const auto& [uuid, peer] : previous) {
            peer_removed(peer);
        }
        room_ = room_from_json(args.at("room"));
        for (const auto& item : args.value("peers", Json::array())) {
            auto peer = peer_from_json(item);
            if (peer.uuid != me_.uuid) {
                peers_[peer.uuid] = std::move(peer);
            }
        }
        joined_room(*room_);
        for (const auto& [uuid, peer] : peers_) {
            peer_added(peer);
        }
    } else if (type == "PeerAdded") {
        auto peer = peer_from_json(args.at("peer"));
        if (!room_ || peer.uuid == me_.uuid) {
            return;
        }
        auto [it, inserted] = peers_.insert_or_assign(peer.uuid, peer);
        if (inserted) {
            peer_added(it->second);
        } else {
            peer_updated(it->second);
        }
    } else if (type == "PeerRemoved") {
        auto peer = peer_from_json(args.at("peer"));
        auto it = peers_.find(peer.uuid);
        if (it == peers_.end()) {
            return;
        }
        auto removed = std::move(it->second);
        peers_.erase(it);
        peer_removed(removed);
    } else if (type == "PeerUpdated") {
        auto peer = peer_from_json(args.at("peer"));
        auto it = peers_.find(peer.uuid);
        if (it == peers_.end()) {
            return;
        }
        it->second = std::move(peer);
        peer_updated(it->second);
    } else if (type == "RoomUpdated") {
        auto room = room_from_json(args.at("room"));
        if (!room_ || room.uuid != room_->uuid) {
            return;
        }
        room_ = std::move(room);
        room_updated(*room_);
    } else if (type == "Rooms") {
        std::vector<RoomSummary> listing;
        for (const auto& item : args) {
            listing.push_back(RoomSummary{require_string(item, "uuid"), require_string(item, "joincode"),
                                          item.value("name", std::string{}), item.value("members", std::size_t{0})});
        }
        rooms_discovered(listing);
    } else if (type == "Pong") {
        pong(args.value("id", std::uint64_t{0}));
    } else if (type == "Rejected") {
        rejected(args.value("reason", std::string{"rejected"}));
    } else {
        throw Error(Errc::parse_error, "unknown rooms message type '" + type + "'");
    }
}

} // namespace ubiq
