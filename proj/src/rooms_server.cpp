#include "ubiq/error.hpp"
#include "ubiq/rooms.hpp"

#include <algorithm>
#include <mutex>
#include <unordered_map>

namespace ubiq {

struct RoomServer::Impl : std::enable_shared_from_this<RoomServer::Impl> {
    struct Member {
        ConnectionPtr connection;
        PeerRecord peer;
    };

    struct Room {
        RoomRecord record;
        std::vector<Member> members;
        Clock::time_point empty_since;
    };

    struct Client {
        ConnectionPtr connection;
        std::optional<NetworkId> reply_id;
        std::string room_uuid;
    };

    explicit Impl(RoomServerOptions opts)
        : options(std::move(opts)), rng(options.seed ? Rng(*options.seed) : seeded_from_device()) {}

    RoomServerOptions options;
    Rng rng;

    mutable std::mutex mutex;
    std::map<std::string, Room> rooms;
    std::map<std::string, std::string> codes; // joincode -> uuid
    std::unordered_map<std::uint64_t, Client> clients;
    RoomServerStats stats;

    void emit(const std::string& event, const Json& args) const {
        if (options.on_event) {
            options.on_event(event, args);
        }
    }

    void reply(const Client& client, const std::string& type, const Json& args) const {
        if (!client.reply_id) {
            return;
        }
        const Json message{{"type", type}, {"args", args}};
        client.connection->send(Frame::make(Address{*client.reply_id, ids::kRoomClient}, to_text_object(message)));
    }

    void send_to(const Member& member, const std::string& type, const Json& args) const {
        const Json message{{"type", type}, {"args", args}};
        member.connection->send(Frame::make(Address{member.peer.scene_id, ids::kRoomClient}, to_text_object(message)));
    }

    void reject(Client& client, const std::string& reason, const std::string& request) {
        ++stats.rejections;
        reply(client, "Rejected", Json{{"reason", reason}, {"request", request}});
    }

    Room* room_of(const Client& client) {
        if (client.room_uuid.empty()) {
            return nullptr;
        }
        auto it = rooms.find(client.room_uuid);
        return it == rooms.end() ? nullptr : &it->second;
    }

    void remove_member(Client& client) {
        Room* room = room_of(client);
        client.room_uuid.clear();
        if (room == nullptr) {
            return;
        }
        auto it = std::find_if(room->members.begin(), room->members.end(), [&](const Member& m) {
            return m.connection->id() == client.connection->id();
        });
        if (it == room->members.end()) {
            return;
        }
        const PeerRecord departed = it->peer;
        room->members.erase(it);
        for (const auto& member : room->members) {
            send_to(member, "PeerRemoved", Json{{"peer", to_json(departed)}});
        }
        if (room->members.empty()) {
            room->empty_since = options.clock();
        }
        emit("PeerLeft", Json{{"room", room->record.uuid}, {"peer", departed.uuid}});
    }

    std::size_t fanout(const Room& room, std::uint64_t from, const Frame& frame) {
        std::size_t delivered = 0;
        for (const auto& member : room.members) {
            if (member.connection->id() == from) {
                continue;
            }
            member.connection->send(frame);
            ++delivered;
        }
        ++stats.forwarded_messages;
        stats.forwarded_deliveries += delivered;
        return delivered;
    }

    void handle_join(Client& client, const Json& args) {
        PeerRecord peer;
        try {
            peer = peer_from_json(args.at("peer"));
        } catch (const std::exception&) {
            reject(client, "bad request", "Join");
            return;
        }
        if (!client.reply_id) {
            client.reply_id = peer.scene_id;
        }
        if (serialized_size(peer.properties) > kMaxPropertiesBytes) {
            reject(client, "properties too large", "Join");
            return;
        }

        Room* target = nullptr;
        if (args.contains("joincode")) {
            const auto& code = args["joincode"];
            auto it = code.is_string() ? codes.find(code.get<std::string>()) : codes.end();
            if (it == codes.end()) {
                reject(client, "no such room", "Join");
                return;
            }
            target = &rooms.at(it->second);
        } else if (args.contains("uuid")) {
            const auto& uuid = args["uuid"];
            auto it = uuid.is_string() ? rooms.find(uuid.get<std::string>()) : rooms.end();
            if (it == rooms.end()) {
                reject(client, "no such room", "Join");
                return;
            }
            target = &it->second;
        } else if (args.contains("name")) {
            std::set<std::string> live;
            for (const auto& [code, uuid] : codes) {
                live.insert(code);
            }
            auto code = allocate_code(live, rng);
            if (!code) {
                reject(client, "server full", "Join");
                return;
            }
            Room room;
            room.record.uuid = make_uuid(rng);
            room.record.joincode = *code;
            room.record.name = args["name"].is_string() ? args["name"].get<std::string>() : std::string{};
            room.record.publish = args.value("publish", false);
            room.empty_since = options.clock();
            codes[*code] = room.record.uuid;
            const auto uuid = room.record.uuid;
            target = &rooms.emplace(uuid, std::move(room)).first->second;
            emit("RoomCreated", Json{{"room", uuid}, {"joincode", *code}, {"name", target->record.name}});
        } else {
            reject(client, "bad request", "Join");
            return;
        }

        // One room per connection: joining anywhere leaves the current room.
        if (!client.room_uuid.empty()) {
            remove_member(client);
        }

        Json others = Json::array();
        for (const auto& member : target->members) {
            others.push_back(to_json(member.peer));
        }
        for (const auto& member : target->members) {
            send_to(member, "PeerAdded", Json{{"peer", to_json(peer)}});
        }
        target->members.push_back(Member{client.connection, peer});
        client.room_uuid = target->record.uuid;
        client.reply_id = peer.scene_id;
        reply(client, "SetRoom", Json{{"room", to_json(target->record)}, {"peers", others}});
        emit("PeerJoined", Json{{"room", target->record.uuid}, {"peer", peer.uuid}});
    }

    void handle_protocol(Client& client, const Frame& frame) {
        ++stats.protocol_messages;
        Json message;
        try {
            message = from_text_object(frame.payload());
        } catch (const Error&) {
            reject(client, "bad request", "");
            return;
        }
        if (!message.is_object() || !message.contains("type") || !message["type"].is_string()) {
            reject(client, "bad request", "");
            return;
        }
        if (auto it = message.find("sceneid"); it != message.end() && it->is_string()) {
            try {
                client.reply_id = NetworkId::parse(it->get<std::string>());
            } catch (const Error&) {
                reject(client, "bad request", "");
                return;
            }
        }
        const auto type = message["type"].get<std::string>();
        const Json args = message.value("args", Json(nullptr));

        if (type == "Join") {
            if (!args.is_object()) {
                reject(client, "bad request", type);
                return;
            }
            handle_join(client, args);
        } else if (type == "Leave") {
            remove_member(client);
        } else if (type == "UpdatePeerProperties" || type == "UpdateRoomProperties") {
            Room* room = room_of(client);
            if (room == nullptr) {
                reject(client, "not in room", type);
                return;
            }
            Properties updates;
            try {
                updates = properties_from_json(args);
            } catch (const Error&) {
                reject(client, "bad request", type);
                return;
            }
            if (updates.empty()) {
                return;
            }
            if (type == "UpdatePeerProperties") {
                auto it = std::find_if(room->members.begin(), room->members.end(), [&](const Member& m) {
                    return m.connection->id() == client.connection->id();
                });
                Properties merged = it->peer.properties;
                for (const auto& [key, value] : updates) {
                    merged[key] = value;
                }
                if (serialized_size(merged) > kMaxPropertiesBytes) {
                    reject(client, "properties too large", type);
                    return;
                }
                it->peer.properties = std::move(merged);
                for (const auto& member : room->members) {
                    if (member.connection->id() != client.connection->id()) {
                        send_to(member, "PeerUpdated", Json{{"peer", to_json(it->peer)}});
                    }
                }
            } else {
                Properties merged = room->record.properties;
                for (const auto& [key, value] : updates) {
                    merged[key] = value;
                }
                if (serialized_size(merged) > kMaxPropertiesBytes) {
                    reject(client, "properties too large", type);
                    return;
                }
                room->record.properties = std::move(merged);
                for (const auto& member : room->members) {
                    send_to(member, "RoomUpdated", Json{{"room", to_json(room->record)}});
                }
            }
        } else if (type == "DiscoverRooms") {
            Json listing = Json::array();
            for (const auto& [uuid, room] : rooms) {
                if (room.record.publish) {
                    listing.push_back(Json{{"uuid", uuid},
                                           {"joincode", room.record.joincode},
                                           {"name", room.record.name},
                                           {"members", room.members.size()}});
                }
            }
            reply(client, "Rooms", listing);
        } else if (type == "Ping") {
            reply(client, "Pong", Json{{"id", args.is_object() ? args.value("id", Json(0)) : Json(0)}});
        } else {
            reject(client, "bad request", type);
        }
    }
};

RoomServer::RoomServer(RoomServerOptions options) : impl_(std::make_shared<Impl>(std::move(options))) {}

RoomServer::~RoomServer() { close_all(); }

void RoomServer::attach(const ConnectionPtr& connection) {
    {
        std::lock_guard lock(impl_->mutex);
        impl_->clients[connection->id()] = Impl::Client{connection, std::nullopt, {}};
        impl_->stats.connections = impl_->clients.size();
    }
    connection->set_outbound_limit(impl_->options.outbound_limit);
    if (impl_->options.inject_send_delay.count() > 0) {
        connection->set_send_delay(impl_->options.inject_send_delay);
    }
    std::weak_ptr<Impl> weak = impl_;
    std::weak_ptr<Connection> weak_connection = connection;
    const auto id = connection->id();
    Connection::Handlers handlers;
    handlers.on_frame = [weak, weak_connection](const Frame& frame) {
        auto impl = weak.lock();
        auto from = weak_connection.lock();
        if (!impl || !from) {
            return;
        }
        RoomServer::handle_impl(*impl, from, frame);
    };
    handlers.on_close = [weak, id](std::string_view) {
        if (auto impl = weak.lock()) {
            RoomServer::disconnect_impl(*impl, id);
        }
    };
    connection->start(std::move(handlers));
}

void RoomServer::handle(const ConnectionPtr& from, const Frame& frame) { handle_impl(*impl_, from, frame); }

void RoomServer::handle_impl(Impl& impl, const ConnectionPtr& from, const Frame& frame) {
    std::lock_guard lock(impl.mutex);
    auto it = impl.clients.find(from->id());
    if (it == impl.clients.end()) {
        it = impl.clients.emplace(from->id(), Impl::Client{from, std::nullopt, {}}).first;
    }
    auto& client = it->second;
    if (frame.size() - kLengthFieldSize > impl.options.max_message_bytes) {
        ++impl.stats.discarded;
        return;
    }
    if (frame.address() == ids::kRoomServerAddress) {
        impl.handle_protocol(client, frame);
        return;
    }
    if (const auto* room = impl.room_of(client)) {
        impl.fanout(*room, from->id(), frame);
        return;
    }
    ++impl.stats.discarded;
}

void RoomServer::disconnect(std::uint64_t connection_id) { disconnect_impl(*impl_, connection_id); }

void RoomServer::disconnect_impl(Impl& impl, std::uint64_t connection_id) {
    std::lock_guard lock(impl.mutex);
    auto it = impl.clients.find(connection_id);
    if (it == impl.clients.end()) {
        return;
    }
    impl.remove_member(it->second);
    impl.clients.erase(it);
    impl.stats.connections = impl.clients.size();
}

std::size_t RoomServer::fanout(const std::string& room_uuid, std::uint64_t from_connection, const Frame& frame) {
    std::lock_guard lock(impl_->mutex);
    auto it = impl_->rooms.find(room_uuid);
    if (it == impl_->rooms.end()) {
        return 0;
    }
    return impl_->fanout(it->second, from_connection, frame);
}

std::vector<std::string> RoomServer::evict_idle(Clock::time_point now) {
    std::lock_guard lock(impl_->mutex);
    std::vector<std::string> evicted;
    for (auto it = impl_->rooms.begin(); it != impl_->rooms.end();) {
        const auto& room = it->second;
        if (room.members.empty() && now - room.empty_since > impl_->options.idle_room_timeout) {
            evicted.push_back(it->first);
            impl_->codes.erase(room.record.joincode);
            impl_->emit("RoomEvicted", Json{{"room", it->first}, {"joincode", room.record.joincode}});
            it = impl_->rooms.erase(it);
        } else {
            ++it;
        }
    }
    return evicted;
}

void RoomServer::close_all() {
    std::vector<ConnectionPtr> connections;
    {
        std::lock_guard lock(impl_->mutex);
        for (const auto& [id, client] : impl_->clients) {
            connections.push_back(client.connection);
        }
    }
    for (const auto& connection : connections) {
        connection->close();
    }
}

RoomServerStats RoomServer::stats() const {
    std::lock_guard lock(impl_->mutex);
    auto stats = impl_->stats;
    stats.rooms = impl_->rooms.size();
    stats.connections = impl_->clients.size();
    return stats;
}

std::vector<RoomRecord> RoomServer::rooms() const {
    std::lock_guard lock(impl_->mutex);
    std::vector<RoomRecord> out;
    for (const auto& [uuid, room] : impl_->rooms) {
        out.push_back(room.record);
    }
    return out;
}

std::vector<PeerRecord> RoomServer::members(const std::string& room_uuid) const {
    std::lock_guard lock(impl_->mutex);
    std::vector<PeerRecord> out;
    if (auto it = impl_->rooms.find(room_uuid); it != impl_->rooms.end()) {
        for (const auto& member : it->second.members) {
            out.push_back(member.peer);
        }
    }
    return out;
}

} // namespace ubiq
