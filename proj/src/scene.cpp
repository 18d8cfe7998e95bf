#include "ubiq/scene.hpp"

#include "ubiq/error.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <unordered_map>

namespace ubiq {

namespace detail {

struct RegistryEntry {
    MessageHandler* handler;
    Address address;
    std::atomic<bool> active{true};

    RegistryEntry(MessageHandler* h, Address a) : handler(h), address(a) {}
};

struct SceneCore : std::enable_shared_from_this<SceneCore> {
    explicit SceneCore(NetworkId scene_id) : id(scene_id) {}

    const NetworkId id;

    mutable std::mutex registry_mutex;
    std::unordered_map<Address, std::vector<std::shared_ptr<RegistryEntry>>> registry;

    mutable std::mutex connection_mutex;
    std::vector<ConnectionPtr> connections;

    mutable std::mutex inbound_mutex;
    mutable std::condition_variable inbound_ready;
    std::deque<std::pair<std::uint64_t, Frame>> inbound;

    mutable std::mutex observer_mutex;
    std::shared_ptr<TrafficObserver> observer;
    std::function<void(const std::string&)> warn = [](const std::string& text) {
        std::cerr << "[ubiq] " << text << '\n';
    };

    std::atomic<bool> shut_down{false};
    std::atomic<std::uint64_t> delivered{0};
    std::atomic<std::uint64_t> dropped{0};
    std::atomic<std::uint64_t> callback_errors{0};
    std::atomic<std::uint64_t> connections_closed{0};

    std::shared_ptr<TrafficObserver> current_observer() const {
        std::lock_guard lock(observer_mutex);
        return observer;
    }

    void warning(const std::string& text) const {
        std::function<void(const std::string&)> sink;
        {
            std::lock_guard lock(observer_mutex);
            sink = warn;
        }
        if (sink) {
            sink(text);
        }
    }

    void unregister(const std::shared_ptr<RegistryEntry>& entry) {
        entry->active = false;
        std::lock_guard lock(registry_mutex);
        auto it = registry.find(entry->address);
        if (it == registry.end()) {
            return;
        }
        std::erase(it->second, entry);
        if (it->second.empty()) {
            registry.erase(it);
        }
    }
};

} // namespace detail

namespace {

Rng& id_rng() {
    thread_local Rng rng = seeded_from_device();
    return rng;
}

} // namespace

PeerScene::PeerScene() : PeerScene(generate_network_id(id_rng())) {}

PeerScene::PeerScene(NetworkId id) : core_(std::make_shared<detail::SceneCore>(id)) {
    if (!id.valid()) {
        throw Error(Errc::invalid_address, "scene id 0");
    }
}

NetworkId PeerScene::id() const noexcept { return core_->id; }

NetworkContext PeerScene::register_component(MessageHandler& handler, Address address) {
    if (!address.valid()) {
        throw Error(Errc::invalid_address, to_string(address));
    }
    std::lock_guard lock(core_->registry_mutex);
    auto& entries = core_->registry[address];
    const bool duplicate = std::any_of(entries.begin(), entries.end(),
                                       [&](const auto& entry) { return entry->handler == &handler; });
    if (duplicate) {
        throw Error(Errc::duplicate_registration, to_string(address));
    }
    auto entry = std::make_shared<detail::RegistryEntry>(&handler, address);
    entries.push_back(entry);
    return NetworkContext(core_, address, std::move(entry));
}

NetworkContext PeerScene::register_component(MessageHandler& handler, ComponentId component) {
    return register_component(handler, Address{id(), component});
}

void PeerScene::send(Address to, ByteView payload) {
    if (core_->shut_down) {
        throw Error(Errc::scene_closed, "send after shutdown");
    }
    const Frame frame = Frame::make(to, payload);
    std::vector<ConnectionPtr> targets;
    {
        std::lock_guard lock(core_->connection_mutex);
        targets = core_->connections;
    }
    const auto observer = core_->current_observer();
    for (const auto& connection : targets) {
        connection->send(frame);
        if (observer) {
            observer->on_outbound(frame);
        }
    }
}

void PeerScene::send_json(Address to, const Json& value) { send(to, to_text_object(value)); }

void PeerScene::add_connection(const ConnectionPtr& connection) {
    {
        std::lock_guard lock(core_->connection_mutex);
        core_->connections.push_back(connection);
    }
    std::weak_ptr<detail::SceneCore> weak = core_;
    const auto connection_id = connection->id();
    Connection::Handlers handlers;
    handlers.on_frame = [weak, connection_id](const Frame& frame) {
        auto core = weak.lock();
        if (!core) {
            return;
        }
        if (auto observer = core->current_observer()) {
            observer->on_inbound(frame);
        }
        {
            std::lock_guard lock(core->inbound_mutex);
            core->inbound.emplace_back(connection_id, frame);
        }
        core->inbound_ready.notify_all();
    };
    handlers.on_close = [weak, connection_id](std::string_view reason) {
        auto core = weak.lock();
        if (!core) {
            return;
        }
        {
            std::lock_guard lock(core->connection_mutex);
            std::erase_if(core->connections, [&](const auto& c) { return c->id() == connection_id; });
        }
        ++core->connections_closed;
        if (!core->shut_down) {
            core->warning("connection " + std::to_string(connection_id) + " closed: " + std::string(reason));
        }
        core->inbound_ready.notify_all();
    };
    connection->start(std::move(handlers));
}

ConnectionPtr PeerScene::connect(IoRuntime& io, const ConnectionSpec& spec) {
    auto connection = ubiq::connect(io, spec);
    add_connection(connection);
    return connection;
}

std::vector<ConnectionPtr> PeerScene::connections() const {
    std::lock_guard lock(core_->connection_mutex);
    return core_->connections;
}

std::size_t PeerScene::dispatch() {
    std::deque<std::pair<std::uint64_t, Frame>> batch;
    {
        std::lock_guard lock(core_->inbound_mutex);
        batch.swap(core_->inbound);
    }
    std::size_t callbacks = 0;
    std::vector<std::shared_ptr<detail::RegistryEntry>> targets;
    for (const auto& [connection_id, frame] : batch) {
        targets.clear();
        {
            std::lock_guard lock(core_->registry_mutex);
            if (auto it = core_->registry.find(frame.address()); it != core_->registry.end()) {
                targets = it->second;
            }
        }
        if (targets.empty()) {
            ++core_->dropped;
            continue;
        }
        const ReceivedMessage message{frame.address(), frame.payload(), connection_id};
        for (const auto& entry : targets) {
            if (!entry->active) {
                continue;
            }
            try {
                entry->handler->process_message(message);
            } catch (const std::exception& e) {
                ++core_->callback_errors;
                core_->warning("callback at " + to_string(frame.address()) + " failed: " + e.what());
            }
            ++callbacks;
        }
    }
    core_->delivered += callbacks;
    return callbacks;
}

bool PeerScene::wait_for_inbound(std::chrono::microseconds timeout) const {
    std::unique_lock lock(core_->inbound_mutex);
    return core_->inbound_ready.wait_for(lock, timeout, [this] { return !core_->inbound.empty(); });
}

std::size_t PeerScene::inbound_pending() const {
    std::lock_guard lock(core_->inbound_mutex);
    return core_->inbound.size();
}

void PeerScene::set_traffic_observer(std::shared_ptr<TrafficObserver> observer) {
    std::lock_guard lock(core_->observer_mutex);
    core_->observer = std::move(observer);
}

void PeerScene::set_warning_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(core_->observer_mutex);
    core_->warn = std::move(sink);
}

SceneCounters PeerScene::counters() const {
    return SceneCounters{core_->delivered, core_->dropped, core_->callback_errors, core_->connections_closed};
}

void PeerScene::shutdown() {
    if (core_->shut_down.exchange(true)) {
        return;
    }
    std::vector<ConnectionPtr> connections;
    {
        std::lock_guard lock(core_->connection_mutex);
        connections.swap(core_->connections);
    }
    for (const auto& connection : connections) {
        connection->close();
    }
}

bool PeerScene::is_shut_down() const { return core_->shut_down; }

NetworkContext::NetworkContext(std::weak_ptr<detail::SceneCore> scene, Address address,
                               std::shared_ptr<detail::RegistryEntry> entry)
    : scene_(std::move(scene)), address_(address), entry_(std::move(entry)) {}

NetworkContext& NetworkContext::operator=(NetworkContext&& other) noexcept {
    if (this != &other) {
        unregister();
        scene_ = std::move(other.scene_);
        address_ = other.address_;
        entry_ = std::move(other.entry_);
    }
    return *this;
}

NetworkContext::~NetworkContext() { unregister(); }

bool NetworkContext::live() const { return entry_ && entry_->active && !scene_.expired(); }

PeerScene NetworkContext::scene() const {
    auto core = scene_.lock();
    if (!core) {
        throw Error(Errc::scene_closed, "scene destroyed");
    }
    return PeerScene(std::move(core));
}

void NetworkContext::send(Address to, ByteView payload) const { scene().send(to, payload); }

void NetworkContext::send_json(Address to, const Json& value) const { send(to, to_text_object(value)); }

void NetworkContext::unregister() {
    if (!entry_) {
        return;
    }
    if (auto core = scene_.lock()) {
        core->unregister(entry_);
    } else {
        entry_->active = false;
    }
    entry_.reset();
}

SceneNode::SceneNode(std::string name) : name_(std::move(name)) {}

SceneNode& SceneNode::add_child(std::string name) {
    auto child = std::make_unique<SceneNode>(std::move(name));
    child->parent_ = this;
    children_.push_back(std::move(child));
    return *children_.back();
}

namespace {

const PeerScene* find_in_subtree(const SceneNode& node) {
    for (const auto& attachment : node.attachments()) {
        if (const auto* scene = std::get_if<PeerScene>(&attachment)) {
            return scene;
        }
    }
    for (const auto& child : node.children()) {
        if (const auto* scene = find_in_subtree(*child)) {
            return scene;
        }
    }
    return nullptr;
}

} // namespace

PeerScene resolve_scene(const SceneNode& node) {
    for (const SceneNode* ancestor = &node; ancestor != nullptr; ancestor = ancestor->parent()) {
        if (const auto* scene = find_in_subtree(*ancestor)) {
            return *scene;
        }
    }
    throw Error(Errc::unresolved_scene, "no PeerScene above node '" + node.name() + "'");
}

} // namespace ubiq
