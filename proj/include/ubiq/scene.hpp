#pragma once

// Per-peer message router. A PeerScene owns a registry of components keyed by
// Address and a set of connections. Sends go out on every connection (the
// network does fanout); inbound messages are queued by transport contexts and
// delivered to exactly-matching components when the owner calls dispatch().

#include "ubiq/transport.hpp"
#include "ubiq/wire.hpp"

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace ubiq {

/// A message as seen by a receiving component. The payload view is valid only
/// for the duration of the callback.
struct ReceivedMessage {
    Address address;
    ByteView payload;
    std::uint64_t connection_id = 0;

    /// Throws Error(parse_error).
    Json json() const { return from_text_object(payload); }
};

/// Component handle: anything that can receive messages.
class MessageHandler {
public:
    virtual ~MessageHandler() = default;
    virtual void process_message(const ReceivedMessage& message) = 0;
};

/// Observes every frame crossing a scene's connections. Called from transport
/// and sender contexts, so implementations must be thread-safe.
class TrafficObserver {
public:
    virtual ~TrafficObserver() = default;
    virtual void on_inbound(const Frame& frame) = 0;
    virtual void on_outbound(const Frame& frame) = 0;
};

struct SceneCounters {
    std::uint64_t delivered = 0;
    std::uint64_t dropped_unmatched = 0;
    std::uint64_t callback_errors = 0;
    std::uint64_t connections_closed = 0;
};

namespace detail {
struct SceneCore;
struct RegistryEntry;
} // namespace detail

class NetworkContext;

/// Shared handle to one peer's router; copies refer to the same scene.
class PeerScene {
public:
    /// New scene with a freshly generated id.
    PeerScene();
    explicit PeerScene(NetworkId id);

    NetworkId id() const noexcept;

    /// Throws Error(invalid_address) or Error(duplicate_registration).
    NetworkContext register_component(MessageHandler& handler, Address address);
    /// Registers at (scene id, component).
    NetworkContext register_component(MessageHandler& handler, ComponentId component);

    /// Queues one message on every connection. Thread-safe. Throws
    /// Error(oversize) or Error(scene_closed).
    void send(Address to, ByteView payload);
    void send_json(Address to, const Json& value);

    /// Adds a connection and starts pumping its inbound frames into this scene.
    void add_connection(const ConnectionPtr& connection);
    /// Convenience: connect over tcp/websocket and add.
    ConnectionPtr connect(IoRuntime& io, const ConnectionSpec& spec);
    std::vector<ConnectionPtr> connections() const;

    /// Delivers all queued inbound messages; returns the number of callbacks run.
    std::size_t dispatch();
    /// Waits until inbound messages are queued or the timeout passes.
    bool wait_for_inbound(std::chrono::microseconds timeout) const;
    std::size_t inbound_pending() const;

    void set_traffic_observer(std::shared_ptr<TrafficObserver> observer);
    /// Diagnostics from isolated callback failures and closed connections.
    void set_warning_sink(std::function<void(const std::string&)> sink);

    SceneCounters counters() const;

    /// Closes all connections; further sends fail.
    void shutdown();
    bool is_shut_down() const;

    friend bool operator==(const PeerScene& a, const PeerScene& b) noexcept { return a.core_ == b.core_; }

private:
    friend class NetworkContext;
    explicit PeerScene(std::shared_ptr<detail::SceneCore> core) : core_(std::move(core)) {}

    std::shared_ptr<detail::SceneCore> core_;
};

/// Registration token returned to a component. Unregisters on destruction.
class NetworkContext {
public:
    NetworkContext() = default;
    NetworkContext(NetworkContext&&) noexcept = default;
    NetworkContext& operator=(NetworkContext&& other) noexcept;
    ~NetworkContext();

    NetworkContext(const NetworkContext&) = delete;
    NetworkContext& operator=(const NetworkContext&) = delete;

    Address address() const noexcept { return address_; }
    bool live() const;
    /// Throws Error(scene_closed) once the scene is gone.
    PeerScene scene() const;

    /// Sends to the same address this component is registered at.
    void send(ByteView payload) const { send(address_, payload); }
    void send(Address to, ByteView payload) const;
    void send_json(const Json& value) const { send_json(address_, value); }
    void send_json(Address to, const Json& value) const;

    void unregister();

private:
    friend class PeerScene;
    NetworkContext(std::weak_ptr<detail::SceneCore> scene, Address address,
                   std::shared_ptr<detail::RegistryEntry> entry);

    std::weak_ptr<detail::SceneCore> scene_;
    Address address_;
    std::shared_ptr<detail::RegistryEntry> entry_;
};

/// Node of a scene graph forest. Nodes own their children; attachments are
/// components or PeerScenes.
class SceneNode {
public:
    using Attachment = std::variant<PeerScene, MessageHandler*>;

    explicit SceneNode(std::string name = {});

    SceneNode(const SceneNode&) = delete;
    SceneNode& operator=(const SceneNode&) = delete;

    SceneNode& add_child(std::string name = {});
    void attach(PeerScene scene) { attachments_.emplace_back(std::move(scene)); }
    void attach(MessageHandler& component) { attachments_.emplace_back(&component); }

    const std::string& name() const noexcept { return name_; }
    SceneNode* parent() const noexcept { return parent_; }
    const std::vector<std::unique_ptr<SceneNode>>& children() const noexcept { return children_; }
    const std::vector<Attachment>& attachments() const noexcept { return attachments_; }

private:
    std::string name_;
    SceneNode* parent_ = nullptr;
    std::vector<std::unique_ptr<SceneNode>> children_;
    std::vector<Attachment> attachments_;
};

/// The first PeerScene found walking up from `node`, searching each ancestor's
/// subtree in pre-order (children in insertion order). Throws
/// Error(unresolved_scene).
PeerScene resolve_scene(const SceneNode& node);

} // namespace ubiq
