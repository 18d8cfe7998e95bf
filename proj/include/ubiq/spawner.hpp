#pragma once

// Replicated object spawning. The spawning peer mints a NetworkId, builds the
// blueprint locally and broadcasts {"type":"spawn","blueprint":…,"networkId":…};
// every other Spawner builds the same blueprint bound to that id, so the
// spawned components address each other with no further synchronisation.

#include "ubiq/scene.hpp"
#include "ubiq/signal.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace ubiq {

/// Base for whatever a blueprint instantiates; owns its NetworkContexts.
class SpawnedObject {
public:
    virtual ~SpawnedObject() = default;
};

using BlueprintFactory = std::function<std::unique_ptr<SpawnedObject>(PeerScene& scene, NetworkId id)>;

class BlueprintRegistry {
public:
    /// Throws Error(config) for a duplicate name.
    void add(const std::string& name, BlueprintFactory factory);
    bool contains(const std::string& name) const { return factories_.contains(name); }
    /// Throws Error(unknown_blueprint).
    std::unique_ptr<SpawnedObject> instantiate(const std::string& name, PeerScene& scene, NetworkId id) const;

private:
    std::map<std::string, BlueprintFactory> factories_;
};

enum class SpawnOutcome { instantiated, ignored };

class Spawner final : public MessageHandler {
public:
    Spawner(PeerScene scene, const BlueprintRegistry& registry, std::optional<std::uint64_t> seed = std::nullopt);

    Spawner(const Spawner&) = delete;
    Spawner& operator=(const Spawner&) = delete;

    /// Throws Error(unknown_blueprint) without sending anything.
    NetworkId spawn(const std::string& blueprint);
    SpawnOutcome on_spawn_message(const Json& payload);

    /// (id, blueprint) of every live instance.
    const std::map<NetworkId, std::string>& instances() const noexcept { return blueprints_; }
    SpawnedObject* find(NetworkId id) const;

    Signal<NetworkId, const std::string&> spawned;
    Signal<const std::string&> warnings;

    void process_message(const ReceivedMessage& message) override;

private:
    PeerScene scene_;
    const BlueprintRegistry& registry_;
    Rng rng_;
    std::map<NetworkId, std::string> blueprints_;
    std::map<NetworkId, std::unique_ptr<SpawnedObject>> objects_;
    NetworkContext context_;
};

} // namespace ubiq
