#include "ubiq/spawner.hpp"

#include "ubiq/error.hpp"

namespace ubiq {

void BlueprintRegistry::add(const std::string& name, BlueprintFactory factory) {
    if (!factories_.emplace(name, std::move(factory)).second) {
        throw Error(Errc::config, "blueprint '" + name + "' already registered");
    }
}

std::unique_ptr<SpawnedObject> BlueprintRegistry::instantiate(const std::string& name, PeerScene& scene,
                                                              NetworkId id) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) {
        throw Error(Errc::unknown_blueprint, name);
    }
    return it->second(scene, id);
}

Spawner::Spawner(PeerScene scene, const BlueprintRegistry& registry, std::optional<std::uint64_t> seed)
    : scene_(std::move(scene)),
      registry_(registry),
      rng_(seed ? Rng(*seed) : seeded_from_device()),
      context_(scene_.register_component(*this, Address{ids::kSpawnerObject, ids::kSpawner})) {}

NetworkId Spawner::spawn(const std::string& blueprint) {
    if (!registry_.contains(blueprint)) {
        throw Error(Errc::unknown_blueprint, blueprint);
    }
    NetworkId id = generate_network_id(rng_);
    while (objects_.contains(id)) {
        id = generate_network_id(rng_);
    }
    objects_[id] = registry_.instantiate(blueprint, scene_, id);
    blueprints_[id] = blueprint;
    context_.send_json(Json{{"type", "spawn"}, {"blueprint", blueprint}, {"networkId", id.to_string()}});
    spawned(id, blueprint);
    return id;
}

SpawnOutcome Spawner::on_spawn_message(const Json& payload) {
    if (payload.value("type", std::string{}) != "spawn") {
        return SpawnOutcome::ignored;
    }
    const auto blueprint = payload.at("blueprint").get<std::string>();
    const auto id = NetworkId::parse(payload.at("networkId").get<std::string>());
    if (objects_.contains(id)) {
        warnings("duplicate spawn for " + id.to_string() + " ignored");
        return SpawnOutcome::ignored;
    }
    if (!registry_.contains(blueprint)) {
        warnings("unknown blueprint '" + blueprint + "' ignored");
        return SpawnOutcome::ignored;
    }
    objects_[id] = registry_.instantiate(blueprint, scene_, id);
    blueprints_[id] = blueprint;
    spawned(id, blueprint);
    return SpawnOutcome::instantiated;
}

SpawnedObject* Spawner::find(NetworkId id) const {
    auto it = objects_.find(id);
    return it == objects_.end() ? nullptr : it->second.get();
}

void Spawner::process_message(const ReceivedMessage& message) { on_spawn_message(message.json()); }

} // namespace ubiq
