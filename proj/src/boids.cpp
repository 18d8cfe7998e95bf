#include "ubiq/boids.hpp"

#include "ubiq/error.hpp"
#include "ubiq/random.hpp"
#include "ubiq/rooms.hpp"
#include "ubiq/transport.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

namespace ubiq::harness {

void FlockParams::validate() const {
    if (!(dt > 0)) {
        throw Error(Errc::config, "dt must be positive");
    }
    if (cohesion_w < 0 || alignment_w < 0 || separation_w < 0) {
        throw Error(Errc::config, "weights must be non-negative");
    }
    if (!(v_max > 0) || neighbor_radius < 0) {
        throw Error(Errc::config, "v_max must be positive and radius non-negative");
    }
}

FlockInertia flock_inertia(std::span<const BoidState> states) {
    if (states.empty()) {
        throw Error(Errc::undefined_flock, "inertia of an empty flock");
    }
    std::vector<const BoidState*> ordered;
    ordered.reserve(states.size());
    for (const auto& state : states) {
        ordered.push_back(&state);
    }
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->boid_id < b->boid_id; });
    Vec3 position_sum;
    Vec3 velocity_sum;
    for (const auto* state : ordered) {
        position_sum += state->position;
        velocity_sum += state->velocity;
    }
    const double inv = 1.0 / static_cast<double>(ordered.size());
    return {inv * position_sum, inv * velocity_sum};
}

FlockInertia flock_inertia(const Flock& flock) {
    std::vector<BoidState> states;
    states.reserve(flock.size());
    for (const auto& [id, state] : flock) {
        states.push_back(state);
    }
    return flock_inertia(states);
}

std::vector<BoidState> flock_step(const Flock& flock, std::span<const std::uint32_t> owned,
                                  const FlockParams& params) {
    for (const auto& [id, state] : flock) {
        if (!state.position.finite() || !state.velocity.finite()) {
            throw Error(Errc::simulation_fault, "boid " + std::to_string(id) + " has a non-finite state");
        }
    }
    const auto inertia = flock_inertia(flock);
    const double radius_sq = params.neighbor_radius * params.neighbor_radius;

    std::vector<std::uint32_t> ids(owned.begin(), owned.end());
    std::sort(ids.begin(), ids.end());

    std::vector<BoidState> out;
    out.reserve(ids.size());
    for (const auto id : ids) {
        BoidState boid = flock.at(id);
        Vec3 separation;
        for (const auto& [other_id, other] : flock) {
            if (other_id == id) {
                continue;
            }
            const Vec3 offset = boid.position - other.position;
            const double dist_sq = offset.dot(offset);
            if (dist_sq > 0 && dist_sq < radius_sq) {
                separation += (1.0 / dist_sq) * offset;
            }
        }
        const Vec3 acceleration = params.cohesion_w * (inertia.centroid - boid.position) +
                                  params.alignment_w * (inertia.mean_velocity - boid.velocity) +
                                  params.separation_w * separation;
        boid.velocity += params.dt * acceleration;
        const double speed = boid.velocity.norm();
        if (speed > params.v_max) {
            boid.velocity = (params.v_max / speed) * boid.velocity;
        }
        boid.position += params.dt * boid.velocity;
        if (!boid.position.finite() || !boid.velocity.finite()) {
            throw Error(Errc::simulation_fault, "boid " + std::to_string(id) + " became non-finite");
        }
        out.push_back(std::move(boid));
    }
    return out;
}

double velocity_variance(const Flock& flock) {
    if (flock.empty()) {
        return 0.0;
    }
    const auto mean = flock_inertia(flock).mean_velocity;
    double sum = 0.0;
    for (const auto& [id, state] : flock) {
        const Vec3 d = state.velocity - mean;
        sum += d.dot(d);
    }
    return sum / static_cast<double>(flock.size());
}

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_f64(Bytes& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

class Reader {
public:
    explicit Reader(ByteView bytes) : bytes_(bytes) {}

    std::uint64_t uint(std::size_t width) {
        need(width);
        std::uint64_t v = 0;
        for (std::size_t i = width; i-- > 0;) {
            v = (v << 8) | bytes_[pos_ + i];
        }
        pos_ += width;
        return v;
    }

    double f64() { return std::bit_cast<double>(uint(8)); }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(Errc::parse_error, "truncated boids payload");
        }
    }

    ByteView bytes_;
    std::size_t pos_ = 0;
};

} // namespace

Bytes encode_boids(const std::string& owner, std::span<const BoidState> states) {
    Bytes out;
    out.reserve(2 + owner.size() + 4 + states.size() * 52);
    out.push_back(static_cast<std::uint8_t>(owner.size()));
    out.push_back(static_cast<std::uint8_t>(owner.size() >> 8));
    out.insert(out.end(), owner.begin(), owner.end());
    put_u32(out, static_cast<std::uint32_t>(states.size()));
    for (const auto& s : states) {
        put_u32(out, s.boid_id);
        for (double v : {s.position.x, s.position.y, s.position.z, s.velocity.x, s.velocity.y, s.velocity.z}) {
            put_f64(out, v);
        }
    }
    return out;
}

std::vector<BoidState> decode_boids(ByteView payload) {
    Reader in(payload);
    const auto owner = in.text(in.uint(2));
    const auto count = in.uint(4);
    std::vector<BoidState> states;
    for (std::uint64_t i = 0; i < count; ++i) {
        BoidState s;
        s.boid_id = static_cast<std::uint32_t>(in.uint(4));
        s.owner_peer = owner;
        s.position = {in.f64(), in.f64(), in.f64()};
        s.velocity = {in.f64(), in.f64(), in.f64()};
        states.push_back(std::move(s));
    }
    if (!in.done()) {
        throw Error(Errc::parse_error, "trailing bytes in boids payload");
    }
    return states;
}

BoidsManager::BoidsManager(PeerScene scene, std::string owner, FlockParams params)
    : scene_(std::move(scene)),
      owner_(std::move(owner)),
      params_(params),
      context_(scene_.register_component(*this, Address{ids::kBoidsObject, ids::kBoids})) {
    params_.validate();
}

void BoidsManager::add_local(BoidState state) {
    state.owner_peer = owner_;
    owned_.push_back(state.boid_id);
    flock_[state.boid_id] = std::move(state);
}

void BoidsManager::step() {
    for (auto& updated : flock_step(flock_, owned_, params_)) {
        flock_[updated.boid_id] = std::move(updated);
    }
    broadcast();
}

void BoidsManager::broadcast() {
    std::vector<BoidState> mine;
    mine.reserve(owned_.size());
    for (const auto id : owned_) {
        mine.push_back(flock_.at(id));
    }
    context_.send(encode_boids(owner_, mine));
}

void BoidsManager::process_message(const ReceivedMessage& message) {
    for (auto& state : decode_boids(message.payload)) {
        if (state.owner_peer == owner_) {
            continue;
        }
        flock_[state.boid_id] = std::move(state);
    }
}

std::uint64_t hash_flock(const Flock& flock) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [id, s] : flock) {
        mix(id);
        for (double v : {s.position.x, s.position.y, s.position.z, s.velocity.x, s.velocity.y, s.velocity.z}) {
            mix(std::bit_cast<std::uint64_t>(v));
        }
    }
    return h;
}

std::vector<BoidState> initial_boids(int peer_index, int count, const std::string& owner, std::uint64_t seed) {
    Rng rng(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(peer_index + 1)));
    auto in_range = [&rng](double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); };
    std::vector<BoidState> boids;
    for (int i = 0; i < count; ++i) {
        BoidState b;
        b.boid_id = static_cast<std::uint32_t>(peer_index * count + i);
        b.owner_peer = owner;
        b.position = {in_range(-5, 5), in_range(-5, 5), in_range(-5, 5)};
        b.velocity = {in_range(-1, 1), in_range(-1, 1), in_range(-1, 1)};
        boids.push_back(b);
    }
    return boids;
}

std::string BoidsRunResult::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "step,centroid_x,centroid_y,centroid_z,mean_vx,mean_vy,mean_vz,velocity_variance,consistent,hash\n";
    for (const auto& s : steps) {
        out << s.step << ',' << s.inertia.centroid.x << ',' << s.inertia.centroid.y << ',' << s.inertia.centroid.z
            << ',' << s.inertia.mean_velocity.x << ',' << s.inertia.mean_velocity.y << ','
            << s.inertia.mean_velocity.z << ',' << s.velocity_variance << ',' << (s.consistent ? 1 : 0) << ','
            << s.state_hash << '\n';
    }
    return out.str();
}

BoidsRunResult run_boids(const BoidsRunConfig& config) {
    if (config.peers < 1 || config.boids_per_peer < 1 || config.steps < 0) {
        throw Error(Errc::config, "peers and boids per peer must be positive");
    }
    config.params.validate();

    RoomServerOptions server_options;
    server_options.seed = config.seed;
    RoomServer relay(server_options);

    struct Peer {
        PeerScene scene;
        std::unique_ptr<RoomClient> rooms;
        std::unique_ptr<BoidsManager> boids;
    };
    std::vector<Peer> peers(static_cast<std::size_t>(config.peers));
    Rng id_rng(config.seed);
    for (int k = 0; k < config.peers; ++k) {
        auto& peer = peers[static_cast<std::size_t>(k)];
        peer.scene = PeerScene(generate_network_id(id_rng));
        auto [client_end, server_end] = loopback_pair();
        relay.attach(server_end);
        peer.scene.add_connection(client_end);
        const std::string owner = "peer-" + std::to_string(k);
        peer.rooms = std::make_unique<RoomClient>(peer.scene, owner);
        peer.boids = std::make_unique<BoidsManager>(peer.scene, owner, config.params);
    }

    auto dispatch_all = [&peers] {
        for (auto& peer : peers) {
            peer.scene.dispatch();
        }
    };

    peers[0].rooms->join(JoinTarget::create("boids", false));
    dispatch_all();
    if (!peers[0].rooms->room()) {
        throw Error(Errc::connection_failed, "boids room was not created");
    }
    const auto code = peers[0].rooms->room()->joincode;
    for (std::size_t k = 1; k < peers.size(); ++k) {
        peers[k].rooms->join(JoinTarget::code(code));
        dispatch_all();
    }

    for (int k = 0; k < config.peers; ++k) {
        auto& peer = peers[static_cast<std::size_t>(k)];
        for (auto& boid : initial_boids(k, config.boids_per_peer, peer.boids->owner(), config.seed)) {
            peer.boids->add_local(std::move(boid));
        }
        peer.boids->broadcast();
    }
    dispatch_all();

    BoidsRunResult result;
    auto check = [&](int step) {
        const auto& reference = peers[0].boids->flock();
        BoidsStepReport report;
        report.step = step;
        report.inertia = flock_inertia(reference);
        report.velocity_variance = velocity_variance(reference);
        report.state_hash = hash_flock(reference);
        const auto expected_size = static_cast<std::size_t>(config.peers * config.boids_per_peer);
        for (const auto& peer : peers) {
            const auto& flock = peer.boids->flock();
            if (flock.size() != expected_size || hash_flock(flock) != report.state_hash || flock != reference) {
                report.consistent = false;
            }
        }
        if (!report.consistent && result.consistent) {
            result.consistent = false;
            result.first_inconsistent_step = step;
        }
        result.steps.push_back(report);
    };

    check(0);
    for (int step = 1; step <= config.steps; ++step) {
        for (auto& peer : peers) {
            peer.boids->step();
        }
        dispatch_all();
        check(step);
    }
    result.final_flock = peers[0].boids->flock();
    return result;
}

} // namespace ubiq::harness
