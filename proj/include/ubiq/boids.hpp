#pragma once

// Distributed boids: each peer simulates the boids it owns, steering by the
// inertia (centroid and mean velocity) of the whole flock, and exchanges its
// boids' states with the other peers. Every peer holds a replica of the full
// flock and computes the same inertia independently.
//
// Steering per owned boid i, with neighbours j within `neighbor_radius`:
//
//   a = cohesion_w  * (centroid - p_i)
//     + alignment_w * (mean_v - v_i)
//     + separation_w * sum_j (p_i - p_j) / |p_i - p_j|^2
//   v <- clamp(v + a*dt, v_max);  p <- p + v*dt

#include "ubiq/scene.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ubiq::harness {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

struct BoidState {
    std::uint32_t boid_id = 0;
    std::string owner_peer;
    Vec3 position;
    Vec3 velocity;

    friend bool operator==(const BoidState&, const BoidState&) = default;
};

/// Full replicated flock keyed (and therefore iterated) by ascending boid id.
using Flock = std::map<std::uint32_t, BoidState>;

struct FlockParams {
    double cohesion_w = 0.4;
    double alignment_w = 0.8;
    double separation_w = 0.05;
    double neighbor_radius = 1.0;
    double v_max = 4.0;
    double dt = 0.02;

    /// Throws Error(config).
    void validate() const;
};

struct FlockInertia {
    Vec3 centroid;
    Vec3 mean_velocity;
};

/// Means over the whole flock, summed in ascending boid id order so every
/// peer gets bit-identical results. Throws Error(undefined_flock) when empty.
FlockInertia flock_inertia(std::span<const BoidState> states);
FlockInertia flock_inertia(const Flock& flock);

/// Steps the boids in `owned` against the full flock and returns their new
/// states (ascending id). Throws Error(simulation_fault) naming a non-finite boid.
std::vector<BoidState> flock_step(const Flock& flock, std::span<const std::uint32_t> owned, const FlockParams& params);

/// Sum of per-axis velocity variances over the flock.
double velocity_variance(const Flock& flock);

/// Wire format: u16 owner length, owner bytes, u32 count, then per boid
/// u32 id followed by six little-endian float64 (position, velocity).
Bytes encode_boids(const std::string& owner, std::span<const BoidState> states);
/// Throws Error(parse_error).
std::vector<BoidState> decode_boids(ByteView payload);

/// One peer's share of the flock. Registered at (4, 11) so every manager in
/// the room receives every other manager's broadcasts.
class BoidsManager final : public MessageHandler {
public:
    BoidsManager(PeerScene scene, std::string owner, FlockParams params);

    BoidsManager(const BoidsManager&) = delete;
    BoidsManager& operator=(const BoidsManager&) = delete;

    void add_local(BoidState state);

    /// Advances owned boids one step and broadcasts their new states.
    void step();
    void broadcast();

    const Flock& flock() const noexcept { return flock_; }
    const std::vector<std::uint32_t>& owned() const noexcept { return owned_; }
    const std::string& owner() const noexcept { return owner_; }

    void process_message(const ReceivedMessage& message) override;

private:
    PeerScene scene_;
    std::string owner_;
    FlockParams params_;
    std::vector<std::uint32_t> owned_;
    Flock flock_;
    NetworkContext context_;
};

struct BoidsRunConfig {
    int peers = 3;
    int boids_per_peer = 10;
    int steps = 1000;
    std::uint64_t seed = 1;
    FlockParams params;
};

struct BoidsStepReport {
    int step = 0;
    FlockInertia inertia;
    double velocity_variance = 0;
    bool consistent = true;
    std::uint64_t state_hash = 0;
};

struct BoidsRunResult {
    bool consistent = true;
    int first_inconsistent_step = -1;
    std::vector<BoidsStepReport> steps;
    Flock final_flock;

    std::string to_csv() const;
};

/// FNV-1a over the exact bit patterns of every boid state.
std::uint64_t hash_flock(const Flock& flock);

/// Deterministic initial flock for peer `peer_index`.
std::vector<BoidState> initial_boids(int peer_index, int count, const std::string& owner, std::uint64_t seed);

/// Runs K peers in one process against an in-process relay over loopback
/// connections, exchanging states after every step, and checks that every
/// peer holds the identical flock at every exchange point.
BoidsRunResult run_boids(const BoidsRunConfig& config);

} // namespace ubiq::harness
