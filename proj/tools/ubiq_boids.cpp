#include "ubiq/boids.hpp"
#include "ubiq/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Distributed boids over an in-process relay"};
    ubiq::harness::BoidsRunConfig config;
    std::string report;
    app.add_option("--peers", config.peers, "Number of peers")->capture_default_str();
    app.add_option("--boids-per-peer", config.boids_per_peer, "Boids owned by each peer")->capture_default_str();
    app.add_option("--steps", config.steps, "Simulation steps")->capture_default_str();
    app.add_option("--seed", config.seed, "Seed for the initial flock")->capture_default_str();
    app.add_option("--report", report, "Write a per-step CSV report to this path");
    app.add_option("--cohesion", config.params.cohesion_w)->capture_default_str();
    app.add_option("--alignment", config.params.alignment_w)->capture_default_str();
    app.add_option("--separation", config.params.separation_w)->capture_default_str();
    app.add_option("--radius", config.params.neighbor_radius)->capture_default_str();
    app.add_option("--v-max", config.params.v_max)->capture_default_str();
    app.add_option("--dt", config.params.dt)->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto result = ubiq::harness::run_boids(config);
        if (!report.empty()) {
            std::ofstream out(report, std::ios::trunc);
            out << result.to_csv();
            if (!out) {
                std::cerr << "ubiq-boids: cannot write " << report << '\n';
                return 1;
            }
        }
        const auto& last = result.steps.back();
        std::cout << "peers=" << config.peers << " boids=" << config.peers * config.boids_per_peer
                  << " steps=" << config.steps << " consistent=" << (result.consistent ? "yes" : "no")
                  << " final_hash=" << std::hex << last.state_hash << std::dec
                  << " velocity_variance=" << last.velocity_variance << '\n';
        if (!result.consistent) {
            std::cerr << "ubiq-boids: replicas diverged at step " << result.first_inconsistent_step << '\n';
            return 1;
        }
        return 0;
    } catch (const ubiq::Error& e) {
        std::cerr << "ubiq-boids: " << e.what() << '\n';
        return 1;
    }
}
