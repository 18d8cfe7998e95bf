#include "ubiq/bots.hpp"
#include "ubiq/capacity.hpp"
#include "ubiq/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

void print(const ubiq::harness::FleetSummary& summary) {
    std::cerr << "bots=" << summary.config.bots << " room=" << summary.joincode << " p50=" << summary.relay_p50_ms
              << "ms p95=" << summary.relay_p95_ms << "ms lost=" << summary.lost << '/' << summary.expected
              << " bandwidth=" << summary.bandwidth_bytes_per_second << "B/s\n";
    for (const auto& bot : summary.bots) {
        if (!bot.error.empty()) {
            std::cerr << "  bot " << bot.index << ": " << bot.error << '\n';
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Headless bot fleet that streams avatar poses through a relay"};
    ubiq::harness::BotConfig config;
    std::string out_path;
    std::vector<int> sweep;
    std::string capacity_csv;
    app.add_option("--server", config.server, "Relay host:port")->capture_default_str();
    app.add_option("--room", config.room, "Join code, or 'new'")->capture_default_str();
    app.add_option("--bots", config.bots, "Fleet size")->capture_default_str();
    app.add_option("--pose-rate", config.pose_rate, "Poses per second per bot")->capture_default_str();
    app.add_option("--payload-bytes", config.payload_bytes, "Pose payload size")->capture_default_str();
    app.add_option("--duration", config.duration_seconds, "Seconds of streaming")->capture_default_str();
    app.add_option("--drain", config.drain_seconds, "Seconds to wait for in-flight poses")->capture_default_str();
    app.add_option("--log-dir", config.log_dir, "Write per-bot JSONL event logs here");
    app.add_option("--out", out_path, "Summary JSON output");
    app.add_option("--sweep", sweep, "Run successive fleets of these sizes (overrides --bots)")->delimiter(',');
    app.add_option("--capacity-csv", capacity_csv, "Capacity table for --sweep");
    CLI11_PARSE(app, argc, argv);

    try {
        std::vector<ubiq::harness::FleetSummary> fleets;
        if (sweep.empty()) {
            sweep.push_back(config.bots);
        }
        for (const int size : sweep) {
            auto fleet_config = config;
            fleet_config.bots = size;
            fleets.push_back(ubiq::harness::bot_run(fleet_config));
            print(fleets.back());
        }

        ubiq::Json summary = fleets.size() == 1 ? fleets.front().to_json() : ubiq::Json::array();
        if (fleets.size() > 1) {
            for (const auto& fleet : fleets) {
                summary.push_back(fleet.to_json());
            }
        }
        if (!out_path.empty()) {
            std::ofstream out(out_path, std::ios::trunc);
            out << summary.dump(2) << '\n';
        } else {
            std::cout << summary.dump(2) << '\n';
        }
        if (fleets.size() > 1) {
            const auto report = ubiq::harness::capacity_report(fleets);
            if (capacity_csv.empty()) {
                std::cerr << report.to_csv();
            } else {
                std::ofstream(capacity_csv, std::ios::trunc) << report.to_csv();
            }
        }
        for (const auto& fleet : fleets) {
            if (!fleet.complete()) {
                return 1;
            }
        }
        return 0;
    } catch (const ubiq::Error& e) {
        std::cerr << "ubiq-bot: " << e.what() << '\n';
        return 1;
    }
}
