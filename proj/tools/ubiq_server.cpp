#include "ubiq/error.hpp"
#include "ubiq/relay_server.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop.store(true); }
} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Room relay server: TCP and WebSocket listeners sharing one set of rooms"};
    ubiq::ServerConfig config;
    std::uint64_t seed = 0;
    app.add_option("--host", config.host, "Bind address")->capture_default_str();
    app.add_option("--tcp-port", config.tcp_port, "TCP port (0 = ephemeral, negative disables)")->capture_default_str();
    app.add_option("--ws-port", config.ws_port, "WebSocket port (0 = ephemeral, negative disables)")
        ->capture_default_str();
    app.add_option("--idle-room-seconds", config.idle_room_seconds, "Evict rooms empty for this long")
        ->capture_default_str();
    app.add_option("--log", config.log_path, "JSONL event log (UBIQ_SERVER_LOG overrides)");
    app.add_option("--max-message-bytes", config.max_message_bytes, "Largest accepted frame length field")
        ->capture_default_str();
    auto* seed_option = app.add_option("--seed", seed, "Seed for join codes and room ids");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ubiq::ServerExit::config_error);
    }
    if (const char* env = std::getenv("UBIQ_SERVER_LOG"); env && *env) {
        config.log_path = env;
    }
    if (seed_option->count() > 0) {
        config.seed = seed;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    return static_cast<int>(ubiq::run(config, g_stop));
}
