// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "ubiq/boids.hpp"
#include "ubiq/bots.hpp"
#include "ubiq/capacity.hpp"
#include "ubiq/event_log.hpp"
#include "ubiq/latency.hpp"
#include "ubiq/relay_server.hpp"
#include "ubiq/rooms.hpp"
#include "ubiq/stats.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace ubiq;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failed checks for one criterion.
struct Outcome {
    std::vector<std::string> failures;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

int failed_criteria = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<void(Outcome&)>& body) {
    Outcome outcome;
    const auto start = Clock::now();
    try {
        body(outcome);
    } catch (const std::exception& e) {
        outcome.failures.push_back(std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    char limit[64];
    std::snprintf(limit, sizeof limit, "%.3f s <= %.0f s", elapsed, limit_seconds);
    outcome.check(elapsed <= limit_seconds, std::string("runtime ") + limit);
    const bool pass = outcome.failures.empty();
    if (!pass) ++failed_criteria;
    std::printf("%s %s (%s; %s)\n", pass ? "PASS" : "FAIL", name.c_str(), limit, outcome.detail.c_str());
    for (const auto& f : outcome.failures) std::printf("     - %s\n", f.c_str());
    std::fflush(stdout);
}

// One peer: scene, rooms client, recorder for a shared application address.
struct Peer final : MessageHandler {
    PeerScene scene;
    RoomClient rooms;
    NetworkContext context;
    std::vector<Bytes> received;

    Peer(const std::string& name, Address app) : rooms(scene, name), context(scene.register_component(*this, app)) {}

    void process_message(const ReceivedMessage& m) override { received.emplace_back(m.payload.begin(), m.payload.end()); }

    void attach(RoomServer& server, LoopbackOptions link = {}) {
        auto [client_end, server_end] = loopback_pair(link);
        server.attach(server_end);
        scene.add_connection(client_end);
    }
};

using Peers = std::vector<std::shared_ptr<Peer>>;

bool pump_until(const Peers& peers, const std::function<bool()>& done, std::chrono::milliseconds timeout = 10s) {
    const auto deadline = Clock::now() + timeout;
    while (!done()) {
        if (Clock::now() > deadline) return false;
        bool any = false;
        for (auto& p : peers) any = p->scene.dispatch() > 0 || any;
        if (!any) std::this_thread::sleep_for(100us);
    }
    return true;
}

void pump_for(const Peers& peers, std::chrono::milliseconds period) {
    pump_until(peers, [] { return false; }, period);
}

// Creates a room with peers[0] and joins the rest to it; returns the code.
std::string form_room(const Peers& peers, const std::string& name) {
    peers[0]->rooms.join(JoinTarget::create(name, false));
    if (!pump_until(peers, [&] { return peers[0]->rooms.room().has_value(); })) return {};
    const auto code = peers[0]->rooms.room()->joincode;
    for (std::size_t i = 1; i < peers.size(); ++i) peers[i]->rooms.join(JoinTarget::code(code));
    pump_until(peers, [&] {
        return std::all_of(peers.begin(), peers.end(), [&](const auto& p) { return p->rooms.peers().size() == peers.size() - 1; });
    });
    return code;
}

const Address kApp{NetworkId{777}, ComponentId{10}};

Bytes tagged(std::uint32_t sender, std::uint32_t seq) {
    Bytes b(8);
    std::memcpy(b.data(), &sender, 4);
    std::memcpy(b.data() + 4, &seq, 4);
    return b;
}

std::pair<std::uint32_t, std::uint32_t> untag(const Bytes& b) {
    std::uint32_t sender = 0;
    std::uint32_t seq = 0;
    std::memcpy(&sender, b.data(), 4);
    std::memcpy(&seq, b.data() + 4, 4);
    return {sender, seq};
}

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c);
    return buf;
}

// ---------------------------------------------------------------------------

void wire_overhead(Outcome& out) {
    // Measured from real frames passing through a scene's traffic observer,
    // compared against the closed form 14n / (14n + sum p).
    double worst = 0;
    Rng rng(2024);
    auto measure = [&](const std::vector<std::size_t>& sizes) {
        PeerScene sender;
        PeerScene receiver;
        auto [a, b] = loopback_pair();
        sender.add_connection(a);
        receiver.add_connection(b);
        auto monitor = std::make_shared<StatsMonitor>();
        sender.set_traffic_observer(monitor);
        for (auto s : sizes) sender.send(kApp, Bytes(s, 0x5a));
        const double measured = monitor->sample(Clock::now()).overhead_ratio;
        double sum = 0;
        for (auto s : sizes) sum += static_cast<double>(s);
        const double n = static_cast<double>(sizes.size());
        const double expected = 14.0 * n / (14.0 * n + sum);
        worst = std::max(worst, std::abs(measured - expected));
        return measured;
    };
    for (std::size_t p = 0; p <= 1024; ++p) measure({p, p, p});
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> sizes(1 + uniform_below(rng, 64));
        for (auto& s : sizes) s = uniform_below(rng, 1025);
        measure(sizes);
    }
    const double fifty_six = measure(std::vector<std::size_t>(100, 56));
    out.check(worst <= 1e-9, fmt("max deviation %.3g exceeds 1e-9", worst));
    out.check(fifty_six == 0.20, fmt("56-byte payload ratio %.17g != 0.20", fifty_six));
    out.detail = fmt("max |measured - closed form| = %.3g, 56-byte ratio = %.2f", worst, fifty_six);
}

void fanout(Outcome& out) {
    RoomServer server;
    Peers room_a;
    Peers room_b;
    for (int i = 0; i < 8; ++i) {
        room_a.push_back(std::make_shared<Peer>("a" + std::to_string(i), kApp));
        room_a.back()->attach(server);
    }
    for (int i = 0; i < 3; ++i) {
        room_b.push_back(std::make_shared<Peer>("b" + std::to_string(i), kApp));
        room_b.back()->attach(server);
    }
    form_room(room_a, "fanout-a");
    form_room(room_b, "fanout-b");
    Peers everyone;
    for (auto* group : {&room_a, &room_b})
        for (auto& p : *group) everyone.push_back(p);

    constexpr std::uint32_t kMessages = 10000;
    Rng rng(7);
    std::vector<std::uint32_t> sender_of(kMessages);
    std::uint32_t b_sent = 0;
    for (std::uint32_t seq = 0; seq < kMessages; ++seq) {
        const auto s = static_cast<std::uint32_t>(uniform_below(rng, 8));
        sender_of[seq] = s;
        room_a[s]->scene.send(kApp, tagged(s, seq));
        // The second room stays active with its own traffic throughout.
        if (seq % 10 == 0) {
            room_b[seq % 3]->scene.send(kApp, tagged(100 + seq % 3, seq));
            ++b_sent;
        }
        if (seq % 256 == 0) for (auto& p : everyone) p->scene.dispatch();
    }
    const std::size_t expected_a = static_cast<std::size_t>(kMessages) * 7;
    const std::size_t expected_b = static_cast<std::size_t>(b_sent) * 2;
    auto total = [](const Peers& peers) {
        std::size_t n = 0;
        for (auto& p : peers) n += p->received.size();
        return n;
    };
    pump_until(everyone, [&] { return total(room_a) >= expected_a && total(room_b) >= expected_b; }, 20s);
    pump_for(everyone, 100ms);

    std::size_t duplicates = 0, self_deliveries = 0, missing = 0, leaked = 0, foreign = 0;
    for (std::uint32_t r = 0; r < 8; ++r) {
        std::vector<int> count(kMessages, 0);
        for (const auto& payload : room_a[r]->received) {
            const auto [s, seq] = untag(payload);
            if (s >= 8 || seq >= kMessages || sender_of[seq] != s) {
                ++foreign;
                continue;
            }
            ++count[seq];
        }
        for (std::uint32_t seq = 0; seq < kMessages; ++seq) {
            if (sender_of[seq] == r) {
                self_deliveries += count[seq];
            } else if (count[seq] == 0) {
                ++missing;
            } else if (count[seq] > 1) {
                duplicates += count[seq] - 1;
            }
        }
    }
    for (auto& p : room_b) {
        for (const auto& payload : p->received) {
            if (untag(payload).first < 100) ++leaked;
        }
    }
    out.check(missing == 0, "missing deliveries: " + std::to_string(missing));
    out.check(duplicates == 0, "duplicate deliveries: " + std::to_string(duplicates));
    out.check(self_deliveries == 0, "echoes to sender: " + std::to_string(self_deliveries));
    out.check(leaked == 0, "leaked into second room: " + std::to_string(leaked));
    out.check(foreign == 0, "foreign messages in first room: " + std::to_string(foreign));
    out.check(total(room_b) == expected_b, "second room delivery count mismatch");
    out.detail = "10000 msgs x 8 peers: " + std::to_string(total(room_a)) + " deliveries (expected " +
                 std::to_string(expected_a) + "), leaked " + std::to_string(leaked);
}

void sandbox(Outcome& out) {
    RoomServer server;
    Peers members;
    for (int i = 0; i < 2; ++i) {
        members.push_back(std::make_shared<Peer>("m" + std::to_string(i), kApp));
        members.back()->attach(server);
    }
    const auto code = form_room(members, "sandbox");
    auto outsider = std::make_shared<Peer>("outsider", kApp);
    outsider->attach(server);
    for (std::uint32_t i = 0; i < 1000; ++i) outsider->scene.send(kApp, tagged(9, i));
    members.push_back(std::move(outsider));
    pump_for(members, 200ms);
    const auto pre_join = members[0]->received.size() + members[1]->received.size();
    const auto discarded = server.stats().discarded;
    members[2]->rooms.join(JoinTarget::code(code));
    const bool joined = pump_until(members, [&] { return members[2]->rooms.room().has_value(); });
    out.check(pre_join == 0, "pre-join deliveries: " + std::to_string(pre_join));
    out.check(discarded == 1000, "server discarded " + std::to_string(discarded) + " of 1000");
    out.check(joined, "join after sandbox traffic did not complete");
    out.detail = "pre-join deliveries " + std::to_string(pre_join) + ", discarded " + std::to_string(discarded) +
                 ", join " + (joined ? "ok" : "failed");
}

void rooms(Outcome& out) {
    auto now = RoomServer::Clock::now();
    RoomServerOptions options;
    options.clock = [&] { return now; };
    RoomServer server(options);
    Peers clients;
    for (const auto* name : {"c0", "c1", "c2"}) {
        clients.push_back(std::make_shared<Peer>(name, kApp));
        clients.back()->attach(server);
    }
    clients[0]->rooms.join(JoinTarget::create("churn", false));
    pump_until(clients, [&] { return clients[0]->rooms.room().has_value(); });
    const auto code = clients[0]->rooms.room()->joincode;
    const auto uuid = clients[0]->rooms.room()->uuid;
    out.check(std::regex_match(code, std::regex("[0-9]{3}")), "join code '" + code + "' is not [0-9]{3}");

    Rng rng(60);
    std::size_t mismatched_cycles = 0;
    for (int cycle = 0; cycle < 60; ++cycle) {
        auto& c = *clients[uniform_below(rng, 3)];
        if (c.rooms.room()) c.rooms.leave(); else c.rooms.join(JoinTarget::code(code));
        // Each cycle must converge to the server's membership before the next.
        const auto agrees = [&] {
            std::set<std::string> truth;
            for (const auto& p : server.members(uuid)) truth.insert(p.uuid);
            for (auto& client : clients) {
                std::set<std::string> seen;
                for (const auto& [k, v] : client->rooms.peers()) seen.insert(k);
                auto expected = truth;
                const bool inside = expected.erase(client->rooms.me().uuid) == 1;
                if (inside != client->rooms.room().has_value() || (inside && seen != expected)) return false;
            }
            return true;
        };
        if (!pump_until(clients, agrees, 1s)) ++mismatched_cycles;
    }
    out.check(mismatched_cycles == 0, std::to_string(mismatched_cycles) + " of 60 cycles disagreed with ground truth");

    // Eviction then reuse: once evicted, the code must be handed out again
    // when every code gets allocated.
    for (auto& c : clients) c->rooms.leave();
    pump_for(clients, 20ms);
    const auto evicted = server.evict_idle(now + 61s);
    out.check(evicted.size() == 1 && evicted[0] == uuid, "idle room was not evicted");
    std::set<std::string> codes;
    for (int i = 0; i < 1000; ++i) {
        clients[1]->rooms.join(JoinTarget::create("fill", false));
        if (i % 50 == 49) pump_for(clients, 1ms);
    }
    std::size_t rejections = 0;
    clients[1]->rooms.rejected.connect([&](const std::string&) { ++rejections; });
    clients[1]->rooms.join(JoinTarget::create("overflow", false));
    pump_until(clients, [&] { return rejections > 0; });
    for (const auto& r : server.rooms()) codes.insert(r.joincode);
    out.check(codes.size() == 1000, "only " + std::to_string(codes.size()) + " codes live after filling");
    out.check(codes.contains(code), "evicted code " + code + " was never reused");
    out.check(rejections == 1, "1001st room was not rejected as full");
    out.detail = "code " + code + ", 60 churn cycles, mismatches " + std::to_string(mismatched_cycles) +
                 ", evicted code reused " + (codes.contains(code) ? "yes" : "no");
}

// Two peers running LatencyMeters for `seconds` at 1 Hz.
std::pair<std::vector<double>, std::vector<double>> meter_pair(const Peers& peers, double seconds) {
    LatencyMeter a(peers[0]->scene, peers[0]->rooms);
    LatencyMeter b(peers[1]->scene, peers[1]->rooms);
    const auto end = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
    while (Clock::now() < end) {
        a.tick();
        b.tick();
        bool any = false;
        for (auto& p : peers) any = p->scene.dispatch() > 0 || any;
        if (!any) std::this_thread::sleep_for(100us);
    }
    pump_until(peers, [&] { return a.pending() == 0 && b.pending() == 0; }, 2s);
    return {a.samples(), b.samples()};
}

void latency(Outcome& out) {
    // Real loopback networking: TCP through a relay on 127.0.0.1.
    ServerConfig config;
    config.host = "127.0.0.1";
    config.tcp_port = 0;
    config.ws_port = -1;
    RelayServer relay(config);
    relay.start();
    IoRuntime io;
    Peers tcp_peers;
    for (const auto* name : {"near-a", "near-b"}) {
        tcp_peers.push_back(std::make_shared<Peer>(name, kApp));
        auto c = tcp_peers.back()->rooms.connect(io, ConnectionSpec::tcp("127.0.0.1", relay.tcp_port()));
        c->wait_open(5000ms);
    }
    form_room(tcp_peers, "latency");
    const auto [ab, ba] = meter_pair(tcp_peers, 10.0);
    double max_loop = 0;
    for (double s : ab) max_loop = std::max(max_loop, s);
    for (double s : ba) max_loop = std::max(max_loop, s);
    out.check(ab.size() >= 8 && ba.size() >= 8,
              "samples " + std::to_string(ab.size()) + "/" + std::to_string(ba.size()) + ", need >= 8 each way");
    out.check(max_loop < 5.0, fmt("loopback half-RTT max %.3f ms >= 5 ms", max_loop));

    // Injected 40 ms one-way delay between the peers.
    RoomServer server;
    Peers delayed;
    delayed.push_back(std::make_shared<Peer>("far-a", kApp));
    delayed.back()->attach(server, LoopbackOptions{40ms});
    delayed.push_back(std::make_shared<Peer>("far-b", kApp));
    delayed.back()->attach(server);
    form_room(delayed, "delayed");
    const auto [da, db] = meter_pair(delayed, 5.0);
    std::size_t outside = 0;
    double lo = 1e9, hi = 0;
    for (const auto* set : {&da, &db}) {
        for (double s : *set) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
            if (std::abs(s - 40.0) > 5.0) ++outside;
        }
    }
    out.check(!da.empty() && !db.empty(), "no samples under injected delay");
    out.check(outside == 0, std::to_string(outside) + " delayed samples outside 40 +- 5 ms");
    out.detail = "loopback " + std::to_string(ab.size()) + "/" + std::to_string(ba.size()) +
                 fmt(" samples, max %.3f ms; delayed %.2f..%.2f ms", max_loop, da.empty() ? 0 : lo, hi);
}

void capacity(Outcome& out) {
    ServerConfig config;
    config.host = "127.0.0.1";
    config.tcp_port = 0;
    config.ws_port = -1;
    RelayServer relay(config);
    relay.start();
    std::vector<harness::FleetSummary> fleets;
    for (int size : {2, 10, 50}) {
        harness::BotConfig bots;
        bots.server = "127.0.0.1:" + std::to_string(relay.tcp_port());
        bots.bots = size;
        bots.pose_rate = 20;
        bots.duration_seconds = 30;
        bots.drain_seconds = 5;
        fleets.push_back(harness::bot_run(bots));
        const auto& f = fleets.back();
        out.check(f.complete(), "fleet of " + std::to_string(size) + " did not complete");
        if (!f.complete()) {
            for (const auto& b : f.bots) {
                if (!b.error.empty()) {
                    out.failures.push_back("  bot " + std::to_string(b.index) + ": " + b.error);
                    break;
                }
            }
        }
    }
    const auto report = harness::capacity_report(fleets);
    const auto& big = fleets.back();
    out.check(big.relay_p50_ms < 50.0, fmt("50-bot p50 %.3f ms >= 50 ms", big.relay_p50_ms));
    out.check(big.lost == 0, "50-bot fleet lost " + std::to_string(big.lost) + " of " + std::to_string(big.expected));
    out.check(report.monotone_p50(), fmt("p50 not monotone: %.3f, %.3f, %.3f ms", fleets[0].relay_p50_ms,
                                         fleets[1].relay_p50_ms, fleets[2].relay_p50_ms));
    out.detail = fmt("p50 {2,10,50} = %.3f, %.3f, %.3f ms", fleets[0].relay_p50_ms, fleets[1].relay_p50_ms,
                     fleets[2].relay_p50_ms) +
                 ", 50-bot lost " + std::to_string(big.lost) + "/" + std::to_string(big.expected);
}

void boids(Outcome& out) {
    harness::BoidsRunConfig config;
    config.peers = 3;
    config.boids_per_peer = 10;
    config.steps = 1000;
    config.seed = 1;
    const auto first = harness::run_boids(config);
    const auto second = harness::run_boids(config);
    out.check(first.consistent, "replicas diverged at step " + std::to_string(first.first_inconsistent_step));
    out.check(second.consistent, "second run replicas diverged");
    bool identical = first.steps.size() == second.steps.size() && first.final_flock == second.final_flock;
    for (std::size_t i = 0; identical && i < first.steps.size(); ++i)
        identical = first.steps[i].state_hash == second.steps[i].state_hash;
    out.check(identical, "two runs produced different trajectories");
    out.check(first.steps.size() == 1001, "expected 1001 exchange points");
    out.detail = std::to_string(first.steps.size()) + " exchange points checked, runs identical: " +
                 (identical ? "yes" : "no");
}

void logging(Outcome& out) {
    RoomServer server;
    Peers peers;
    for (int i = 0; i < 3; ++i) {
        peers.push_back(std::make_shared<Peer>("peer" + std::to_string(i), kApp));
        peers.back()->attach(server);
    }
    form_room(peers, "logging");
    std::vector<std::unique_ptr<EventLogger>> loggers;
    for (auto& p : peers) loggers.push_back(std::make_unique<EventLogger>(p->scene, p->rooms.me().uuid));
    LogCollector collector(peers[0]->scene, peers[0]->rooms, loggers[0].get());
    collector.start();
    pump_until(peers, [&] { return loggers[1]->collector() && loggers[2]->collector(); });
    for (int e = 0; e < 100; ++e)
        for (auto& l : loggers) l->log("Sample", Json{{"n", e}});
    pump_until(peers, [&] { return collector.size() >= 300; });
    const auto path = std::filesystem::temp_directory_path() / "ubiq-acceptance-collected.jsonl";
    const auto flushed = collector.flush(path.string());
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0, bad_fields = 0, regressions = 0;
    std::map<std::string, std::int64_t> last;
    while (std::getline(in, line)) {
        ++lines;
        const Json j = Json::parse(line, nullptr, false);
        if (!j.is_object() || !j.contains("ticks") || !j["ticks"].is_number_integer() || !j.contains("peer") ||
            !j["peer"].is_string() || !j.contains("event") || !j["event"].is_string() || !j.contains("args") ||
            !j["args"].is_object()) {
            ++bad_fields;
            continue;
        }
        const auto peer = j["peer"].get<std::string>();
        const auto ticks = j["ticks"].get<std::int64_t>();
        if (last.contains(peer) && ticks < last[peer]) ++regressions;
        last[peer] = ticks;
    }
    std::filesystem::remove(path);
    out.check(flushed == 300, "flush returned " + std::to_string(flushed));
    out.check(lines == 300, "file holds " + std::to_string(lines) + " lines");
    out.check(bad_fields == 0, std::to_string(bad_fields) + " lines missing required fields");
    out.check(regressions == 0, std::to_string(regressions) + " tick regressions");
    out.check(last.size() == 3, "expected 3 emitters, saw " + std::to_string(last.size()));
    out.detail = "flushed " + std::to_string(flushed) + " lines from " + std::to_string(last.size()) + " emitters";
}

void loopback_demo(Outcome& out) {
    const std::string command = std::string(UBIQ_TOOL_DIR) + "/ubiq-loopback-demo >/dev/null 2>&1";
    const int raw = std::system(command.c_str());
    const int status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    out.check(status == 0, "ubiq-loopback-demo exited " + std::to_string(status));
    out.detail = "exit status " + std::to_string(status);
}

} // namespace

int main() {
    criterion("[1] wire overhead", 1, wire_overhead);
    criterion("[2] fanout", 30, fanout);
    criterion("[3] sandbox", 5, sandbox);
    criterion("[4] rooms", 30, rooms);
    criterion("[5] latency", 30, latency);
    criterion("[6] capacity", 180, capacity);
    criterion("[7] boids", 30, boids);
    criterion("[8] logging", 10, logging);
    criterion("[9] loopback demo", 60, loopback_demo);
    std::printf("%d of 9 criteria failed\n", failed_criteria);
    return failed_criteria == 0 ? 0 : 1;
}
