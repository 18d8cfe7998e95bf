#include "ubiq/log_analysis.hpp"

#include "ubiq/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace ubiq {

void log_stats(EventLogger& logger, const StatsSample& sample) { logger.log(kStatsEvent, sample.to_json()); }

LoadedLog load_logs(const std::vector<std::string>& paths) {
    LoadedLog result;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) {
            throw Error(Errc::config, "cannot read " + path);
        }
        std::string line;
        for (std::size_t number = 1; std::getline(in, line); ++number) {
            if (line.empty()) {
                continue;
            }
            try {
                result.events.push_back(LogEvent::parse(line));
            } catch (const Error& e) {
                result.skipped.push_back(path + ":" + std::to_string(number) + ": " + e.what());
            }
        }
    }
    std::stable_sort(result.events.begin(), result.events.end(), [](const LogEvent& a, const LogEvent& b) {
        return std::tie(a.peer, a.ticks) < std::tie(b.peer, b.ticks);
    });
    return result;
}

LatencyMatrix latency_from_events(const std::vector<LogEvent>& events) {
    LatencyMatrix matrix;
    for (const auto& event : events) {
        if (event.event != kLatencyEvent) {
            continue;
        }
        const auto& args = event.args;
        if (args.contains("from") && args.contains("to") && args.contains("ms") && args["ms"].is_number()) {
            matrix.record(args["from"].get<std::string>(), args["to"].get<std::string>(), args["ms"].get<double>());
        }
    }
    return matrix;
}

std::vector<BandwidthRow> bandwidth_series(const std::vector<LogEvent>& events) {
    std::optional<std::int64_t> origin;
    for (const auto& event : events) {
        if (event.event == kStatsEvent) {
            origin = origin ? std::min(*origin, event.ticks) : event.ticks;
        }
    }
    std::map<std::int64_t, BandwidthRow> buckets;
    for (const auto& event : events) {
        if (event.event != kStatsEvent) {
            continue;
        }
        const auto t = (event.ticks - *origin) / 1'000'000;
        auto& row = buckets[t];
        row.t = t;
        const auto& args = event.args;
        row.bytes_total += args.value("bytes_total", std::uint64_t{0});
        row.messages += args.value("messages", std::uint64_t{0});
        if (args.contains("categories")) {
            const auto& categories = args["categories"];
            row.bytes_avatar += categories.value("avatar", std::uint64_t{0});
            row.bytes_rooms += categories.value("rooms", std::uint64_t{0});
            row.bytes_log += categories.value("log", std::uint64_t{0});
        }
    }
    std::vector<BandwidthRow> rows;
    for (auto& [t, row] : buckets) {
        row.overhead = row.bytes_total == 0 ? 0.0
                                            : static_cast<double>(kPrefixSize * row.messages) /
                                                  static_cast<double>(row.bytes_total);
        rows.push_back(row);
    }
    return rows;
}

std::string bandwidth_csv(const std::vector<BandwidthRow>& rows) {
    std::ostringstream out;
    out << "t,bytes_total,bytes_avatar,bytes_rooms,bytes_log,overhead\n";
    for (const auto& row : rows) {
        out << row.t << ',' << row.bytes_total << ',' << row.bytes_avatar << ',' << row.bytes_rooms << ','
            << row.bytes_log << ',' << row.overhead << '\n';
    }
    return out.str();
}

} // namespace ubiq
