#include "ubiq/error.hpp"
#include "ubiq/log_analysis.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

bool write_file(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return true;
    }
    std::ofstream out(path, std::ios::trunc);
    out << content;
    if (!out) {
        std::cerr << "ubiq-logtool: cannot write " << path << '\n';
        return false;
    }
    return true;
}

ubiq::LoadedLog load(const std::vector<std::string>& files) {
    auto loaded = ubiq::load_logs(files);
    for (const auto& skipped : loaded.skipped) {
        std::cerr << "ubiq-logtool: skipped " << skipped << '\n';
    }
    return loaded;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Merge and summarise JSONL event logs"};
    app.require_subcommand(1);

    std::vector<std::string> merge_files;
    std::string merge_out = "-";
    std::string merge_latency;
    auto* merge = app.add_subcommand("merge", "Merge logs sorted by (peer, ticks) and build the latency matrix");
    merge->add_option("files", merge_files, "Log files")->required()->check(CLI::ExistingFile);
    merge->add_option("-o,--out", merge_out, "Merged JSONL output ('-' for stdout)")->capture_default_str();
    merge->add_option("--latency-csv", merge_latency, "Latency matrix CSV output");

    std::vector<std::string> stats_files;
    std::string stats_bandwidth = "-";
    std::string stats_latency;
    auto* stats = app.add_subcommand("stats", "Per-second bandwidth CSV and latency matrix CSV");
    stats->add_option("files", stats_files, "Log files")->required()->check(CLI::ExistingFile);
    stats->add_option("--bandwidth-csv", stats_bandwidth, "Bandwidth CSV output ('-' for stdout)")
        ->capture_default_str();
    stats->add_option("--latency-csv", stats_latency, "Latency matrix CSV output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (merge->parsed()) {
            const auto loaded = load(merge_files);
            std::string merged;
            for (const auto& event : loaded.events) {
                merged += event.to_line();
                merged += '\n';
            }
            bool ok = write_file(merge_out, merged);
            if (!merge_latency.empty()) {
                ok = write_file(merge_latency, ubiq::latency_from_events(loaded.events).to_csv()) && ok;
            }
            std::cerr << "ubiq-logtool: merged " << loaded.events.size() << " events\n";
            return ok ? 0 : 1;
        }
        const auto loaded = load(stats_files);
        bool ok = write_file(stats_bandwidth, ubiq::bandwidth_csv(ubiq::bandwidth_series(loaded.events)));
        if (!stats_latency.empty()) {
            ok = write_file(stats_latency, ubiq::latency_from_events(loaded.events).to_csv()) && ok;
        }
        return ok ? 0 : 1;
    } catch (const ubiq::Error& e) {
        std::cerr << "ubiq-logtool: " << e.what() << '\n';
        return 1;
    }
}
