#include "ubiq/capacity.hpp"

#include <algorithm>
#include <sstream>

namespace ubiq::harness {

CapacityReport capacity_report(const std::vector<FleetSummary>& results) {
    CapacityReport report;
    for (const auto& fleet : results) {
        CapacityRow row;
        row.fleet_size = fleet.config.bots;
        row.p50_ms = fleet.relay_p50_ms;
        row.p95_ms = fleet.relay_p95_ms;
        row.lost = fleet.lost;
        row.expected = fleet.expected;
        row.loss_ratio = fleet.expected == 0 ? 0.0 : static_cast<double>(fleet.lost) / static_cast<double>(fleet.expected);
        report.rows.push_back(row);
    }
    if (report.rows.size() < 2) {
        return report;
    }
    const double threshold = 2.0 * std::max(report.rows.front().p50_ms, kKneeBaselineFloorMs);
    for (auto& row : report.rows) {
        if (row.p50_ms > threshold) {
            row.knee = true;
            report.knee = row.fleet_size;
            break;
        }
    }
    return report;
}

std::string CapacityReport::to_csv() const {
    std::ostringstream out;
    out << "fleet_size,p50_ms,p95_ms,lost,expected,loss_ratio,knee\n";
    for (const auto& row : rows) {
        out << row.fleet_size << ',' << row.p50_ms << ',' << row.p95_ms << ',' << row.lost << ',' << row.expected
            << ',' << row.loss_ratio << ',' << (row.knee ? 1 : 0) << '\n';
    }
    return out.str();
}

bool CapacityReport::monotone_p50() const {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].p50_ms < rows[i - 1].p50_ms) {
            return false;
        }
    }
    return true;
}

} // namespace ubiq::harness
