#pragma once

#include "ubiq/bots.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ubiq::harness {

struct CapacityRow {
    int fleet_size = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    std::uint64_t lost = 0;
    std::uint64_t expected = 0;
    double loss_ratio = 0;
    bool knee = false;
};

struct CapacityReport {
    std::vector<CapacityRow> rows;
    /// First fleet size whose p50 exceeds twice the baseline p50.
    std::optional<int> knee;

    std::string to_csv() const;
    bool monotone_p50() const;
};

/// Baselines below this are treated as this value, so sub-millisecond
/// localhost jitter cannot flag a knee on its own.
inline constexpr double kKneeBaselineFloorMs = 1.0;

/// Rows in the order given; the first row is the baseline. Fewer than two
/// rows never flag a knee.
CapacityReport capacity_report(const std::vector<FleetSummary>& results);

} // namespace ubiq::harness
