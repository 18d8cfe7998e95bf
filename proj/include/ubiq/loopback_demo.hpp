#pragma once

#include <iosfwd>
#include <string>

namespace ubiq::harness {

struct LoopbackDemoOptions {
    /// "host:port" of an external relay; empty runs an in-process relay.
    std::string server;
    /// Adds one assertion that cannot hold, to prove failures are reported.
    bool sabotage = false;
    /// Where the collected log is flushed; empty skips the file.
    std::string log_path;
    double timeout_seconds = 10.0;
};

/// Two peers in one process, each on its own branch of a scene graph, meet
/// in a room and exchange a spawn, avatar poses and log events. Progress and
/// the first failed check go to `out`. Returns 0 when every check passes,
/// 1 on a failed check and 2 when the relay cannot be reached.
int loopback_demo(const LoopbackDemoOptions& options, std::ostream& out);

} // namespace ubiq::harness
