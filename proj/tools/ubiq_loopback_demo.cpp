#include "ubiq/loopback_demo.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Two peers in one process: join, spawn, poses and logging"};
    ubiq::harness::LoopbackDemoOptions options;
    app.add_option("--server", options.server, "Use an external relay at host:port instead of an in-process one");
    app.add_flag("--sabotage", options.sabotage, "Add a check that always fails");
    app.add_option("--log", options.log_path, "Flush the collected event log here");
    app.add_option("--timeout", options.timeout_seconds, "Seconds to wait for each step")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    return ubiq::harness::loopback_demo(options, std::cout);
}
