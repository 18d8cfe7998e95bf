#include "ubiq/error.hpp"

namespace ubiq {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::oversize: return "oversize";
    case Errc::malformed_stream: return "malformed stream";
    case Errc::invalid_address: return "invalid address";
    case Errc::unresolved_scene: return "unresolved scene";
    case Errc::duplicate_registration: return "duplicate registration";
    case Errc::scene_closed: return "scene closed";
    case Errc::parse_error: return "parse error";
    case Errc::not_in_room: return "not in room";
    case Errc::properties_too_large: return "properties too large";
    case Errc::unknown_blueprint: return "unknown blueprint";
    case Errc::undefined_flock: return "undefined flock";
    case Errc::simulation_fault: return "simulation fault";
    case Errc::bind_failed: return "bind failed";
    case Errc::connection_failed: return "connection failed";
    case Errc::server_full: return "server full";
    case Errc::config: return "config";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

} // namespace ubiq
