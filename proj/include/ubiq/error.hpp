#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ubiq {

enum class Errc {
    oversize,
    malformed_stream,
    invalid_address,
    unresolved_scene,
    duplicate_registration,
    scene_closed,
    parse_error,
    not_in_room,
    properties_too_large,
    unknown_blueprint,
    undefined_flock,
    simulation_fault,
    bind_failed,
    connection_failed,
    server_full,
    config,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace ubiq
