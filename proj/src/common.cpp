#include "meshsim/common.hpp"

#include <array>
#include <utility>

namespace meshsim {

namespace {

constexpr std::array<std::pair<Port, std::string_view>, 4> kPortNames{{
    {Port::PositionApp, "POSITION_APP"},
    {Port::TelemetryApp, "TELEMETRY_APP"},
    {Port::TextMessageApp, "TEXT_MESSAGE_APP"},
    {Port::Control, "CONTROL"},
}};

constexpr std::array<std::pair<Role, std::string_view>, 4> kRoleNames{{
    {Role::Client, "CLIENT"},
    {Role::Router, "ROUTER"},
    {Role::Gateway, "GATEWAY"},
    {Role::Tracker, "TRACKER"},
}};

}  // namespace

std::string_view to_string(Port port) {
    for (const auto& [p, name] : kPortNames)
        if (p == port) return name;
    return "UNKNOWN";
}

std::string_view to_string(Role role) {
    for (const auto& [r, name] : kRoleNames)
        if (r == role) return name;
    return "UNKNOWN";
}

std::optional<Port> port_from_string(std::string_view name) {
    for (const auto& [p, n] : kPortNames)
        if (n == name) return p;
    return std::nullopt;
}

std::optional<Role> role_from_string(std::string_view name) {
    for (const auto& [r, n] : kRoleNames)
        if (n == name) return r;
    return std::nullopt;
}

}  // namespace meshsim
