#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

namespace meshsim {

/// Simulation clock, integer nanoseconds.
using SimTime = std::int64_t;

inline constexpr SimTime kNanosPerSecond = 1'000'000'000;

constexpr SimTime seconds_to_sim(double s) {
    return static_cast<SimTime>(s * 1e9 + (s >= 0 ? 0.5 : -0.5));
}

constexpr double sim_to_seconds(SimTime t) {
    return static_cast<double>(t) / 1e9;
}

struct NodeId {
    std::uint32_t value = 0;

    friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class Port { PositionApp, TelemetryApp, TextMessageApp, Control };

enum class Role { Client, Router, Gateway, Tracker };

std::string_view to_string(Port port);
std::string_view to_string(Role role);
std::optional<Port> port_from_string(std::string_view name);
std::optional<Role> role_from_string(std::string_view name);

}  // namespace meshsim

template <>
struct std::hash<meshsim::NodeId> {
    std::size_t operator()(const meshsim::NodeId& id) const noexcept {
        return std::hash<std::uint32_t>{}(id.value);
    }
};
