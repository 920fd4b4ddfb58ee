#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meshsim/common.hpp"
#include "meshsim/mesh.hpp"
#include "meshsim/phy.hpp"
#include "meshsim/telemetry.hpp"

namespace meshsim::sim {

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    double alt = 0.0;  // meters above sea level
};

struct LocalXY {
    double x_m = 0.0;  // east
    double y_m = 0.0;  // north
};

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Equirectangular projection around `origin`.
LocalXY geo_to_local(const GeoPoint& p, const GeoPoint& origin);
/// Inverse of geo_to_local at the given altitude.
GeoPoint local_to_geo(const LocalXY& xy, double alt, const GeoPoint& origin);

/// Symmetric distance between two points (projection at the mean latitude),
/// optionally including the altitude difference.
double link_distance(const GeoPoint& a, const GeoPoint& b, bool use_elevation);

struct NodeSpec {
    NodeId id;
    std::string name;
    Role role = Role::Client;
    GeoPoint position;
    phy::RadioConfig radio;
    std::vector<telemetry::AppSchedule> apps;
};

struct RoutePoint {
    double time_s = 0.0;
    GeoPoint position;
    std::optional<phy::EnvKind> env;  // propagation class while on this leg
};

/// Piecewise-linear waypoint schedule. Before the first point the node
/// sits at the first point; after the last it stays put unless looping.
struct Route {
    std::vector<RoutePoint> points;
    bool loop = false;

    bool empty() const { return points.empty(); }
    GeoPoint position_at(double time_s) const;
    std::optional<phy::EnvKind> env_at(double time_s) const;

   private:
    double wrap(double time_s) const;
};

struct LinkOverride {
    NodeId a;
    NodeId b;
    std::optional<phy::EnvKind> env;
    std::optional<double> shadow_db;  // fixed draw instead of random shadowing
    double extra_loss_db = 0.0;
};

/// Links up to `max_distance_m` use `env`; rules are tried in ascending order.
struct EnvRule {
    double max_distance_m = 0.0;
    phy::EnvKind env = phy::EnvKind::LosOpen;
};

struct Scenario {
    std::string name;
    double duration_s = 0.0;
    std::uint64_t seed = 0;
    std::vector<NodeSpec> nodes;
    std::vector<LinkOverride> links;
    std::vector<EnvRule> env_rules;
    phy::EnvKind default_env = phy::EnvKind::NlosBuilt;
    std::map<phy::EnvKind, phy::EnvironmentClass> environments;
    bool shadowing = true;
    bool use_elevation = true;

    Route tracker_route;
    std::vector<NodeId> mobile_nodes;  // nodes that follow tracker_route

    mesh::ContentionParams contention;  // slot_time 0: derived from the radio
    double capture_threshold_db = 6.0;
    double dedup_ttl_s = 600.0;
    std::size_t dedup_capacity = 1024;

    telemetry::IrradianceModel irradiance;
    telemetry::DiurnalProfile daylight;

    std::int64_t epoch_s = 1'700'000'000;
    std::string region = "US";
    std::set<std::string> outputs;

    const NodeSpec* find(NodeId id) const;
    const NodeSpec* find(std::string_view name) const;
    phy::EnvironmentClass environment(phy::EnvKind kind) const;

    /// Every broken invariant, prefixed with a field path.
    std::vector<std::string> violations() const;
};

}  // namespace meshsim::sim
