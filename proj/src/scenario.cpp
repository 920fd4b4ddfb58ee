#include "meshsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace meshsim::sim {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

LocalXY geo_to_local(const GeoPoint& p, const GeoPoint& origin) {
    const double dlat = (p.lat - origin.lat) * kDegToRad;
    const double dlon = (p.lon - origin.lon) * kDegToRad;
    return {kEarthRadiusM * dlon * std::cos(origin.lat * kDegToRad), kEarthRadiusM * dlat};
}

GeoPoint local_to_geo(const LocalXY& xy, double alt, const GeoPoint& origin) {
    GeoPoint p;
    p.lat = origin.lat + xy.y_m / kEarthRadiusM / kDegToRad;
    p.lon = origin.lon + xy.x_m / (kEarthRadiusM * std::cos(origin.lat * kDegToRad)) / kDegToRad;
    p.alt = alt;
    return p;
}

double link_distance(const GeoPoint& a, const GeoPoint& b, bool use_elevation) {
    const double mean_lat = 0.5 * (a.lat + b.lat) * kDegToRad;
    const double x = kEarthRadiusM * (b.lon - a.lon) * kDegToRad * std::cos(mean_lat);
    const double y = kEarthRadiusM * (b.lat - a.lat) * kDegToRad;
    const double z = use_elevation ? b.alt - a.alt : 0.0;
    return std::sqrt(x * x + y * y + z * z);
}

double Route::wrap(double time_s) const {
    if (!loop || points.size() < 2) return time_s;
    const double start = points.front().time_s;
    const double span = points.back().time_s - start;
    if (span <= 0.0) return time_s;
    double t = std::fmod(time_s - start, span);
    if (t < 0) t += span;
    return start + t;
}

GeoPoint Route::position_at(double time_s) const {
    if (points.empty()) return {};
    const double t = wrap(time_s);
    if (t <= points.front().time_s) return points.front().position;
    if (t >= points.back().time_s) return points.back().position;
    auto next = std::upper_bound(points.begin(), points.end(), t,
                                 [](double v, const RoutePoint& p) { return v < p.time_s; });
    const auto& b = *next;
    const auto& a = *(next - 1);
    const double f = (t - a.time_s) / (b.time_s - a.time_s);
    return {a.position.lat + f * (b.position.lat - a.position.lat),
            a.position.lon + f * (b.position.lon - a.position.lon),
            a.position.alt + f * (b.position.alt - a.position.alt)};
}

std::optional<phy::EnvKind> Route::env_at(double time_s) const {
    if (points.empty()) return std::nullopt;
    const double t = wrap(time_s);
    auto next = std::upper_bound(points.begin(), points.end(), t,
                                 [](double v, const RoutePoint& p) { return v < p.time_s; });
    if (next == points.begin()) return points.front().env;
    return (next - 1)->env;
}

const NodeSpec* Scenario::find(NodeId id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const NodeSpec* Scenario::find(std::string_view node_name) const {
    for (const auto& n : nodes)
        if (n.name == node_name) return &n;
    return nullptr;
}

phy::EnvironmentClass Scenario::environment(phy::EnvKind kind) const {
    if (auto it = environments.find(kind); it != environments.end()) return it->second;
    return phy::default_environment(kind);
}

std::vector<std::string> Scenario::violations() const {
    std::vector<std::string> out;
    auto add = [&out](std::string path, const std::string& what) { out.push_back(path + ": " + what); };

    if (name.empty()) add("name", "must not be empty");
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) add("duration_s", "must be positive");
    if (nodes.empty()) add("nodes", "at least one node is required");

    std::unordered_set<NodeId> ids;
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        const std::string path = "nodes[" + std::to_string(i) + "]";
        if (!ids.insert(n.id).second) add(path + ".id", "duplicate node id " + std::to_string(n.id.value));
        if (n.name.empty())
            add(path + ".name", "must not be empty");
        else if (!names.insert(n.name).second)
            add(path + ".name", "duplicate node name '" + n.name + "'");
        if (!(n.position.lat >= -90.0 && n.position.lat <= 90.0)) add(path + ".lat", "must be in [-90, 90]");
        if (!(n.position.lon >= -180.0 && n.position.lon <= 180.0))
            add(path + ".lon", "must be in [-180, 180]");
        for (const auto& v : n.radio.violations()) add(path + ".radio", v);
        if (!n.apps.empty() && n.radio.hop_limit < 1)
            add(path + ".radio.hop_limit", "nodes that originate traffic need hop_limit >= 1");
        for (std::size_t k = 0; k < n.apps.size(); ++k) {
            const auto& app = n.apps[k];
            const std::string ap = path + ".apps[" + std::to_string(k) + "]";
            if (!(app.period_s > 0.0)) add(ap + ".period_s", "must be positive");
            if (!(app.start_offset_s >= 0.0)) add(ap + ".start_offset_s", "must be >= 0");
            if (app.source == telemetry::PayloadSource::TextFixed &&
                app.text.size() > mesh::kMaxPayloadBytes)
                add(ap + ".text", "longer than 237 bytes");
        }
    }

    for (std::size_t i = 0; i < links.size(); ++i) {
        const std::string path = "links[" + std::to_string(i) + "]";
        if (!find(links[i].a)) add(path + ".a", "unknown node");
        if (!find(links[i].b)) add(path + ".b", "unknown node");
        if (links[i].a == links[i].b) add(path, "link endpoints must differ");
        if (!(links[i].extra_loss_db >= 0.0)) add(path + ".extra_loss_db", "must be >= 0");
    }

    for (std::size_t i = 0; i < env_rules.size(); ++i) {
        if (!(env_rules[i].max_distance_m > 0.0))
            add("env_rules[" + std::to_string(i) + "].max_distance_m", "must be positive");
        if (i > 0 && !(env_rules[i].max_distance_m > env_rules[i - 1].max_distance_m))
            add("env_rules[" + std::to_string(i) + "].max_distance_m", "rules must be in ascending order");
    }

    for (const auto& [kind, env] : environments)
        for (const auto& v : env.violations()) add("environments." + std::string(phy::to_string(kind)), v);

    for (std::size_t i = 0; i < tracker_route.points.size(); ++i) {
        const auto& p = tracker_route.points[i];
        const std::string path = "tracker_route[" + std::to_string(i) + "]";
        if (i > 0 && !(p.time_s > tracker_route.points[i - 1].time_s))
            add(path + ".time_s", "route times must be strictly increasing");
        if (!(p.position.lat >= -90.0 && p.position.lat <= 90.0)) add(path + ".lat", "must be in [-90, 90]");
        if (!(p.position.lon >= -180.0 && p.position.lon <= 180.0)) add(path + ".lon", "must be in [-180, 180]");
    }
    for (std::size_t i = 0; i < mobile_nodes.size(); ++i)
        if (!find(mobile_nodes[i])) add("mobile_nodes[" + std::to_string(i) + "]", "unknown node");
    if (!mobile_nodes.empty() && tracker_route.empty())
        add("tracker_route", "mobile nodes need a route");

    if (contention.snr_max_db <= contention.snr_min_db)
        add("contention", "snr_max_db must exceed snr_min_db");
    if (contention.router_cw_min < 0 || contention.router_cw_max < contention.router_cw_min)
        add("contention", "router contention window bounds are invalid");
    if (contention.client_cw_min < 0 || contention.client_cw_max < contention.client_cw_min)
        add("contention", "client contention window bounds are invalid");
    if (contention.slot_time < 0) add("contention.slot_time_s", "must be >= 0");
    if (!(capture_threshold_db >= 0.0)) add("capture_threshold_db", "must be >= 0");
    if (!(dedup_ttl_s > 0.0)) add("dedup.ttl_s", "must be positive");
    if (dedup_capacity == 0) add("dedup.capacity", "must be positive");
    if (!(irradiance.volts_per_wm2 > 0.0)) add("irradiance.volts_per_wm2", "must be positive");
    if (!(daylight.peak_raw > 0 && daylight.peak_raw <= telemetry::kAdcMax))
        add("irradiance.peak_raw", "must be in (0, 4095]");
    if (!(daylight.sunset_s > daylight.sunrise_s)) add("irradiance.sunset_s", "must be after sunrise");
    return out;
}

}  // namespace meshsim::sim
