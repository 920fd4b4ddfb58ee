#include "meshsim/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "CLI11.hpp"

namespace meshsim::cli {

namespace {

constexpr char kCampus[] = R"json({
  "name": "campus",
  "duration_s": 86400,
  "seed": 42,
  "origin": {"lat": 4.9167, "lon": -74.0167, "alt": 2559.88},
  "default_env": "NLOS_BUILT",
  "env_rules": [{"max_distance_m": 250, "env": "LOS_OPEN"}],
  "shadowing": true,
  "nodes": [
    {"id": 1, "name": "node1", "role": "CLIENT", "position": {"x_m": -150, "y_m": 420, "alt": 2574.88},
     "apps": [{"port": "TELEMETRY_APP", "period_s": 300, "start_offset_s": 0}]},
    {"id": 2, "name": "node2", "role": "ROUTER", "position": {"x_m": -650, "y_m": 250, "alt": 2562.0}},
    {"id": 3, "name": "node3", "role": "ROUTER", "position": {"x_m": -300, "y_m": 300, "alt": 2571.0}},
    {"id": 4, "name": "node4", "role": "GATEWAY", "position": {"x_m": 0, "y_m": 0, "alt": 2559.88}},
    {"id": 5, "name": "T", "role": "TRACKER", "position": {"x_m": 0, "y_m": -50, "alt": 2560.0},
     "apps": [{"port": "POSITION_APP", "period_s": 60, "start_offset_s": 30}]}
  ],
  "route_loop": true,
  "mobile_nodes": ["T"],
  "tracker_route": [
    {"time_s": 0, "x_m": 0, "y_m": -50, "alt": 2560.0},
    {"time_s": 450, "x_m": -400, "y_m": -50, "alt": 2560.0},
    {"time_s": 900, "x_m": -400, "y_m": 450, "alt": 2560.0},
    {"time_s": 1350, "x_m": 0, "y_m": 450, "alt": 2560.0},
    {"time_s": 1800, "x_m": 0, "y_m": -50, "alt": 2560.0}
  ],
  "outputs": ["summary", "map_csv", "uplinks", "series"]
})json";

constexpr char kCumbre[] = R"json({
  "name": "cumbre",
  "duration_s": 3600,
  "seed": 42,
  "origin": {"lat": 4.9167, "lon": -74.0167, "alt": 2559.88},
  "default_env": "NLOS_BUILT",
  "shadowing": true,
  "nodes": [
    {"id": 4, "name": "Nix", "role": "GATEWAY", "position": {"x_m": 0, "y_m": 0, "alt": 2559.88},
     "apps": [{"port": "TEXT_MESSAGE_APP", "period_s": 600, "start_offset_s": 50, "text": "nix"}]},
    {"id": 10, "name": "gaho", "role": "CLIENT", "position": {"x_m": -1090, "y_m": 0, "alt": 2559.88},
     "apps": [{"port": "TEXT_MESSAGE_APP", "period_s": 120, "start_offset_s": 20, "text": "gaho"}]},
    {"id": 11, "name": "sebs", "role": "TRACKER", "position": {"x_m": -1090, "y_m": 0, "alt": 2559.88},
     "apps": [{"port": "POSITION_APP", "period_s": 60, "start_offset_s": 0}]}
  ],
  "links": [{"a": "gaho", "b": "sebs", "env": "LOS_OPEN"}],
  "mobile_nodes": ["gaho", "sebs"],
  "tracker_route": [
    {"time_s": 0, "x_m": -1090, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 600, "x_m": -1090, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 900, "x_m": -1600, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 1500, "x_m": -1600, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 1800, "x_m": -2050, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 2400, "x_m": -2050, "y_m": 0, "alt": 2559.88, "env": "NLOS_BUILT"},
    {"time_s": 2700, "x_m": -2470, "y_m": 0, "alt": 2628.03, "env": "QUASI_LOS_ELEVATED"},
    {"time_s": 3600, "x_m": -2470, "y_m": 0, "alt": 2628.03, "env": "QUASI_LOS_ELEVATED"}
  ],
  "outputs": ["summary", "map_csv", "map_kml", "uplinks", "series"]
})json";

constexpr char kLine4[] = R"json({
  "name": "line4",
  "duration_s": 60,
  "seed": 42,
  "origin": {"lat": 4.9167, "lon": -74.0167, "alt": 2560},
  "default_env": "LOS_OPEN",
  "shadowing": false,
  "use_elevation": false,
  "nodes": [
    {"id": 1, "name": "n0", "role": "ROUTER", "position": {"x_m": 0, "y_m": 0},
     "apps": [{"port": "TEXT_MESSAGE_APP", "period_s": 3600, "start_offset_s": 10, "text": "hop"}]},
    {"id": 2, "name": "n1", "role": "ROUTER", "position": {"x_m": 500, "y_m": 0}},
    {"id": 3, "name": "n2", "role": "ROUTER", "position": {"x_m": 1000, "y_m": 0}},
    {"id": 4, "name": "n3", "role": "ROUTER", "position": {"x_m": 1500, "y_m": 0}}
  ],
  "links": [
    {"a": "n0", "b": "n2", "blocked": true},
    {"a": "n0", "b": "n3", "blocked": true},
    {"a": "n1", "b": "n3", "blocked": true}
  ]
})json";

constexpr char kK4[] = R"json({
  "name": "k4",
  "duration_s": 60,
  "seed": 42,
  "origin": {"lat": 4.9167, "lon": -74.0167, "alt": 2560},
  "default_env": "LOS_OPEN",
  "shadowing": false,
  "use_elevation": false,
  "contention": {"slot_time_s": 1.0},
  "nodes": [
    {"id": 1, "name": "a", "role": "CLIENT", "position": {"x_m": 0, "y_m": 0},
     "apps": [{"port": "TEXT_MESSAGE_APP", "period_s": 3600, "start_offset_s": 10, "text": "ping"}]},
    {"id": 2, "name": "b", "role": "ROUTER", "position": {"x_m": 200, "y_m": 0}},
    {"id": 3, "name": "c", "role": "ROUTER", "position": {"x_m": 200, "y_m": 200}},
    {"id": 4, "name": "d", "role": "CLIENT", "position": {"x_m": 0, "y_m": 200}}
  ]
})json";

// Collects violations while walking a scenario document.
class Reader {
   public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

    bool check_keys(const Json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
        if (!obj.is_object()) {
            fail(path.empty() ? "<root>" : path, "must be an object");
            return false;
        }
        for (const auto& [key, _] : obj.items())
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                fail(join(path, key), "unknown field");
        return true;
    }

    static std::string join(const std::string& path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

    const Json* field(const Json& obj, const std::string& path, std::string_view key, bool required) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) fail(join(path, key), "required field missing");
            return nullptr;
        }
        return &*it;
    }

    void number(const Json& obj, const std::string& path, std::string_view key, double& out, bool required = false) {
        if (const auto* v = field(obj, path, key, required)) {
            if (v->is_number())
                out = v->get<double>();
            else
                fail(join(path, key), "must be a number");
        }
    }

    template <class Int>
    void integer(const Json& obj, const std::string& path, std::string_view key, Int& out, bool required = false) {
        if (const auto* v = field(obj, path, key, required)) {
            if (!v->is_number_integer()) {
                fail(join(path, key), "must be an integer");
            } else if (v->is_number_unsigned()) {
                const auto u = v->get<std::uint64_t>();
                if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
                    fail(join(path, key), "out of range");
                else
                    out = static_cast<Int>(u);
            } else {
                const auto s = v->get<std::int64_t>();
                if (s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
                    (s > 0 && static_cast<std::uint64_t>(s) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())))
                    fail(join(path, key), "out of range");
                else
                    out = static_cast<Int>(s);
            }
        }
    }

    void boolean(const Json& obj, const std::string& path, std::string_view key, bool& out) {
        if (const auto* v = field(obj, path, key, false)) {
            if (v->is_boolean())
                out = v->get<bool>();
            else
                fail(join(path, key), "must be true or false");
        }
    }

    void string(const Json& obj, const std::string& path, std::string_view key, std::string& out,
                bool required = false) {
        if (const auto* v = field(obj, path, key, required)) {
            if (v->is_string())
                out = v->get<std::string>();
            else
                fail(join(path, key), "must be a string");
        }
    }

    template <class Enum, class Parse>
    void enumeration(const Json& obj, const std::string& path, std::string_view key, Enum& out, Parse parse,
                     bool required = false) {
        std::string text;
        const std::size_t before = errors.size();
        string(obj, path, key, text, required);
        if (errors.size() != before || !obj.contains(key)) return;
        if (auto e = parse(text))
            out = *e;
        else
            fail(join(path, key), "unknown value '" + text + "'");
    }

    const Json* array(const Json& obj, const std::string& path, std::string_view key, bool required = false) {
        const auto* v = field(obj, path, key, required);
        if (v && !v->is_array()) {
            fail(join(path, key), "must be a list");
            return nullptr;
        }
        return v;
    }
};

struct Origin {
    bool present = false;
    sim::GeoPoint point;
};

// Either lat/lon or x_m/y_m relative to the document origin.
void read_point(Reader& r, const Json& obj, const std::string& path, const Origin& origin, sim::GeoPoint& out) {
    const bool geo = obj.contains("lat") || obj.contains("lon");
    const bool local = obj.contains("x_m") || obj.contains("y_m");
    out.alt = origin.point.alt;
    r.number(obj, path, "alt", out.alt);
    if (geo && local) {
        r.fail(path, "give either lat/lon or x_m/y_m, not both");
    } else if (local) {
        if (!origin.present) {
            r.fail(path, "x_m/y_m positions need a top-level origin");
            return;
        }
        sim::LocalXY xy;
        r.number(obj, path, "x_m", xy.x_m, true);
        r.number(obj, path, "y_m", xy.y_m, true);
        const double alt = out.alt;
        out = sim::local_to_geo(xy, alt, origin.point);
    } else {
        r.number(obj, path, "lat", out.lat, true);
        r.number(obj, path, "lon", out.lon, true);
    }
}

void read_radio(Reader& r, const Json& obj, const std::string& path, phy::RadioConfig& cfg) {
    if (!r.check_keys(obj, path,
                      {"frequency_hz", "spreading_factor", "bandwidth_hz", "coding_rate", "tx_power_dbm", "hop_limit",
                       "preamble_symbols", "crc", "explicit_header", "antenna_gain_tx_dbi", "antenna_gain_rx_dbi",
                       "noise_figure_db"}))
        return;
    r.integer(obj, path, "frequency_hz", cfg.frequency_hz);
    r.integer(obj, path, "spreading_factor", cfg.spreading_factor);
    r.integer(obj, path, "bandwidth_hz", cfg.bandwidth_hz);
    r.integer(obj, path, "coding_rate", cfg.coding_rate);
    r.number(obj, path, "tx_power_dbm", cfg.tx_power_dbm);
    r.integer(obj, path, "hop_limit", cfg.hop_limit);
    r.integer(obj, path, "preamble_symbols", cfg.preamble_symbols);
    r.boolean(obj, path, "crc", cfg.crc_enabled);
    r.boolean(obj, path, "explicit_header", cfg.explicit_header);
    r.number(obj, path, "antenna_gain_tx_dbi", cfg.antenna_gain_tx_dbi);
    r.number(obj, path, "antenna_gain_rx_dbi", cfg.antenna_gain_rx_dbi);
    r.number(obj, path, "noise_figure_db", cfg.noise_figure_db);
}

void read_app(Reader& r, const Json& obj, const std::string& path, telemetry::AppSchedule& app) {
    if (!r.check_keys(obj, path, {"port", "period_s", "start_offset_s", "source", "text"})) return;
    r.enumeration(obj, path, "port", app.port, port_from_string, true);
    switch (app.port) {
        case Port::PositionApp:
            app.source = telemetry::PayloadSource::GnssTracker;
            app.period_s = telemetry::AppSchedule::kPositionPeriodS;
            break;
        case Port::TelemetryApp:
            app.source = telemetry::PayloadSource::IrradianceSensor;
            app.period_s = telemetry::AppSchedule::kTelemetryPeriodS;
            break;
        default:
            app.source = telemetry::PayloadSource::TextFixed;
            break;
    }
    r.number(obj, path, "period_s", app.period_s, app.source == telemetry::PayloadSource::TextFixed);
    r.number(obj, path, "start_offset_s", app.start_offset_s);
    r.enumeration(obj, path, "source", app.source, telemetry::payload_source_from_string);
    r.string(obj, path, "text", app.text);
}

// Node references are names or numeric ids.
std::optional<NodeId> resolve_node(Reader& r, const Json& ref, const std::string& path,
                                   const std::vector<sim::NodeSpec>& nodes) {
    if (ref.is_string()) {
        for (const auto& n : nodes)
            if (n.name == ref.get<std::string>()) return n.id;
        r.fail(path, "unknown node '" + ref.get<std::string>() + "'");
    } else if (ref.is_number_unsigned()) {
        return NodeId{static_cast<std::uint32_t>(ref.get<std::uint64_t>())};
    } else {
        r.fail(path, "must be a node name or id");
    }
    return std::nullopt;
}

}  // namespace

const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names{"campus", "cumbre", "line4", "k4"};
    return names;
}

std::string_view builtin_source(std::string_view name) {
    if (name == "campus") return kCampus;
    if (name == "cumbre") return kCumbre;
    if (name == "line4") return kLine4;
    if (name == "k4") return kK4;
    throw std::out_of_range("unknown built-in scenario '" + std::string(name) + "'");
}

sim::Scenario parse_scenario(const Json& doc) {
    Reader r;
    sim::Scenario s;
    if (!r.check_keys(doc, "",
                      {"name", "duration_s", "seed", "origin", "radio", "nodes", "links", "env_rules", "default_env",
                       "environments", "shadowing", "use_elevation", "tracker_route", "route_loop", "mobile_nodes",
                       "contention", "capture_threshold_db", "dedup", "irradiance", "uplink", "outputs"}))
        throw sim::ValidationError(r.errors);

    r.string(doc, "", "name", s.name, true);
    r.number(doc, "", "duration_s", s.duration_s, true);
    r.integer(doc, "", "seed", s.seed, true);

    Origin origin;
    if (const auto* o = r.field(doc, "", "origin", false)) {
        if (r.check_keys(*o, "origin", {"lat", "lon", "alt"})) {
            origin.present = true;
            r.number(*o, "origin", "lat", origin.point.lat, true);
            r.number(*o, "origin", "lon", origin.point.lon, true);
            r.number(*o, "origin", "alt", origin.point.alt);
        }
    }

    Json radio_defaults = Json::object();
    if (const auto* rd = r.field(doc, "", "radio", false)) {
        if (rd->is_object())
            radio_defaults = *rd;
        else
            r.fail("radio", "must be an object");
    }

    if (const auto* nodes = r.array(doc, "", "nodes", true)) {
        for (std::size_t i = 0; i < nodes->size(); ++i) {
            const auto& jn = (*nodes)[i];
            const std::string path = "nodes[" + std::to_string(i) + "]";
            if (!r.check_keys(jn, path, {"id", "name", "role", "position", "radio", "apps"})) continue;
            sim::NodeSpec n;
            r.integer(jn, path, "id", n.id.value, true);
            r.string(jn, path, "name", n.name, true);
            r.enumeration(jn, path, "role", n.role, role_from_string, true);
            if (const auto* pos = r.field(jn, path, "position", true))
                if (r.check_keys(*pos, path + ".position", {"lat", "lon", "alt", "x_m", "y_m"}))
                    read_point(r, *pos, path + ".position", origin, n.position);
            Json radio = radio_defaults;
            if (const auto* nr = r.field(jn, path, "radio", false)) {
                if (nr->is_object())
                    radio.merge_patch(*nr);
                else
                    r.fail(path + ".radio", "must be an object");
            }
            read_radio(r, radio, path + ".radio", n.radio);
            if (const auto* apps = r.array(jn, path, "apps")) {
                for (std::size_t k = 0; k < apps->size(); ++k) {
                    telemetry::AppSchedule app;
                    read_app(r, (*apps)[k], path + ".apps[" + std::to_string(k) + "]", app);
                    n.apps.push_back(std::move(app));
                }
            }
            s.nodes.push_back(std::move(n));
        }
    }

    if (const auto* links = r.array(doc, "", "links")) {
        for (std::size_t i = 0; i < links->size(); ++i) {
            const auto& jl = (*links)[i];
            const std::string path = "links[" + std::to_string(i) + "]";
            if (!r.check_keys(jl, path, {"a", "b", "env", "shadow_db", "extra_loss_db", "blocked"})) continue;
            sim::LinkOverride link;
            if (const auto* a = r.field(jl, path, "a", true))
                if (auto id = resolve_node(r, *a, path + ".a", s.nodes)) link.a = *id;
            if (const auto* b = r.field(jl, path, "b", true))
                if (auto id = resolve_node(r, *b, path + ".b", s.nodes)) link.b = *id;
            if (jl.contains("env")) {
                phy::EnvKind env{};
                r.enumeration(jl, path, "env", env, phy::env_from_string);
                link.env = env;
            }
            if (jl.contains("shadow_db")) {
                double shadow = 0.0;
                r.number(jl, path, "shadow_db", shadow);
                link.shadow_db = shadow;
            }
            r.number(jl, path, "extra_loss_db", link.extra_loss_db);
            bool blocked = false;
            r.boolean(jl, path, "blocked", blocked);
            if (blocked) link.extra_loss_db += 200.0;
            s.links.push_back(link);
        }
    }

    if (const auto* rules = r.array(doc, "", "env_rules")) {
        for (std::size_t i = 0; i < rules->size(); ++i) {
            const std::string path = "env_rules[" + std::to_string(i) + "]";
            if (!r.check_keys((*rules)[i], path, {"max_distance_m", "env"})) continue;
            sim::EnvRule rule;
            r.number((*rules)[i], path, "max_distance_m", rule.max_distance_m, true);
            r.enumeration((*rules)[i], path, "env", rule.env, phy::env_from_string, true);
            s.env_rules.push_back(rule);
        }
    }
    r.enumeration(doc, "", "default_env", s.default_env, phy::env_from_string);

    if (const auto* envs = r.field(doc, "", "environments", false)) {
        static const Json kEmpty = Json::object();
        if (!envs->is_object()) r.fail("environments", "must be an object");
        for (const auto& [name, je] : (envs->is_object() ? *envs : kEmpty).items()) {
            const std::string path = "environments." + name;
            auto kind = phy::env_from_string(name);
            if (!kind) {
                r.fail(path, "unknown environment class");
                continue;
            }
            if (!r.check_keys(je, path, {"path_loss_exponent", "reference_loss_db", "shadowing_sigma_db"})) continue;
            auto env = phy::default_environment(*kind);
            r.number(je, path, "path_loss_exponent", env.path_loss_exponent);
            r.number(je, path, "reference_loss_db", env.reference_loss_db);
            r.number(je, path, "shadowing_sigma_db", env.shadowing_sigma_db);
            s.environments[*kind] = env;
        }
    }
    r.boolean(doc, "", "shadowing", s.shadowing);
    r.boolean(doc, "", "use_elevation", s.use_elevation);

    if (const auto* route = r.array(doc, "", "tracker_route")) {
        for (std::size_t i = 0; i < route->size(); ++i) {
            const auto& jp = (*route)[i];
            const std::string path = "tracker_route[" + std::to_string(i) + "]";
            if (!r.check_keys(jp, path, {"time_s", "lat", "lon", "alt", "x_m", "y_m", "env"})) continue;
            sim::RoutePoint p;
            r.number(jp, path, "time_s", p.time_s, true);
            read_point(r, jp, path, origin, p.position);
            if (jp.contains("env")) {
                phy::EnvKind env{};
                r.enumeration(jp, path, "env", env, phy::env_from_string);
                p.env = env;
            }
            s.tracker_route.points.push_back(p);
        }
    }
    r.boolean(doc, "", "route_loop", s.tracker_route.loop);
    if (const auto* mobile = r.array(doc, "", "mobile_nodes")) {
        for (std::size_t i = 0; i < mobile->size(); ++i)
            if (auto id = resolve_node(r, (*mobile)[i], "mobile_nodes[" + std::to_string(i) + "]", s.nodes))
                s.mobile_nodes.push_back(*id);
    } else {
        for (const auto& n : s.nodes)
            if (n.role == Role::Tracker && !s.tracker_route.empty()) s.mobile_nodes.push_back(n.id);
    }

    if (const auto* c = r.field(doc, "", "contention", false)) {
        if (r.check_keys(*c, "contention",
                         {"snr_min_db", "snr_max_db", "router_cw_min", "router_cw_max", "client_cw_min",
                          "client_cw_max", "slot_time_s"})) {
            auto& p = s.contention;
            r.number(*c, "contention", "snr_min_db", p.snr_min_db);
            r.number(*c, "contention", "snr_max_db", p.snr_max_db);
            r.integer(*c, "contention", "router_cw_min", p.router_cw_min);
            r.integer(*c, "contention", "router_cw_max", p.router_cw_max);
            r.integer(*c, "contention", "client_cw_min", p.client_cw_min);
            r.integer(*c, "contention", "client_cw_max", p.client_cw_max);
            double slot_s = 0.0;
            r.number(*c, "contention", "slot_time_s", slot_s);
            p.slot_time = seconds_to_sim(slot_s);
        }
    }
    r.number(doc, "", "capture_threshold_db", s.capture_threshold_db);
    if (const auto* d = r.field(doc, "", "dedup", false)) {
        if (r.check_keys(*d, "dedup", {"ttl_s", "capacity"})) {
            r.number(*d, "dedup", "ttl_s", s.dedup_ttl_s);
            r.integer(*d, "dedup", "capacity", s.dedup_capacity);
        }
    }
    if (const auto* irr = r.field(doc, "", "irradiance", false)) {
        if (r.check_keys(*irr, "irradiance", {"volts_per_wm2", "max_wm2", "peak_raw", "sunrise_s", "sunset_s"})) {
            r.number(*irr, "irradiance", "volts_per_wm2", s.irradiance.volts_per_wm2);
            r.number(*irr, "irradiance", "max_wm2", s.irradiance.max_wm2);
            r.integer(*irr, "irradiance", "peak_raw", s.daylight.peak_raw);
            r.number(*irr, "irradiance", "sunrise_s", s.daylight.sunrise_s);
            r.number(*irr, "irradiance", "sunset_s", s.daylight.sunset_s);
        }
    }
    if (const auto* up = r.field(doc, "", "uplink", false)) {
        if (r.check_keys(*up, "uplink", {"epoch_s", "region"})) {
            r.integer(*up, "uplink", "epoch_s", s.epoch_s);
            r.string(*up, "uplink", "region", s.region);
        }
    }
    if (const auto* outs = r.array(doc, "", "outputs")) {
        static const std::set<std::string> known{"summary", "report", "trace", "map_csv", "map_kml", "uplinks",
                                                 "series"};
        for (std::size_t i = 0; i < outs->size(); ++i) {
            const std::string path = "outputs[" + std::to_string(i) + "]";
            if (!(*outs)[i].is_string() || !known.contains((*outs)[i].get<std::string>()))
                r.fail(path, "must be one of summary, report, trace, map_csv, map_kml, uplinks, series");
            else
                s.outputs.insert((*outs)[i].get<std::string>());
        }
    }

    for (auto& v : s.violations())
        if (std::find(r.errors.begin(), r.errors.end(), v) == r.errors.end()) r.errors.push_back(std::move(v));
    if (!r.errors.empty()) throw sim::ValidationError(r.errors);
    return s;
}

sim::Scenario parse_scenario_text(std::string_view text) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw sim::ValidationError({"<root>: not well-formed JSON"});
    return parse_scenario(doc);
}

Json load_scenario_document(const std::string& name_or_path) {
    const auto& names = builtin_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end())
        return Json::parse(builtin_source(name_or_path));
    std::ifstream in(name_or_path, std::ios::binary);
    if (!in) throw sim::ValidationError({"scenario: no built-in or readable file named '" + name_or_path + "'"});
    Json doc = Json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw sim::ValidationError({"<root>: not well-formed JSON in " + name_or_path});
    return doc;
}

sim::Scenario load_scenario(const std::string& name_or_path) {
    return parse_scenario(load_scenario_document(name_or_path));
}

std::vector<CalibrationRow> parse_measurements_csv(std::string_view text) {
    std::vector<CalibrationRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    auto number = [&](const std::string& cell, const char* what) {
        double v = 0.0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
            throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what + " '" + cell + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (rows.empty() && !cells.empty() && cells[0] == "distance_m") continue;
        if (cells.size() < 2 || cells.size() > 4)
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 2 to 4 columns");
        CalibrationRow row;
        row.distance_m = number(cells[0], "distance");
        row.rssi_lo_dbm = number(cells[1], "rssi");
        row.rssi_hi_dbm = cells.size() > 2 && !cells[2].empty() ? number(cells[2], "rssi") : row.rssi_lo_dbm;
        if (cells.size() > 3 && !cells[3].empty()) {
            auto env = phy::env_from_string(cells[3]);
            if (!env)
                throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown environment '" +
                                            cells[3] + "'");
            row.env = *env;
        }
        if (!(row.distance_m > 0.0))
            throw std::invalid_argument("line " + std::to_string(line_no) + ": distance must be positive");
        rows.push_back(row);
    }
    return rows;
}

std::vector<FittedClass> calibrate(std::span<const CalibrationRow> rows, const phy::RadioConfig& cfg) {
    std::map<phy::EnvKind, std::vector<phy::Measurement>> groups;
    for (const auto& row : rows) groups[row.env].push_back({row.distance_m, row.midpoint()});
    std::vector<FittedClass> out;
    for (const auto& [env, ms] : groups) {
        const double ref = phy::default_environment(env).reference_loss_db;
        FittedClass fc{env, {}, ms.size()};
        std::set<double> distances;
        for (const auto& m : ms) distances.insert(m.distance_m);
        if (distances.size() >= 2) {
            fc.calibration = phy::calibrate_exponent(ms, cfg, ref);
        } else {
            fc.calibration.exponent = phy::solve_exponent(ms.front(), cfg, ref);
            if (fc.calibration.exponent < 2.0) {
                fc.calibration.exponent = 2.0;
                fc.calibration.clamped = true;
            }
            double sq = 0.0;
            for (const auto& m : ms) {
                const double pred = phy::received_signal(
                                        cfg, phy::path_loss_db(m.distance_m,
                                                               {env, fc.calibration.exponent, ref, 0.0}, 0.0)
                                                 .db)
                                        .rssi_dbm;
                sq += (pred - m.rssi_dbm) * (pred - m.rssi_dbm);
            }
            fc.calibration.rms_residual_db = std::sqrt(sq / static_cast<double>(ms.size()));
        }
        out.push_back(fc);
    }
    return out;
}

std::vector<gateway::UplinkMessage> uplinks(const sim::Scenario& scenario, const sim::SimReport& report) {
    std::map<NodeId, std::string> names;
    for (const auto& n : scenario.nodes) names[n.id] = n.name;
    gateway::UplinkConfig cfg;
    cfg.region = scenario.region;
    cfg.epoch_s = scenario.epoch_s;
    std::vector<gateway::UplinkMessage> out;
    out.reserve(report.gateway_deliveries.size());
    for (const auto& d : report.gateway_deliveries)
        out.push_back(gateway::packet_to_uplink(d.packet, d.rx, d.time, names.at(d.gateway), names, cfg));
    return out;
}

Json summarize(const sim::Scenario& scenario, const sim::SimReport& report) {
    auto name = [&](NodeId id) {
        const auto* n = scenario.find(id);
        return n ? n->name : std::to_string(id.value);
    };
    const bool has_gateway =
        std::any_of(scenario.nodes.begin(), scenario.nodes.end(), [](const auto& n) { return n.role == Role::Gateway; });

    Json s;
    s["scenario"] = scenario.name;
    s["seed"] = scenario.seed;
    s["duration_s"] = scenario.duration_s;
    s["transmissions"] = report.transmissions;
    s["collisions"] = report.collisions;
    s["duplicates_suppressed"] = report.duplicates_suppressed;
    s["gateway_uplinks"] = report.gateway_deliveries.size();

    Json outcomes = Json::object();
    for (auto o : {sim::RxOutcome::Decoded, sim::RxOutcome::BelowSensitivity, sim::RxOutcome::BelowSnrFloor,
                   sim::RxOutcome::Collided, sim::RxOutcome::TxBusy}) {
        auto it = report.outcome_counts.find(o);
        outcomes[std::string(to_string(o))] = it == report.outcome_counts.end() ? 0 : it->second;
    }
    s["outcomes"] = outcomes;

    Json originated = Json::object(), delivered = Json::object(), pdr = Json::object(), app = Json::object(),
         busy = Json::object();
    for (const auto& n : scenario.nodes) {
        const auto sent = report.originated.at(n.id);
        originated[n.name] = sent;
        app[n.name] = report.app_deliveries.at(n.id);
        busy[n.name] = gateway::quantize_field(report.airtime_busy_fraction.at(n.id));
        if (!has_gateway || n.role == Role::Gateway || sent == 0) continue;
        auto it = report.delivered_to_gateway.find(n.id);
        const auto got = it == report.delivered_to_gateway.end() ? 0 : it->second;
        delivered[n.name] = got;
        pdr[n.name] = gateway::quantize_field(static_cast<double>(got) / static_cast<double>(sent));
    }
    s["originated"] = originated;
    s["delivered_to_gateway"] = delivered;
    s["pdr"] = pdr;
    s["app_deliveries"] = app;
    s["airtime_busy_fraction"] = busy;

    Json hops = Json::object();
    for (const auto& [h, c] : report.hop_count_histogram) hops[std::to_string(h)] = c;
    s["hop_count_histogram"] = hops;

    struct Acc {
        std::uint64_t frames = 0, decoded = 0;
        double rssi = 0.0, snr = 0.0;
    };
    std::map<std::pair<std::string, std::string>, Acc> links;
    for (const auto& rec : report.receptions) {
        auto& a = links[{name(rec.transmitter), name(rec.receiver)}];
        ++a.frames;
        if (rec.outcome != sim::RxOutcome::Decoded) continue;
        ++a.decoded;
        a.rssi += rec.rssi_dbm;
        a.snr += rec.snr_db;
    }
    Json jl = Json::array();
    for (const auto& [key, a] : links) {
        if (a.decoded == 0) continue;
        const double n = static_cast<double>(a.decoded);
        jl.push_back({{"from", key.first},
                      {"to", key.second},
                      {"frames", a.frames},
                      {"decoded", a.decoded},
                      {"mean_rssi_dbm", gateway::quantize_field(a.rssi / n)},
                      {"mean_snr_db", gateway::quantize_field(a.snr / n)}});
    }
    s["links"] = jl;
    return s;
}

std::string summary_text(const Json& s) {
    std::ostringstream o;
    char buf[256];
    o << "scenario " << s["scenario"].get<std::string>() << "  seed " << s["seed"].get<std::uint64_t>()
      << "  duration " << s["duration_s"].get<double>() << " s\n";
    o << "transmissions " << s["transmissions"] << "  collisions " << s["collisions"] << "  duplicates suppressed "
      << s["duplicates_suppressed"] << "  gateway uplinks " << s["gateway_uplinks"] << "\n";
    o << "outcomes:";
    for (const auto& [k, v] : s["outcomes"].items()) o << ' ' << k << '=' << v;
    o << "\n";
    for (const auto& l : s["links"]) {
        std::snprintf(buf, sizeof buf, "link %s -> %s: %llu/%llu decoded, mean RSSI %.2f dBm, mean SNR %.2f dB\n",
                      l["from"].get<std::string>().c_str(), l["to"].get<std::string>().c_str(),
                      static_cast<unsigned long long>(l["decoded"].get<std::uint64_t>()),
                      static_cast<unsigned long long>(l["frames"].get<std::uint64_t>()),
                      l["mean_rssi_dbm"].get<double>(), l["mean_snr_db"].get<double>());
        o << buf;
    }
    for (const auto& [node, p] : s["pdr"].items()) {
        std::snprintf(buf, sizeof buf, "PDR %s: %llu/%llu = %.4f\n", node.c_str(),
                      static_cast<unsigned long long>(s["delivered_to_gateway"][node].get<std::uint64_t>()),
                      static_cast<unsigned long long>(s["originated"][node].get<std::uint64_t>()), p.get<double>());
        o << buf;
    }
    return o.str();
}

Artifacts render(const sim::Scenario& scenario, const sim::SimReport& report) {
    Artifacts a;
    const Json summary = summarize(scenario, report);
    a.summary_json = summary.dump(2) + "\n";
    a.summary_text = summary_text(summary);

    std::map<NodeId, std::string> names;
    for (const auto& n : scenario.nodes) names[n.id] = n.name;

    Json receptions = Json::array();
    for (const auto& r : report.receptions)
        receptions.push_back({{"time_s", sim_to_seconds(r.time)},
                              {"frame", r.frame},
                              {"transmitter", names.at(r.transmitter)},
                              {"receiver", names.at(r.receiver)},
                              {"origin", names.at(r.origin)},
                              {"packet_id", r.packet_id},
                              {"port", std::string(to_string(r.port))},
                              {"hop_limit", r.hop_limit},
                              {"rssi_dbm", gateway::quantize_field(r.rssi_dbm)},
                              {"snr_db", gateway::quantize_field(r.snr_db)},
                              {"distance_m", gateway::quantize_field(r.distance_m)},
                              {"outcome", std::string(to_string(r.outcome))}});
    a.report_json = Json{{"summary", summary}, {"receptions", receptions}}.dump() + "\n";

    for (const auto& line : report.trace) a.trace_log += line + "\n";

    const auto gw = std::find_if(scenario.nodes.begin(), scenario.nodes.end(),
                                 [](const auto& n) { return n.role == Role::Gateway; });
    std::vector<sim::ReceptionRecord> at_gateway;
    if (gw != scenario.nodes.end())
        std::copy_if(report.receptions.begin(), report.receptions.end(), std::back_inserter(at_gateway),
                     [&](const auto& r) { return r.receiver == gw->id && r.outcome == sim::RxOutcome::Decoded; });
    const sim::GeoPoint origin = gw != scenario.nodes.end() ? gw->position : scenario.nodes.front().position;
    a.map_csv = gateway::export_reception_map_csv(at_gateway, origin, names);
    a.map_kml = gateway::export_reception_map_kml(at_gateway, names);

    for (const auto& msg : uplinks(scenario, report)) {
        a.uplinks_ndjson += msg.serialize() + "\n";
        for (const auto& rec : gateway::uplink_to_series(msg)) a.series_lp += gateway::serialize_line_protocol(rec) + "\n";
    }
    return a;
}

namespace {

struct Options {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::string out_dir = ".";
    std::string emit;
    std::string calibrate_csv;
    std::string seeds;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

std::set<std::string> parse_emit(const std::string& list) {
    static const std::set<std::string> known{"summary", "report", "trace", "map_csv", "map_kml", "uplinks",
                                             "series"};
    std::set<std::string> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        if (!known.contains(item)) throw sim::ValidationError({"--emit: unknown output '" + item + "'"});
        out.insert(item);
    }
    return out;
}

void write_artifacts(const std::filesystem::path& dir, const std::set<std::string>& outputs, const Artifacts& a) {
    std::filesystem::create_directories(dir);
    write_file(dir / "summary.json", a.summary_json);
    if (outputs.contains("report")) write_file(dir / "report.json", a.report_json);
    if (outputs.contains("trace")) write_file(dir / "trace.log", a.trace_log);
    if (outputs.contains("map_csv")) write_file(dir / "map.csv", a.map_csv);
    if (outputs.contains("map_kml")) write_file(dir / "map.kml", a.map_kml);
    if (outputs.contains("uplinks")) write_file(dir / "uplinks.ndjson", a.uplinks_ndjson);
    if (outputs.contains("series")) write_file(dir / "series.lp", a.series_lp);
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
    const auto dots = text.find("..");
    std::uint64_t lo = 0, hi = 0;
    auto parse = [&](std::string_view s, std::uint64_t& v) {
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        return !s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size();
    };
    if (dots == std::string::npos || !parse(std::string_view(text).substr(0, dots), lo) ||
        !parse(std::string_view(text).substr(dots + 2), hi) || hi < lo)
        throw sim::ValidationError({"--seeds: expected a..b with a <= b"});
    if (hi - lo >= 10000) throw sim::ValidationError({"--seeds: at most 10000 seeds per batch"});
    return {lo, hi};
}

int run_calibration(const Options& opt, std::ostream& out) {
    std::ifstream in(opt.calibrate_csv, std::ios::binary);
    if (!in) throw sim::ValidationError({"--calibrate: cannot read " + opt.calibrate_csv});
    std::stringstream text;
    text << in.rdbuf();
    std::vector<CalibrationRow> rows;
    try {
        rows = parse_measurements_csv(text.str());
    } catch (const std::invalid_argument& e) {
        throw sim::ValidationError({std::string("--calibrate: ") + e.what()});
    }
    if (rows.empty()) throw sim::ValidationError({"--calibrate: no measurement rows"});
    char buf[200];
    for (const auto& fc : calibrate(rows)) {
        std::snprintf(buf, sizeof buf, "%s exponent=%.4f rows=%zu rms_residual_db=%.3f%s\n",
                      std::string(phy::to_string(fc.env)).c_str(), fc.calibration.exponent, fc.rows,
                      fc.calibration.rms_residual_db, fc.calibration.clamped ? " clamped" : "");
        out << buf;
    }
    return 0;
}

Json prepare_document(const Options& opt) {
    Json doc = load_scenario_document(opt.scenario);
    if (doc.is_object()) {
        if (opt.seed) doc["seed"] = *opt.seed;
        if (opt.duration) doc["duration_s"] = *opt.duration;
    }
    return doc;
}

int run_scenario(const Options& opt, std::ostream& out) {
    sim::Scenario scenario = parse_scenario(prepare_document(opt));
    std::set<std::string> outputs = opt.emit.empty() ? scenario.outputs : parse_emit(opt.emit);
    if (!opt.emit.empty()) {
        scenario.outputs = outputs;
        if (auto v = scenario.violations(); !v.empty()) throw sim::ValidationError(v);
    }
    const auto report = sim::run(scenario, sim::RunOptions{outputs.contains("trace")});
    const auto artifacts = render(scenario, report);
    write_artifacts(opt.out_dir, outputs, artifacts);
    out << artifacts.summary_text;
    return 0;
}

int run_batch(const Options& opt, std::ostream& out) {
    const auto [lo, hi] = parse_seed_range(opt.seeds);
    const sim::Scenario base = parse_scenario(prepare_document(opt));
    std::set<std::string> outputs = opt.emit.empty() ? base.outputs : parse_emit(opt.emit);

    std::vector<std::future<Artifacts>> jobs;
    for (std::uint64_t seed = lo; seed <= hi; ++seed) {
        jobs.push_back(std::async(std::launch::async, [&base, &outputs, seed] {
            sim::Scenario s = base;
            s.seed = seed;
            s.outputs = outputs;
            return render(s, sim::run(s, sim::RunOptions{outputs.contains("trace")}));
        }));
        if (jobs.size() % 8 == 0) jobs[jobs.size() - 8].wait();
    }

    Json runs = Json::array();
    std::uint64_t tx = 0, collisions = 0, duplicates = 0;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> pdr;
    for (std::uint64_t seed = lo; seed <= hi; ++seed) {
        const Artifacts a = jobs[seed - lo].get();
        write_artifacts(std::filesystem::path(opt.out_dir) / ("seed-" + std::to_string(seed)), outputs, a);
        Json s = Json::parse(a.summary_json);
        tx += s["transmissions"].get<std::uint64_t>();
        collisions += s["collisions"].get<std::uint64_t>();
        duplicates += s["duplicates_suppressed"].get<std::uint64_t>();
        for (const auto& [node, got] : s["delivered_to_gateway"].items()) {
            pdr[node].first += got.get<std::uint64_t>();
            pdr[node].second += s["originated"][node].get<std::uint64_t>();
        }
        runs.push_back(std::move(s));
    }
    Json merged_pdr = Json::object();
    for (const auto& [node, c] : pdr)
        merged_pdr[node] = gateway::quantize_field(static_cast<double>(c.first) / static_cast<double>(c.second));
    Json merged{{"scenario", base.name},
                {"seeds", {lo, hi}},
                {"transmissions", tx},
                {"collisions", collisions},
                {"duplicates_suppressed", duplicates},
                {"pdr", merged_pdr},
                {"runs", runs}};
    std::filesystem::create_directories(opt.out_dir);
    write_file(std::filesystem::path(opt.out_dir) / "summary.json", merged.dump(2) + "\n");
    out << "batch " << base.name << " seeds " << lo << ".." << hi << ": transmissions " << tx << "  collisions "
        << collisions << "  duplicates suppressed " << duplicates << "\n";
    for (const auto& [node, p] : merged_pdr.items()) out << "PDR " << node << ": " << p.get<double>() << "\n";
    return 0;
}

}  // namespace

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete-event simulator for a LoRa managed-flooding mesh", "meshsim"};
    Options opt;
    std::uint64_t seed = 0;
    double duration = 0.0;
    app.add_option("--scenario", opt.scenario, "Built-in name (campus, cumbre, line4, k4) or JSON file");
    auto* seed_opt = app.add_option("--seed", seed, "Run seed, overrides the file");
    auto* dur_opt = app.add_option("--duration", duration, "Duration in seconds, overrides the file");
    app.add_option("--out-dir", opt.out_dir, "Directory for artifacts");
    app.add_option("--emit", opt.emit, "Comma list of summary,report,trace,map_csv,map_kml,uplinks,series");
    app.add_option("--calibrate", opt.calibrate_csv, "Fit path loss exponents from a measurements CSV");
    app.add_option("--seeds", opt.seeds, "Batch over seeds a..b");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }
    if (seed_opt->count()) opt.seed = seed;
    if (dur_opt->count()) opt.duration = duration;

    try {
        if (!opt.calibrate_csv.empty()) return run_calibration(opt, out);
        if (opt.scenario.empty()) {
            err << "error: --scenario or --calibrate is required\n" << app.help();
            return 2;
        }
        return opt.seeds.empty() ? run_scenario(opt, out) : run_batch(opt, out);
    } catch (const sim::ValidationError& e) {
        err << "validation failed:\n";
        for (const auto& v : e.violations()) err << "  " << v << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace meshsim::cli
