#include "meshsim/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "meshsim/phy.hpp"
#include "meshsim/telemetry.hpp"

namespace meshsim::gateway {

namespace {

std::string hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xF]);
    }
    return out;
}

std::string name_or_id(NodeId id, const std::map<NodeId, std::string>& names) {
    auto it = names.find(id);
    return it != names.end() ? it->second : "!" + std::to_string(id.value);
}

Json decode_payload(const mesh::MeshPacket& packet, bool& ok) {
    ok = true;
    try {
        switch (packet.port) {
            case Port::PositionApp: {
                const auto fix = telemetry::decode_position(packet.payload);
                return Json{{"lat", fix.latitude()}, {"lon", fix.longitude()}, {"alt", fix.alt_m},
                            {"time", fix.fix_time}};
            }
            case Port::TelemetryApp: {
                const auto s = telemetry::decode_irradiance(packet.payload);
                Json j{{"adc_raw", s.adc_raw}, {"irradiance_wm2", quantize_field(s.irradiance)}};
                if (s.battery_soc) j["battery_percent"] = *s.battery_soc;
                return j;
            }
            case Port::TextMessageApp:
                return Json{{"text", std::string(packet.payload.begin(), packet.payload.end())}};
            case Port::Control:
                break;
        }
    } catch (const telemetry::CodecError&) {
    }
    ok = false;
    return {};
}

// Influx line protocol special characters per element.
std::string escape(std::string_view s, std::string_view specials) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (specials.find(c) != std::string_view::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

constexpr std::string_view kMeasurementSpecials = ", \\";
constexpr std::string_view kKeySpecials = ",= \\";

void check_text(std::string_view s, const char* what) {
    if (s.empty()) throw LineProtocolError(std::string(what) + " must not be empty");
    if (s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos)
        throw LineProtocolError(std::string(what) + " must not contain line breaks");
}

// Splits at unescaped `sep`, keeping escapes in the pieces.
std::vector<std::string_view> split_unescaped(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\') {
            ++i;
            continue;
        }
        if (s[i] == sep) {
            out.push_back(s.substr(begin, i - begin));
            begin = i + 1;
        }
    }
    out.push_back(s.substr(begin));
    return out;
}

std::string unescape(std::string_view s, std::string_view specials) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size() && specials.find(s[i + 1]) != std::string_view::npos) ++i;
        out.push_back(s[i]);
    }
    return out;
}

std::pair<std::string, std::string> split_pair(std::string_view kv) {
    auto parts = split_unescaped(kv, '=');
    if (parts.size() != 2) throw LineProtocolError("expected key=value, got '" + std::string(kv) + "'");
    return {unescape(parts[0], kKeySpecials), unescape(parts[1], kKeySpecials)};
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&':
                out += "&amp;";
                break;
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '"':
                out += "&quot;";
                break;
            default:
                out.push_back(c);
        }
    }
    return out;
}

std::vector<const sim::ReceptionRecord*> sorted_by_time(std::span<const sim::ReceptionRecord> records) {
    std::vector<const sim::ReceptionRecord*> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->time < b->time; });
    return rows;
}

}  // namespace

std::string UplinkMessage::serialize() const {
    return Json{{"gateway_id", gateway_id}, {"topic", topic}, {"body", body}}.dump();
}

std::string uplink_topic(const UplinkConfig& cfg, const std::string& gateway_id) {
    return "msh/" + cfg.region + "/2/json/" + std::to_string(cfg.channel) + "/" + gateway_id;
}

UplinkMessage packet_to_uplink(const mesh::MeshPacket& packet, const mesh::RxMeta& rx, SimTime rx_time,
                               const std::string& gateway_id, const std::map<NodeId, std::string>& names,
                               const UplinkConfig& cfg) {
    UplinkMessage msg;
    msg.gateway_id = gateway_id;
    msg.topic = uplink_topic(cfg, gateway_id);
    msg.body = Json{
        {"from", name_or_id(packet.origin, names)},
        {"id", packet.packet_id},
        {"port", std::string(to_string(packet.port))},
        {"hop_limit", packet.hop_limit},
        {"rssi", static_cast<int>(std::lround(rx.rssi_dbm))},
        {"snr", phy::snr_raw_decode(phy::snr_raw_encode(rx.snr_db))},
        {"timestamp", cfg.epoch_s + rx_time / kNanosPerSecond},
    };
    bool ok = false;
    Json payload = decode_payload(packet, ok);
    if (ok)
        msg.body["payload"] = std::move(payload);
    else
        msg.body["payload_raw"] = hex(packet.payload);
    return msg;
}

double quantize_field(double value) {
    const double q = std::round(value * 1e6) / 1e6;
    return q == 0.0 ? 0.0 : q;  // no negative zero
}

std::vector<SeriesRecord> uplink_to_series(const UplinkMessage& msg) {
    const auto& body = msg.body;
    const std::string origin = body.at("from").get<std::string>();
    const std::int64_t ts = body.at("timestamp").get<std::int64_t>() * kNanosPerSecond;
    const std::string port = body.at("port").get<std::string>();

    std::vector<SeriesRecord> out;
    if (body.contains("payload")) {
        const auto& p = body.at("payload");
        if (port == "TELEMETRY_APP") {
            out.push_back({"irradiance",
                           {{"node", origin}},
                           {{"value", quantize_field(p.at("irradiance_wm2").get<double>())}},
                           ts});
        } else if (port == "POSITION_APP") {
            out.push_back({"position",
                           {{"node", origin}},
                           {{"lat", quantize_field(p.at("lat").get<double>())},
                            {"lon", quantize_field(p.at("lon").get<double>())},
                            {"alt", quantize_field(p.at("alt").get<double>())}},
                           ts});
        }
    }
    out.push_back({"link",
                   {{"gateway", msg.gateway_id}, {"node", origin}},
                   {{"rssi", quantize_field(body.at("rssi").get<double>())},
                    {"snr", quantize_field(body.at("snr").get<double>())}},
                   ts});
    return out;
}

std::string format_field_value(double value) {
    if (!std::isfinite(value)) throw LineProtocolError("field values must be finite");
    std::string s = fmt("%.6f", value);
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

std::string serialize_line_protocol(const SeriesRecord& record) {
    check_text(record.measurement, "measurement");
    if (record.fields.empty()) throw LineProtocolError("a record needs at least one field");
    std::string out = escape(record.measurement, kMeasurementSpecials);
    for (const auto& [k, v] : record.tags) {  // std::map: already sorted
        check_text(k, "tag key");
        check_text(v, "tag value");
        out += ',' + escape(k, kKeySpecials) + '=' + escape(v, kKeySpecials);
    }
    char sep = ' ';
    for (const auto& [k, v] : record.fields) {
        check_text(k, "field key");
        out += sep + escape(k, kKeySpecials) + '=' + format_field_value(v);
        sep = ',';
    }
    out += ' ' + std::to_string(record.timestamp_ns);
    return out;
}

SeriesRecord parse_line_protocol(std::string_view line) {
    auto sections = split_unescaped(line, ' ');
    if (sections.size() != 3) throw LineProtocolError("expected 'series fields timestamp'");

    SeriesRecord r;
    auto series = split_unescaped(sections[0], ',');
    r.measurement = unescape(series[0], kMeasurementSpecials);
    if (r.measurement.empty()) throw LineProtocolError("missing measurement");
    for (std::size_t i = 1; i < series.size(); ++i) {
        auto [k, v] = split_pair(series[i]);
        r.tags.emplace(std::move(k), std::move(v));
    }
    for (auto kv : split_unescaped(sections[1], ',')) {
        auto [k, v] = split_pair(kv);
        double value = 0.0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), value);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw LineProtocolError("bad field value '" + v + "'");
        r.fields.emplace(std::move(k), value);
    }
    const auto ts = sections[2];
    auto res = std::from_chars(ts.data(), ts.data() + ts.size(), r.timestamp_ns);
    if (res.ec != std::errc{} || res.ptr != ts.data() + ts.size())
        throw LineProtocolError("bad timestamp '" + std::string(ts) + "'");
    return r;
}

std::string_view to_string(RssiBucket bucket) {
    switch (bucket) {
        case RssiBucket::Green:
            return "GREEN";
        case RssiBucket::Orange:
            return "ORANGE";
        case RssiBucket::Red:
            return "RED";
    }
    return "UNKNOWN";
}

RssiBucket classify_rssi(double rssi_dbm) {
    if (rssi_dbm > -90.0) return RssiBucket::Green;
    if (rssi_dbm >= -110.0) return RssiBucket::Orange;
    return RssiBucket::Red;
}

std::string export_reception_map_csv(std::span<const sim::ReceptionRecord> records, const sim::GeoPoint& origin,
                                     const std::map<NodeId, std::string>& names) {
    std::string out = "time_s,node,x_m,y_m,distance_m,rssi_dbm,snr_db,bucket,port\n";
    for (const auto* r : sorted_by_time(records)) {
        const auto xy = sim::geo_to_local(r->tx_position, origin);
        out += fmt("%.3f", sim_to_seconds(r->time)) + ',' + csv_cell(name_or_id(r->transmitter, names)) + ',' +
               fmt("%.1f", xy.x_m) + ',' + fmt("%.1f", xy.y_m) + ',' + fmt("%.1f", std::hypot(xy.x_m, xy.y_m)) +
               ',' + fmt("%.2f", r->rssi_dbm) + ',' + fmt("%.2f", r->snr_db) + ',' +
               std::string(to_string(classify_rssi(r->rssi_dbm))) + ',' + std::string(to_string(r->port)) + '\n';
    }
    return out;
}

std::string export_reception_map_kml(std::span<const sim::ReceptionRecord> records,
                                     const std::map<NodeId, std::string>& names) {
    std::string out =
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n";
    // KML colors are aabbggrr.
    for (auto [bucket, color] : {std::pair{RssiBucket::Green, "ff00ff00"}, std::pair{RssiBucket::Orange, "ff00a5ff"},
                                 std::pair{RssiBucket::Red, "ff0000ff"}}) {
        out += "<Style id=\"" + std::string(to_string(bucket)) + "\"><IconStyle><color>" + color +
               "</color></IconStyle></Style>\n";
    }
    for (const auto* r : sorted_by_time(records)) {
        const auto bucket = std::string(to_string(classify_rssi(r->rssi_dbm)));
        out += "<Placemark><name>" + xml_escape(name_or_id(r->transmitter, names)) + "</name><styleUrl>#" +
               bucket + "</styleUrl><description>t=" + fmt("%.3f", sim_to_seconds(r->time)) +
               " rssi=" + fmt("%.2f", r->rssi_dbm) + " snr=" + fmt("%.2f", r->snr_db) + " port=" +
               std::string(to_string(r->port)) + "</description><Point><coordinates>" +
               fmt("%.7f", r->tx_position.lon) + ',' + fmt("%.7f", r->tx_position.lat) + ',' +
               fmt("%.1f", r->tx_position.alt) + "</coordinates></Point></Placemark>\n";
    }
    out += "</Document>\n</kml>\n";
    return out;
}

}  // namespace meshsim::gateway
