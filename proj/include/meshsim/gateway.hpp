#pragma once

// Edge pipeline emulation for the gateway node: uplink JSON messages as
// published over MQTT, line-protocol series records, and reception maps.

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "meshsim/engine.hpp"

namespace meshsim::gateway {

using Json = nlohmann::json;  // std::map backed, so keys serialize sorted

struct UplinkConfig {
    std::string region = "US";
    int channel = 0;
    std::int64_t epoch_s = 1'700'000'000;
};

struct UplinkMessage {
    std::string gateway_id;
    std::string topic;
    Json body;

    /// Canonical single-line JSON: {"body":...,"gateway_id":...,"topic":...}.
    std::string serialize() const;
};

std::string uplink_topic(const UplinkConfig& cfg, const std::string& gateway_id);

/// `names` resolves node ids to the names used in topics, tags and bodies.
UplinkMessage packet_to_uplink(const mesh::MeshPacket& packet, const mesh::RxMeta& rx, SimTime rx_time,
                               const std::string& gateway_id, const std::map<NodeId, std::string>& names,
                               const UplinkConfig& cfg = {});

struct SeriesRecord {
    std::string measurement;
    std::map<std::string, std::string> tags;
    std::map<std::string, double> fields;
    std::int64_t timestamp_ns = 0;

    friend bool operator==(const SeriesRecord&, const SeriesRecord&) = default;
};

/// Field values are kept on a 1e-6 grid so they survive text round trips.
double quantize_field(double value);

std::vector<SeriesRecord> uplink_to_series(const UplinkMessage& msg);

class LineProtocolError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string format_field_value(double value);
std::string serialize_line_protocol(const SeriesRecord& record);
SeriesRecord parse_line_protocol(std::string_view line);

enum class RssiBucket { Green, Orange, Red };

std::string_view to_string(RssiBucket bucket);
RssiBucket classify_rssi(double rssi_dbm);

/// CSV columns: time_s,node,x_m,y_m,distance_m,rssi_dbm,snr_db,bucket,port.
std::string export_reception_map_csv(std::span<const sim::ReceptionRecord> records, const sim::GeoPoint& origin,
                                     const std::map<NodeId, std::string>& names);
std::string export_reception_map_kml(std::span<const sim::ReceptionRecord> records,
                                     const std::map<NodeId, std::string>& names);

}  // namespace meshsim::gateway
