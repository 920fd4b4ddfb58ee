#pragma once

// Deterministic discrete-event simulation of a flooding LoRa mesh.
//
// A single event loop drives every node. Frames are evaluated at their end
// time against every other frame that overlapped them at the receiver
// (capture rule); a receiver that transmits at any point during a frame
// loses it (half duplex).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "meshsim/mesh.hpp"
#include "meshsim/scenario.hpp"

namespace meshsim::sim {

enum class RxOutcome { Decoded, BelowSensitivity, BelowSnrFloor, Collided, TxBusy };

std::string_view to_string(RxOutcome outcome);
RxOutcome from_decode(phy::DecodeOutcome outcome);

struct ReceptionRecord {
    SimTime time = 0;  // end of the frame
    std::uint64_t frame = 0;
    NodeId transmitter;
    NodeId receiver;
    NodeId origin;
    std::uint32_t packet_id = 0;
    Port port = Port::TextMessageApp;
    int hop_limit = 0;
    double rssi_dbm = 0.0;
    double snr_db = 0.0;
    double distance_m = 0.0;
    RxOutcome outcome = RxOutcome::Decoded;
    GeoPoint tx_position;
};

struct GatewayDelivery {
    SimTime time = 0;
    NodeId gateway;
    mesh::MeshPacket packet;
    mesh::RxMeta rx;
};

struct SimReport {
    std::vector<ReceptionRecord> receptions;
    std::vector<GatewayDelivery> gateway_deliveries;
    std::map<NodeId, std::uint64_t> originated;
    std::map<NodeId, std::uint64_t> delivered_to_gateway;  // keyed by origin
    std::map<NodeId, std::uint64_t> app_deliveries;        // keyed by receiver
    std::map<NodeId, std::uint64_t> node_transmissions;
    std::map<NodeId, double> airtime_busy_fraction;
    std::map<int, std::uint64_t> hop_count_histogram;
    std::map<RxOutcome, std::uint64_t> outcome_counts;
    std::uint64_t duplicates_suppressed = 0;
    std::uint64_t collisions = 0;
    std::uint64_t transmissions = 0;
    SimTime end_time = 0;
    std::vector<std::string> trace;
};

class ValidationError : public std::runtime_error {
   public:
    explicit ValidationError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

   private:
    std::vector<std::string> violations_;
};

/// Per-link propagation state resolved from a scenario.
class LinkTable {
   public:
    explicit LinkTable(const Scenario& scenario);

    struct Link {
        double distance_m = 0.0;
        phy::EnvironmentClass env;
        std::optional<double> fixed_shadow_db;
        double extra_loss_db = 0.0;
    };

    std::size_t size() const { return scenario_->nodes.size(); }
    const Scenario& scenario() const { return *scenario_; }
    GeoPoint position(std::size_t node, double time_s) const;
    Link at(std::size_t from, std::size_t to, double time_s) const;

   private:
    const Scenario* scenario_;
    std::vector<bool> mobile_;
    std::map<std::pair<std::size_t, std::size_t>, LinkOverride> overrides_;
};

struct Transmission {
    std::uint64_t frame = 0;
    std::size_t transmitter = 0;  // node index
    const mesh::MeshPacket* packet = nullptr;
    SimTime start = 0;
    SimTime end = 0;
};

/// Candidate receptions of a frame at every other node (no self reception).
/// Receivers flagged in `transmitting` at frame start record TX_BUSY.
std::vector<ReceptionRecord> propagate(const Transmission& tx, const LinkTable& links,
                                       const std::vector<bool>& transmitting, bool shadowing,
                                       mesh::Rng& rng);

struct Contender {
    double rssi_dbm = 0.0;
    RxOutcome outcome = RxOutcome::Decoded;  // outcome before arbitration
};

/// Capture rule over frames that overlap at one receiver. The strongest frame
/// survives only if it beats every other one by `capture_threshold_db`.
std::vector<RxOutcome> resolve_collisions(std::span<const Contender> frames, double capture_threshold_db);

struct RunOptions {
    bool trace = false;
};

/// Runs a validated scenario. Throws ValidationError listing every violation.
SimReport run(const Scenario& scenario, const RunOptions& options = {});

}  // namespace meshsim::sim
