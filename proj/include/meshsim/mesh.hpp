#pragma once

// Managed flooding: duplicate suppression, hop budget and SNR-weighted
// contention for rebroadcasts. Every node runs the same state machine.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "meshsim/common.hpp"
#include "meshsim/phy.hpp"

namespace meshsim::mesh {

using Rng = std::mt19937_64;

inline constexpr std::size_t kMaxPayloadBytes = 237;
/// Over-the-air header prepended to every payload (addresses, id, flags).
inline constexpr int kHeaderBytes = 16;
inline constexpr int kMaxHopLimit = 7;

struct MeshPacket {
    NodeId origin;
    std::uint32_t packet_id = 0;
    Port port = Port::TextMessageApp;
    int hop_limit = 0;
    int hop_start = 0;  // hop_limit the origin put on the air
    std::vector<std::uint8_t> payload;
    int channel = 0;

    int air_length() const { return kHeaderBytes + static_cast<int>(payload.size()); }

    friend bool operator==(const MeshPacket&, const MeshPacket&) = default;
};

struct FloodKey {
    NodeId origin;
    std::uint32_t packet_id = 0;

    friend constexpr auto operator<=>(const FloodKey&, const FloodKey&) = default;
};

inline FloodKey key_of(const MeshPacket& p) { return {p.origin, p.packet_id}; }

/// Recently seen floods. Entries expire after `ttl`; when full the oldest
/// entry is evicted. Insert times must be non-decreasing.
class DedupCache {
   public:
    static constexpr SimTime kDefaultTtl = 600 * kNanosPerSecond;
    static constexpr std::size_t kDefaultCapacity = 1024;

    explicit DedupCache(SimTime ttl = kDefaultTtl, std::size_t capacity = kDefaultCapacity);

    bool contains(const FloodKey& key, SimTime now) const;
    /// Records `key`. Returns false if it was already present and fresh.
    bool insert(const FloodKey& key, SimTime now);

    std::size_t size() const { return index_.size(); }
    std::size_t capacity() const { return capacity_; }
    SimTime ttl() const { return ttl_; }

   private:
    void expire(SimTime now);

    SimTime ttl_;
    std::size_t capacity_;
    std::deque<std::pair<FloodKey, SimTime>> order_;
    std::map<FloodKey, SimTime> index_;
};

struct ContentionParams {
    double snr_min_db = -20.0;
    double snr_max_db = 10.0;
    int router_cw_min = 2;
    int router_cw_max = 4;
    int client_cw_min = 4;
    int client_cw_max = 8;
    SimTime slot_time = 0;

    /// Defaults with slot time 8.5 symbols rounded up to a whole millisecond.
    static ContentionParams for_radio(const phy::RadioConfig& cfg);
};

SimTime slot_time_for(const phy::RadioConfig& cfg);

struct NodeState {
    NodeState(NodeId id, Role role, std::uint64_t run_seed, DedupCache cache = DedupCache{});

    NodeId id;
    Role role;
    DedupCache dedup;
    std::uint32_t next_id;
};

/// Fresh packet id for a flood originated by `node`; never 0, never repeats
/// for the same node within 2^32 - 1 calls.
std::uint32_t next_packet_id(NodeState& node);

struct RxMeta {
    double rssi_dbm = 0.0;
    double snr_db = 0.0;
};

enum class ActionKind { DeliverToApp, ScheduleRebroadcast, EmitUplink, DropDuplicate };

std::string_view to_string(ActionKind kind);

struct Action {
    ActionKind kind;
    SimTime delay = 0;                 // ScheduleRebroadcast only
    std::optional<MeshPacket> packet;  // rebroadcast copy
};

/// Contention window size (in slots) for a received SNR.
int contention_window(double snr_db, Role role, const ContentionParams& params);

/// Random rebroadcast delay. Strong receivers wait longer so that distant
/// (weak) receivers win the contention and extend coverage.
SimTime backoff_delay(double snr_db, Role role, Rng& rng, const ContentionParams& params);

bool should_rebroadcast(Role role, int hop_limit);

std::vector<Action> on_receive(NodeState& node, const MeshPacket& packet, const RxMeta& rx,
                               SimTime now, Rng& rng, const ContentionParams& params);

/// Builds a new flood originated by `node`. The origin's own transmission
/// consumes one hop, so a budget of H reaches at most H radio hops.
MeshPacket originate(NodeState& node, Port port, std::vector<std::uint8_t> payload, int hop_budget,
                     SimTime now);

}  // namespace meshsim::mesh
