#include "meshsim/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshsim::mesh {

DedupCache::DedupCache(SimTime ttl, std::size_t capacity) : ttl_(ttl), capacity_(capacity) {
    if (ttl <= 0) throw std::invalid_argument("dedup ttl must be positive");
    if (capacity == 0) throw std::invalid_argument("dedup capacity must be positive");
}

bool DedupCache::contains(const FloodKey& key, SimTime now) const {
    auto it = index_.find(key);
    return it != index_.end() && now - it->second < ttl_;
}

void DedupCache::expire(SimTime now) {
    while (!order_.empty() && now - order_.front().second >= ttl_) {
        index_.erase(order_.front().first);
        order_.pop_front();
    }
}

bool DedupCache::insert(const FloodKey& key, SimTime now) {
    expire(now);
    if (index_.contains(key)) return false;
    if (index_.size() >= capacity_) {
        index_.erase(order_.front().first);
        order_.pop_front();
    }
    order_.emplace_back(key, now);
    index_.emplace(key, now);
    return true;
}

SimTime slot_time_for(const phy::RadioConfig& cfg) {
    const double slot_s = 8.5 * phy::symbol_time(cfg);
    const auto ms = static_cast<SimTime>(std::ceil(slot_s * 1000.0 - 1e-9));
    return ms * 1'000'000;
}

ContentionParams ContentionParams::for_radio(const phy::RadioConfig& cfg) {
    ContentionParams p;
    p.slot_time = slot_time_for(cfg);
    return p;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

bool is_infrastructure(Role role) { return role == Role::Router || role == Role::Gateway; }

}  // namespace

NodeState::NodeState(NodeId node_id, Role node_role, std::uint64_t run_seed, DedupCache cache)
    : id(node_id),
      role(node_role),
      dedup(std::move(cache)),
      next_id(static_cast<std::uint32_t>(splitmix64(run_seed ^ (std::uint64_t{node_id.value} << 32)))) {}

std::uint32_t next_packet_id(NodeState& node) {
    if (node.next_id == 0) ++node.next_id;  // 0 means "no id" on the air
    return node.next_id++;
}

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::DeliverToApp:
            return "DELIVER_TO_APP";
        case ActionKind::ScheduleRebroadcast:
            return "SCHEDULE_REBROADCAST";
        case ActionKind::EmitUplink:
            return "EMIT_UPLINK";
        case ActionKind::DropDuplicate:
            return "DROP_DUPLICATE";
    }
    return "UNKNOWN";
}

int contention_window(double snr_db, Role role, const ContentionParams& params) {
    const double span = params.snr_max_db - params.snr_min_db;
    double f = span > 0 ? (snr_db - params.snr_min_db) / span : 1.0;
    f = std::clamp(f, 0.0, 1.0);
    const int lo = is_infrastructure(role) ? params.router_cw_min : params.client_cw_min;
    const int hi = is_infrastructure(role) ? params.router_cw_max : params.client_cw_max;
    return lo + static_cast<int>(std::lround(f * (hi - lo)));
}

SimTime backoff_delay(double snr_db, Role role, Rng& rng, const ContentionParams& params) {
    const int cw = contention_window(snr_db, role, params);
    std::uniform_int_distribution<int> slots(0, cw);
    return slots(rng) * params.slot_time;
}

bool should_rebroadcast(Role, int hop_limit) { return hop_limit > 0; }

std::vector<Action> on_receive(NodeState& node, const MeshPacket& packet, const RxMeta& rx,
                               SimTime now, Rng& rng, const ContentionParams& params) {
    const auto key = key_of(packet);
    if (node.dedup.contains(key, now)) return {Action{ActionKind::DropDuplicate, 0, std::nullopt}};
    node.dedup.insert(key, now);

    std::vector<Action> actions;
    actions.push_back(Action{ActionKind::DeliverToApp, 0, std::nullopt});
    if (node.role == Role::Gateway) actions.push_back(Action{ActionKind::EmitUplink, 0, std::nullopt});
    if (should_rebroadcast(node.role, packet.hop_limit)) {
        MeshPacket copy = packet;
        copy.hop_limit = packet.hop_limit - 1;
        actions.push_back(Action{ActionKind::ScheduleRebroadcast,
                                 backoff_delay(rx.snr_db, node.role, rng, params), std::move(copy)});
    }
    return actions;
}

MeshPacket originate(NodeState& node, Port port, std::vector<std::uint8_t> payload, int hop_budget,
                     SimTime now) {
    if (payload.size() > kMaxPayloadBytes)
        throw std::invalid_argument("payload exceeds " + std::to_string(kMaxPayloadBytes) + " bytes");
    if (hop_budget < 1 || hop_budget > kMaxHopLimit)
        throw std::invalid_argument("hop budget must be in [1, 7]");
    MeshPacket p;
    p.origin = node.id;
    p.packet_id = next_packet_id(node);
    p.port = port;
    p.hop_limit = hop_budget - 1;
    p.hop_start = p.hop_limit;
    p.payload = std::move(payload);
    // Our own flood must not be relayed back through us.
    node.dedup.insert(key_of(p), now);
    return p;
}

}  // namespace meshsim::mesh
