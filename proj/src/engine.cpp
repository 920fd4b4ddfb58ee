#include "meshsim/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <queue>
#include <random>

namespace meshsim::sim {

std::string_view to_string(RxOutcome outcome) {
    switch (outcome) {
        case RxOutcome::Decoded:
            return "DECODED";
        case RxOutcome::BelowSensitivity:
            return "BELOW_SENSITIVITY";
        case RxOutcome::BelowSnrFloor:
            return "BELOW_SNR_FLOOR";
        case RxOutcome::Collided:
            return "COLLIDED";
        case RxOutcome::TxBusy:
            return "TX_BUSY";
    }
    return "UNKNOWN";
}

RxOutcome from_decode(phy::DecodeOutcome outcome) {
    switch (outcome) {
        case phy::DecodeOutcome::Decoded:
            return RxOutcome::Decoded;
        case phy::DecodeOutcome::BelowSensitivity:
            return RxOutcome::BelowSensitivity;
        case phy::DecodeOutcome::BelowSnrFloor:
            return RxOutcome::BelowSnrFloor;
    }
    return RxOutcome::BelowSensitivity;
}

namespace {

std::string join_lines(const std::vector<std::string>& v) {
    std::string out = "invalid scenario:";
    for (const auto& s : v) out += "\n  " + s;
    return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error(join_lines(violations)), violations_(std::move(violations)) {}

LinkTable::LinkTable(const Scenario& scenario) : scenario_(&scenario), mobile_(scenario.nodes.size(), false) {
    for (std::size_t i = 0; i < scenario.nodes.size(); ++i)
        mobile_[i] = std::find(scenario.mobile_nodes.begin(), scenario.mobile_nodes.end(),
                               scenario.nodes[i].id) != scenario.mobile_nodes.end();
    auto index_of = [&](NodeId id) {
        for (std::size_t i = 0; i < scenario.nodes.size(); ++i)
            if (scenario.nodes[i].id == id) return i;
        return scenario.nodes.size();
    };
    for (const auto& o : scenario.links) {
        auto a = index_of(o.a);
        auto b = index_of(o.b);
        if (a == scenario.nodes.size() || b == scenario.nodes.size()) continue;
        overrides_[{std::min(a, b), std::max(a, b)}] = o;
    }
}

GeoPoint LinkTable::position(std::size_t node, double time_s) const {
    if (mobile_[node]) return scenario_->tracker_route.position_at(time_s);
    return scenario_->nodes[node].position;
}

LinkTable::Link LinkTable::at(std::size_t from, std::size_t to, double time_s) const {
    Link link;
    link.distance_m = link_distance(position(from, time_s), position(to, time_s), scenario_->use_elevation);

    std::optional<phy::EnvKind> kind;
    auto ov = overrides_.find({std::min(from, to), std::max(from, to)});
    if (ov != overrides_.end()) {
        kind = ov->second.env;
        link.fixed_shadow_db = ov->second.shadow_db;
        link.extra_loss_db = ov->second.extra_loss_db;
    }
    if (!kind && (mobile_[from] || mobile_[to])) kind = scenario_->tracker_route.env_at(time_s);
    if (!kind) {
        for (const auto& rule : scenario_->env_rules) {
            if (link.distance_m <= rule.max_distance_m) {
                kind = rule.env;
                break;
            }
        }
    }
    link.env = scenario_->environment(kind.value_or(scenario_->default_env));
    return link;
}

std::vector<ReceptionRecord> propagate(const Transmission& tx, const LinkTable& links,
                                       const std::vector<bool>& transmitting, bool shadowing,
                                       mesh::Rng& rng) {
    const auto& nodes = links.scenario().nodes;
    const auto& tx_node = nodes[tx.transmitter];
    const double t_s = sim_to_seconds(tx.start);
    const GeoPoint tx_pos = links.position(tx.transmitter, t_s);

    std::vector<ReceptionRecord> out;
    out.reserve(links.size());
    for (std::size_t rx = 0; rx < links.size(); ++rx) {
        if (rx == tx.transmitter) continue;
        const auto link = links.at(tx.transmitter, rx, t_s);
        double shadow = 0.0;
        if (link.fixed_shadow_db) {
            shadow = *link.fixed_shadow_db;
        } else if (shadowing && link.env.shadowing_sigma_db > 0.0) {
            std::normal_distribution<double> draw(0.0, link.env.shadowing_sigma_db);
            shadow = draw(rng);
        }
        const double loss = phy::path_loss_db(link.distance_m, link.env, shadow).db + link.extra_loss_db;
        const auto& rx_radio = nodes[rx].radio;
        auto signal = phy::received_signal(tx_node.radio, loss);
        signal.rssi_dbm += rx_radio.antenna_gain_rx_dbi - tx_node.radio.antenna_gain_rx_dbi;
        signal.snr_db = signal.rssi_dbm - phy::noise_floor_dbm(rx_radio);

        ReceptionRecord r;
        r.time = tx.end;
        r.frame = tx.frame;
        r.transmitter = tx_node.id;
        r.receiver = nodes[rx].id;
        if (tx.packet) {
            r.origin = tx.packet->origin;
            r.packet_id = tx.packet->packet_id;
            r.port = tx.packet->port;
            r.hop_limit = tx.packet->hop_limit;
        }
        r.rssi_dbm = signal.rssi_dbm;
        r.snr_db = signal.snr_db;
        r.distance_m = link.distance_m;
        r.tx_position = tx_pos;
        const bool busy = rx < transmitting.size() && transmitting[rx];
        r.outcome = busy ? RxOutcome::TxBusy
                         : from_decode(phy::decode_outcome(signal.rssi_dbm, signal.snr_db, rx_radio));
        out.push_back(r);
    }
    return out;
}

std::vector<RxOutcome> resolve_collisions(std::span<const Contender> frames, double capture_threshold_db) {
    std::vector<RxOutcome> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.outcome);
    if (frames.size() < 2) return out;

    std::size_t strongest = 0;
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (frames[i].rssi_dbm > frames[strongest].rssi_dbm) strongest = i;
    bool captured = true;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (i != strongest && frames[strongest].rssi_dbm - frames[i].rssi_dbm < capture_threshold_db)
            captured = false;

    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (out[i] != RxOutcome::Decoded) continue;
        if (i == strongest && captured) continue;
        out[i] = RxOutcome::Collided;
    }
    return out;
}

namespace {

enum class EventKind { AppEmit, TxStart, TxEnd, RebroadcastFire };

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::AppEmit:
            return "APP_EMIT";
        case EventKind::TxStart:
            return "TX_START";
        case EventKind::TxEnd:
            return "TX_END";
        case EventKind::RebroadcastFire:
            return "REBROADCAST_FIRE";
    }
    return "UNKNOWN";
}

struct Event {
    SimTime time = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::AppEmit;
    std::size_t node = 0;
    std::size_t app = 0;       // AppEmit
    std::uint64_t frame = 0;   // TxEnd
    std::optional<mesh::MeshPacket> packet;
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

struct Frame {
    std::uint64_t index = 0;
    std::size_t transmitter = 0;
    mesh::MeshPacket packet;
    SimTime start = 0;
    SimTime end = 0;
    std::vector<ReceptionRecord> candidates;  // ordered by receiver index, transmitter skipped

    const ReceptionRecord& at(std::size_t rx) const { return candidates[rx < transmitter ? rx : rx - 1]; }
};

struct Interval {
    SimTime start = 0;
    SimTime end = 0;
};

struct NodeRuntime {
    bool tx_active = false;
    bool tx_reserved = false;
    std::deque<mesh::MeshPacket> pending;
    std::deque<Interval> tx_history;
    SimTime airtime = 0;
    mesh::ContentionParams contention;
};

class Simulator {
   public:
    Simulator(const Scenario& scenario, const RunOptions& options)
        : scenario_(scenario), options_(options), rng_(scenario.seed), links_(scenario) {
        const SimTime ttl = seconds_to_sim(scenario.dedup_ttl_s);
        for (const auto& n : scenario.nodes) {
            states_.emplace_back(n.id, n.role, scenario.seed, mesh::DedupCache(ttl, scenario.dedup_capacity));
            NodeRuntime rt;
            rt.contention = scenario.contention;
            if (rt.contention.slot_time == 0) rt.contention.slot_time = mesh::slot_time_for(n.radio);
            runtime_.push_back(std::move(rt));
            max_airtime_ = std::max(max_airtime_, phy::time_on_air_ns(phy::kMaxPhyPayload, n.radio));
            report_.originated[n.id] = 0;
            report_.app_deliveries[n.id] = 0;
            report_.node_transmissions[n.id] = 0;
        }
        duration_ = seconds_to_sim(scenario.duration_s);
    }

    SimReport run() {
        for (std::size_t i = 0; i < scenario_.nodes.size(); ++i) {
            const auto& apps = scenario_.nodes[i].apps;
            for (std::size_t k = 0; k < apps.size(); ++k)
                for (SimTime t : telemetry::emission_times(apps[k], duration_))
                    push(Event{t, 0, EventKind::AppEmit, i, k, 0, std::nullopt});
        }
        while (!queue_.empty()) {
            Event ev = queue_.top();
            queue_.pop();
            now_ = ev.time;
            switch (ev.kind) {
                case EventKind::AppEmit:
                    on_app_emit(ev);
                    break;
                case EventKind::TxStart:
                    on_tx_start(ev);
                    break;
                case EventKind::TxEnd:
                    on_tx_end(ev);
                    break;
                case EventKind::RebroadcastFire:
                    trace(ev.kind, ev.node, *ev.packet, "");
                    request_tx(ev.node, std::move(*ev.packet));
                    break;
            }
        }
        report_.end_time = now_;
        for (std::size_t i = 0; i < scenario_.nodes.size(); ++i) {
            const double busy = static_cast<double>(runtime_[i].airtime) / static_cast<double>(duration_);
            report_.airtime_busy_fraction[scenario_.nodes[i].id] = std::min(1.0, busy);
        }
        return std::move(report_);
    }

   private:
    void push(Event ev) {
        ev.seq = next_seq_++;
        queue_.push(std::move(ev));
    }

    const std::string& name(std::size_t node) const { return scenario_.nodes[node].name; }

    std::string name_of(NodeId id) const {
        const auto* n = scenario_.find(id);
        return n ? n->name : std::to_string(id.value);
    }

    void trace(EventKind kind, std::size_t node, const mesh::MeshPacket& p, const std::string& extra) {
        if (!options_.trace) return;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.9f %s node=%s origin=%s id=%08x hop=%d port=%s", sim_to_seconds(now_),
                      std::string(to_string(kind)).c_str(), name(node).c_str(), name_of(p.origin).c_str(),
                      p.packet_id, p.hop_limit, std::string(to_string(p.port)).c_str());
        report_.trace.push_back(std::string(buf) + extra);
    }

    std::vector<std::uint8_t> make_payload(std::size_t node, const telemetry::AppSchedule& app) const {
        const double t_s = sim_to_seconds(now_);
        switch (app.source) {
            case telemetry::PayloadSource::GnssTracker: {
                const auto pos = links_.position(node, t_s);
                const auto fix_time = static_cast<std::uint32_t>(scenario_.epoch_s + now_ / kNanosPerSecond);
                return telemetry::encode_position(pos.lat, pos.lon, pos.alt, fix_time);
            }
            case telemetry::PayloadSource::IrradianceSensor: {
                const int raw = telemetry::irradiance_source(t_s, scenario_.daylight);
                return telemetry::encode_irradiance(telemetry::sample_from_adc(raw, scenario_.irradiance));
            }
            case telemetry::PayloadSource::TextFixed:
                return {app.text.begin(), app.text.end()};
        }
        return {};
    }

    void on_app_emit(const Event& ev) {
        const auto& spec = scenario_.nodes[ev.node];
        const auto& app = spec.apps[ev.app];
        auto packet = mesh::originate(states_[ev.node], app.port, make_payload(ev.node, app),
                                      spec.radio.hop_limit, now_);
        ++report_.originated[spec.id];
        trace(EventKind::AppEmit, ev.node, packet, "");
        request_tx(ev.node, std::move(packet));
    }

    void request_tx(std::size_t node, mesh::MeshPacket packet) {
        auto& rt = runtime_[node];
        if (rt.tx_active || rt.tx_reserved) {
            rt.pending.push_back(std::move(packet));
            return;
        }
        rt.tx_reserved = true;
        push(Event{now_, 0, EventKind::TxStart, node, 0, 0, std::move(packet)});
    }

    void on_tx_start(Event& ev) {
        auto& rt = runtime_[ev.node];
        rt.tx_reserved = false;
        rt.tx_active = true;

        Frame frame;
        frame.index = next_frame_++;
        frame.transmitter = ev.node;
        frame.packet = std::move(*ev.packet);
        frame.start = now_;
        frame.end = now_ + phy::time_on_air_ns(frame.packet.air_length(), scenario_.nodes[ev.node].radio);
        rt.tx_history.push_back({frame.start, frame.end});

        std::vector<bool> transmitting(scenario_.nodes.size(), false);
        for (std::size_t i = 0; i < runtime_.size(); ++i) transmitting[i] = i != ev.node && runtime_[i].tx_active;
        frame.candidates = propagate(Transmission{frame.index, ev.node, &frame.packet, frame.start, frame.end},
                                     links_, transmitting, scenario_.shadowing, rng_);

        char extra[64];
        std::snprintf(extra, sizeof extra, " frame=%llu airtime=%.6f",
                      static_cast<unsigned long long>(frame.index), sim_to_seconds(frame.end - frame.start));
        trace(EventKind::TxStart, ev.node, frame.packet, extra);

        push(Event{frame.end, 0, EventKind::TxEnd, ev.node, 0, frame.index, std::nullopt});
        frames_.push_back(std::move(frame));
    }

    bool transmitted_during(std::size_t node, SimTime start, SimTime end) const {
        for (const auto& iv : runtime_[node].tx_history)
            if (iv.start < end && iv.end > start) return true;
        return false;
    }

    const Frame& frame_by_index(std::uint64_t index) const {
        for (const auto& f : frames_)
            if (f.index == index) return f;
        throw std::logic_error("frame evicted before it ended");
    }

    void on_tx_end(const Event& ev) {
        auto& rt = runtime_[ev.node];
        const Frame& frame = frame_by_index(ev.frame);
        rt.tx_active = false;
        rt.airtime += frame.end - frame.start;
        ++report_.transmissions;
        ++report_.node_transmissions[scenario_.nodes[ev.node].id];
        trace(EventKind::TxEnd, ev.node, frame.packet, "");

        for (std::size_t rx = 0; rx < scenario_.nodes.size(); ++rx) {
            if (rx == frame.transmitter) continue;
            ReceptionRecord rec = frame.at(rx);
            if (rec.outcome == RxOutcome::Decoded && transmitted_during(rx, frame.start, frame.end))
                rec.outcome = RxOutcome::TxBusy;
            if (rec.outcome == RxOutcome::Decoded) rec.outcome = arbitrate(frame, rx, rec);
            if (rec.outcome == RxOutcome::Collided) ++report_.collisions;
            ++report_.outcome_counts[rec.outcome];
            report_.receptions.push_back(rec);
            if (rec.outcome == RxOutcome::Decoded) deliver(rx, frame.packet, rec);
        }

        prune();
        if (!rt.pending.empty()) {
            auto next = std::move(rt.pending.front());
            rt.pending.pop_front();
            rt.tx_reserved = true;
            push(Event{now_, 0, EventKind::TxStart, ev.node, 0, 0, std::move(next)});
        }
    }

    RxOutcome arbitrate(const Frame& frame, std::size_t rx, const ReceptionRecord& rec) const {
        std::vector<Contender> contenders{{rec.rssi_dbm, rec.outcome}};
        for (const auto& other : frames_) {
            if (other.index == frame.index || other.transmitter == rx) continue;
            if (other.start < frame.end && other.end > frame.start)
                contenders.push_back({other.at(rx).rssi_dbm, RxOutcome::Decoded});
        }
        return resolve_collisions(contenders, scenario_.capture_threshold_db).front();
    }

    void deliver(std::size_t rx, const mesh::MeshPacket& packet, const ReceptionRecord& rec) {
        const mesh::RxMeta meta{rec.rssi_dbm, rec.snr_db};
        const auto actions = mesh::on_receive(states_[rx], packet, meta, now_, rng_, runtime_[rx].contention);
        for (const auto& a : actions) {
            switch (a.kind) {
                case mesh::ActionKind::DropDuplicate:
                    ++report_.duplicates_suppressed;
                    trace(EventKind::TxEnd, rx, packet, " action=DROP_DUPLICATE");
                    break;
                case mesh::ActionKind::DeliverToApp:
                    ++report_.app_deliveries[scenario_.nodes[rx].id];
                    ++report_.hop_count_histogram[packet.hop_start - packet.hop_limit + 1];
                    trace(EventKind::TxEnd, rx, packet, " action=DELIVER_TO_APP");
                    break;
                case mesh::ActionKind::EmitUplink:
                    ++report_.delivered_to_gateway[packet.origin];
                    report_.gateway_deliveries.push_back({now_, scenario_.nodes[rx].id, packet, meta});
                    break;
                case mesh::ActionKind::ScheduleRebroadcast:
                    push(Event{now_ + a.delay, 0, EventKind::RebroadcastFire, rx, 0, 0, a.packet});
                    break;
            }
        }
    }

    void prune() {
        // A frame ending now started no earlier than now - max_airtime, so
        // anything that ended before that can no longer overlap.
        const SimTime horizon = now_ - max_airtime_;
        std::erase_if(frames_, [&](const Frame& f) { return f.end < horizon; });
        for (auto& rt : runtime_)
            while (!rt.tx_history.empty() && rt.tx_history.front().end < horizon) rt.tx_history.pop_front();
    }

    const Scenario& scenario_;
    RunOptions options_;
    mesh::Rng rng_;
    LinkTable links_;
    std::vector<mesh::NodeState> states_;
    std::vector<NodeRuntime> runtime_;
    std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
    std::deque<Frame> frames_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_frame_ = 0;
    SimTime now_ = 0;
    SimTime duration_ = 0;
    SimTime max_airtime_ = 0;
    SimReport report_;
};

}  // namespace

SimReport run(const Scenario& scenario, const RunOptions& options) {
    if (auto v = scenario.violations(); !v.empty()) throw ValidationError(std::move(v));
    return Simulator(scenario, options).run();
}

}  // namespace meshsim::sim
