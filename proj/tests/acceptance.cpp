// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "meshsim/cli.hpp"

using namespace meshsim;
using Json = nlohmann::json;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + ("failed: " + what);
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

// Textbook airtime, written out independently of the library.
struct RefAirtime {
    std::int64_t ns;
    double seconds;
};

RefAirtime reference_airtime(int pl, int sf, int cr, int preamble, long bw) {
    const double t_sym = std::pow(2.0, sf) / static_cast<double>(bw);
    const int de = t_sym >= 0.016 ? 1 : 0;
    const int ih = 0, crc = 1;
    const double num = 8.0 * pl - 4.0 * sf + 28 + 16 * crc - 20 * ih;
    const double n_payload = 8 + std::max(std::ceil(num / (4.0 * (sf - 2 * de))), 0.0) * (cr + 4);
    // (preamble + 4.25 + N) symbols = (4 (preamble + N) + 17) quarter symbols of 2^SF / (4 BW) seconds.
    // The exact rational is rounded once to get the nearest double.
    const auto quarters = static_cast<std::int64_t>(4 * (preamble + n_payload) + 17);
    const std::int64_t ns = quarters * (std::int64_t{1} << sf) * 1'000'000'000 / (4 * bw);
    const double seconds = static_cast<double>(quarters << sf) / static_cast<double>(4 * bw);
    return {ns, seconds};
}

Verdict criterion1() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    long mismatches = 0, cases = 0;
    for (int pl = 1; pl <= 255; ++pl)
        for (int sf = 7; sf <= 12; ++sf)
            for (int cr = 1; cr <= 4; ++cr) {
                phy::RadioConfig cfg;
                cfg.spreading_factor = sf;
                cfg.coding_rate = cr;
                cfg.bandwidth_hz = 125'000;
                const auto ref = reference_airtime(pl, sf, cr, cfg.preamble_symbols, 125'000);
                ++cases;
                if (phy::time_on_air_ns(pl, cfg) != ref.ns || phy::time_on_air(pl, cfg) != ref.seconds) ++mismatches;
            }
    phy::RadioConfig longfast;
    const double spot = phy::time_on_air(20, longfast);
    const double t = elapsed_s(t0);
    v.require(mismatches == 0, fmt("%ld of %ld airtimes differ from the reference", mismatches, cases));
    v.require(phy::time_on_air_ns(20, longfast) == 872'448'000, "20 B SF11 CR4/5 preamble 16 != 872.448 ms");
    v.require(t < 5.0, "runtime >= 5 s");
    v.note(fmt("%ld cases exact, spot %.3f ms, %.3f s", cases, spot * 1e3, t));
    return v;
}

Verdict criterion2() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string csv = std::string(MESHSIM_DATA_DIR) + "/route_rssi.csv";
    const char* argv[] = {"meshsim", "--calibrate", csv.c_str()};
    std::ostringstream out, err;
    const int code = cli::run_main(3, argv, out, err);
    v.require(code == 0, "--calibrate exited " + std::to_string(code) + ": " + err.str());
    double exponent = std::nan("");
    for (const auto& line : split_lines(out.str()))
        if (line.starts_with("NLOS_BUILT exponent=")) exponent = std::stod(line.substr(20));
    v.require(std::isfinite(exponent), "no NLOS_BUILT exponent in --calibrate output");
    if (!v.pass) return v;

    phy::EnvironmentClass env = phy::default_environment(phy::EnvKind::NlosBuilt);
    env.path_loss_exponent = exponent;
    const phy::RadioConfig radio;
    struct Row {
        double d, lo, hi;
    };
    for (const Row& r : {Row{1090, -133, -110}, Row{1600, -127, -124}, Row{2050, -125, -125}}) {
        const double pred = phy::received_signal(radio, phy::path_loss_db(r.d, env, 0.0).db).rssi_dbm;
        const double outside = pred < r.lo ? r.lo - pred : pred > r.hi ? pred - r.hi : 0.0;
        const double to_endpoint = std::min(std::abs(pred - r.lo), std::abs(pred - r.hi));
        v.require(outside <= 4.0, fmt("%.0f m predicted %.2f dBm is %.2f dB outside [%.0f, %.0f]", r.d, pred,
                                      outside, r.lo, r.hi));
        v.note(fmt("%.0f m -> %.2f dBm (outside range %.2f dB, nearest endpoint %.2f dB)", r.d, pred, outside,
                   to_endpoint));
    }
    const double t = elapsed_s(t0);
    v.require(t < 1.0, "runtime >= 1 s");
    v.note(fmt("n=%.4f, %.3f s", exponent, t));
    return v;
}

Verdict criterion3() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const auto scenario = cli::load_scenario("cumbre");
    const auto report = sim::run(scenario);
    const auto* gw = scenario.find("Nix");
    const auto env = scenario.environment(phy::EnvKind::QuasiLosElevated);
    v.require(scenario.shadowing && env.shadowing_sigma_db <= 2.0, "quasi-LOS shadowing sigma > 2 dB");

    std::size_t emissions = 0, decoded = 0;
    double rssi_sum = 0.0, summit_distance = 0.0;
    for (const auto& r : report.receptions) {
        if (r.receiver != gw->id || r.transmitter != r.origin || r.distance_m < 2400) continue;
        ++emissions;
        rssi_sum += r.rssi_dbm;
        summit_distance = r.distance_m;
        if (r.outcome == sim::RxOutcome::Decoded) ++decoded;
    }
    v.require(emissions > 0, "no summit emissions");
    if (!v.pass) return v;
    const double fraction = static_cast<double>(decoded) / static_cast<double>(emissions);
    const double mean_rssi = rssi_sum / static_cast<double>(emissions);
    const auto predicted = phy::received_signal(phy::RadioConfig{}, phy::path_loss_db(summit_distance, env, 0.0).db);
    const double t = elapsed_s(t0);
    v.require(std::abs(predicted.rssi_dbm - -110.0) <= 3.0, fmt("calibrated RSSI %.2f", predicted.rssi_dbm));
    v.require(std::abs(mean_rssi - -110.0) <= 3.0, fmt("mean summit RSSI %.2f", mean_rssi));
    v.require(fraction >= 0.95, fmt("decoded fraction %.3f", fraction));
    v.require(predicted.snr_db > 0.0, fmt("predicted SNR %.2f", predicted.snr_db));
    v.require(t < 5.0, "runtime >= 5 s");
    v.note(fmt("%zu/%zu summit emissions decoded, mean RSSI %.2f dBm, predicted %.2f dBm / SNR %+.2f dB at "
               "%.1f m, %.3f s",
               decoded, emissions, mean_rssi, predicted.rssi_dbm, predicted.snr_db, summit_distance, t));
    return v;
}

Verdict criterion4() {
    Verdict v;
    v.require(phy::snr_raw_decode(11) == 2.75, "decode(11) != 2.75");
    int bad = 0;
    for (int raw = -128; raw <= 127; ++raw)
        if (phy::snr_raw_encode(phy::snr_raw_decode(raw)) != raw) ++bad;
    v.require(bad == 0, fmt("%d raw values do not round trip", bad));
    v.note(fmt("decode(11) = %+.2f dB, 256 raw values round trip", phy::snr_raw_decode(11)));
    return v;
}

// k4: one flood from a; b, c, d hear it together and each relays once after
// slot s_i. Two relays overlap iff their starts differ by less than the
// airtime. A relay frame overlapping no other relay frame reaches the three
// other nodes, all of which already hold the packet.
struct K4Prediction {
    int transmissions = 0;
    int duplicates = 0;
    std::array<int, 3> deliveries{};
};

K4Prediction k4_oracle(const std::array<int, 3>& slots, std::int64_t slot_ns, std::int64_t airtime_ns) {
    K4Prediction p;
    p.transmissions = 1 + 3;
    p.deliveries = {1, 1, 1};
    for (int i = 0; i < 3; ++i) {
        bool clean = true;
        for (int k = 0; k < 3; ++k)
            if (k != i && std::llabs((slots[i] - slots[k]) * slot_ns) < airtime_ns) clean = false;
        if (clean) p.duplicates += 3;
    }
    return p;
}

struct K4Run {
    sim::SimReport report;
    std::array<int, 3> slots{};
    bool slots_on_grid = true;
};

K4Run run_k4(sim::Scenario scenario, std::uint64_t seed, std::int64_t slot_ns) {
    scenario.seed = seed;
    K4Run out;
    out.report = sim::run(scenario, {true});
    std::int64_t origin_end = -1;
    std::map<std::string, std::int64_t> starts;
    for (const auto& line : out.report.trace) {
        std::istringstream in(line);
        double t;
        std::string kind, node;
        in >> t >> kind >> node;
        const auto ns = static_cast<std::int64_t>(std::llround(t * 1e9));
        if (kind == "TX_END" && node == "node=a" && line.find("action=") == std::string::npos) origin_end = ns;
        if (kind == "TX_START" && node != "node=a") starts[node.substr(5)] = ns;
    }
    const char* names[] = {"b", "c", "d"};
    for (int i = 0; i < 3; ++i) {
        const auto it = starts.find(names[i]);
        if (it == starts.end() || origin_end < 0 || (it->second - origin_end) % slot_ns != 0) {
            out.slots_on_grid = false;
            continue;
        }
        out.slots[i] = static_cast<int>((it->second - origin_end) / slot_ns);
    }
    return out;
}

Verdict criterion5() {
    Verdict v;
    const auto scenario = cli::load_scenario("k4");
    const phy::RadioConfig& radio = scenario.nodes[0].radio;
    const std::int64_t airtime = phy::time_on_air_ns(mesh::kHeaderBytes + 4, radio);
    const std::int64_t slot = scenario.contention.slot_time;

    // Every a->relay link is strong enough for the widest window.
    int windows[3];
    for (int i = 0; i < 3; ++i) {
        const auto& n = scenario.nodes[i + 1];
        const double d = sim::link_distance(scenario.nodes[0].position, n.position, false);
        const double snr =
            phy::received_signal(radio, phy::path_loss_db(d, scenario.environment(phy::EnvKind::LosOpen), 0).db)
                .snr_db;
        v.require(snr >= scenario.contention.snr_max_db, "relay SNR below the window ceiling");
        const bool infra = n.role == Role::Router || n.role == Role::Gateway;
        windows[i] = infra ? scenario.contention.router_cw_max : scenario.contention.client_cw_max;
    }

    // Enumerate every slot draw.
    auto enumerate = [&](std::int64_t slot_ns, int& tuples, int& ok, double& p_dup2) {
        tuples = ok = 0;
        p_dup2 = 0.0;
        const double weight = 1.0 / ((windows[0] + 1) * (windows[1] + 1) * (windows[2] + 1));
        for (int b = 0; b <= windows[0]; ++b)
            for (int c = 0; c <= windows[1]; ++c)
                for (int d = 0; d <= windows[2]; ++d) {
                    const auto p = k4_oracle({b, c, d}, slot_ns, airtime);
                    ++tuples;
                    if (p.transmissions <= 4 && p.deliveries == std::array{1, 1, 1}) ++ok;
                    if (p.duplicates >= 2) p_dup2 += weight;
                }
    };
    int tuples = 0, ok = 0;
    double p_dup2 = 0.0, p_dup2_default = 0.0;
    enumerate(slot, tuples, ok, p_dup2);
    v.require(ok == tuples, fmt("exactly-once fails on %d of %d slot draws", tuples - ok, tuples));
    int t2, o2;
    enumerate(mesh::slot_time_for(radio), t2, o2, p_dup2_default);

    // The engine matches the oracle on its own draw, for the scenario seed and a sweep.
    int disagreements = 0;
    std::map<std::string, NodeId> ids;
    for (const auto& n : scenario.nodes) ids[n.name] = n.id;
    K4Run main_run;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const std::uint64_t s = seed == 1 ? scenario.seed : seed;
        const auto run = run_k4(scenario, s, slot);
        const auto p = k4_oracle(run.slots, slot, airtime);
        const auto& r = run.report;
        const bool agree = run.slots_on_grid && r.transmissions == static_cast<std::uint64_t>(p.transmissions) &&
                           r.duplicates_suppressed == static_cast<std::uint64_t>(p.duplicates) &&
                           r.app_deliveries.at(ids["b"]) == 1 && r.app_deliveries.at(ids["c"]) == 1 &&
                           r.app_deliveries.at(ids["d"]) == 1 && r.app_deliveries.at(ids["a"]) == 0;
        if (!agree) ++disagreements;
        if (seed == 1) main_run = run;
    }
    v.require(disagreements == 0, fmt("engine and oracle disagree on %d seeds", disagreements));

    const auto& r = main_run.report;
    for (const char* n : {"b", "c", "d"})
        v.require(r.app_deliveries.at(ids[n]) == 1, std::string("node ") + n + " deliveries != 1");
    v.require(r.transmissions <= 4, fmt("%llu transmissions", static_cast<unsigned long long>(r.transmissions)));
    v.require(r.duplicates_suppressed >= 2,
              fmt("duplicates_suppressed %llu", static_cast<unsigned long long>(r.duplicates_suppressed)));
    v.note(fmt("seed %llu: slots b=%d c=%d d=%d, %llu transmissions, %llu duplicates suppressed; oracle over %d "
               "draws: exactly-once always, P(duplicates>=2) = %.4f at %.3f s slots (%.4f at the default %.3f s)",
               static_cast<unsigned long long>(scenario.seed), main_run.slots[0], main_run.slots[1],
               main_run.slots[2], static_cast<unsigned long long>(r.transmissions),
               static_cast<unsigned long long>(r.duplicates_suppressed), tuples, p_dup2, sim_to_seconds(slot),
               p_dup2_default, sim_to_seconds(mesh::slot_time_for(radio))));
    return v;
}

Verdict criterion6() {
    Verdict v;
    Json doc = cli::load_scenario_document("line4");
    doc["nodes"].push_back({{"id", 5}, {"name", "n4"}, {"role", "ROUTER"}, {"position", {{"x_m", 2000}, {"y_m", 0}}}});
    for (const char* far : {"n0", "n1", "n2"}) doc["links"].push_back({{"a", far}, {"b", "n4"}, {"blocked", true}});
    int failures = 0;
    std::uint64_t n3_total = 0, n4_total = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        doc["seed"] = seed;
        const auto scenario = cli::parse_scenario(doc);
        const auto report = sim::run(scenario);
        const auto n3 = report.app_deliveries.at(NodeId{4});
        const auto n4 = report.app_deliveries.at(NodeId{5});
        n3_total += n3;
        n4_total += n4;
        if (n3 != 1 || n4 != 0 || report.originated.at(NodeId{1}) != 1) ++failures;
    }
    v.require(failures == 0, fmt("%d of 50 seeds violate the hop bound", failures));
    v.note(fmt("50 seeds: 3-hop node delivered %llu, 4-hop node delivered %llu",
               static_cast<unsigned long long>(n3_total), static_cast<unsigned long long>(n4_total)));
    return v;
}

Verdict criterion7() {
    Verdict v;
    const auto params = mesh::ContentionParams::for_radio(phy::RadioConfig{});
    const std::array<double, 4> snrs{-20.0, -10.0, 0.0, 10.0};
    std::map<Role, std::array<double, 4>> means;
    for (Role role : {Role::Client, Role::Router, Role::Gateway, Role::Tracker}) {
        for (std::size_t k = 0; k < snrs.size(); ++k) {
            mesh::Rng rng(2024);  // same stream in every cell
            double sum = 0.0;
            for (int i = 0; i < 100'000; ++i)
                sum += sim_to_seconds(mesh::backoff_delay(snrs[k], role, rng, params));
            means[role][k] = sum / 100'000;
        }
        for (std::size_t k = 1; k < snrs.size(); ++k)
            v.require(means[role][k] >= means[role][k - 1],
                      fmt("%s mean decreases from %+.0f to %+.0f dB", std::string(to_string(role)).c_str(),
                          snrs[k - 1], snrs[k]));
    }
    for (std::size_t k = 0; k < snrs.size(); ++k)
        v.require(means[Role::Router][k] <= means[Role::Client][k], fmt("ROUTER > CLIENT at %+.0f dB", snrs[k]));
    v.note(fmt("ROUTER %.3f/%.3f/%.3f/%.3f s, CLIENT %.3f/%.3f/%.3f/%.3f s", means[Role::Router][0],
               means[Role::Router][1], means[Role::Router][2], means[Role::Router][3], means[Role::Client][0],
               means[Role::Client][1], means[Role::Client][2], means[Role::Client][3]));
    return v;
}

Verdict criterion8() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    Json doc = cli::load_scenario_document("campus");
    doc["shadowing"] = false;
    const auto scenario = cli::parse_scenario(doc);
    const auto report = sim::run(scenario);
    const auto artifacts = cli::render(scenario, report);
    const NodeId node1 = scenario.find("node1")->id;
    const auto sent = report.originated.at(node1);
    const auto got = report.delivered_to_gateway.count(node1) ? report.delivered_to_gateway.at(node1) : 0;
    std::size_t irradiance = 0, mismatched = 0, lines = 0;
    for (const auto& line : split_lines(artifacts.series_lp)) {
        ++lines;
        try {
            const auto rec = gateway::parse_line_protocol(line);
            if (gateway::serialize_line_protocol(rec) != line || gateway::parse_line_protocol(line) != rec)
                ++mismatched;
            if (rec.measurement == "irradiance") ++irradiance;
        } catch (const gateway::LineProtocolError&) {
            ++mismatched;
        }
    }
    const double t = elapsed_s(t0);
    v.require(sent > 0 && got == sent, fmt("PDR node1 %llu/%llu", static_cast<unsigned long long>(got),
                                           static_cast<unsigned long long>(sent)));
    v.require(irradiance == 86400 / 300 + 1, fmt("%zu irradiance records", irradiance));
    v.require(mismatched == 0, fmt("%zu of %zu records fail the round trip", mismatched, lines));
    v.require(t < 60.0, "runtime >= 60 s");
    v.note(fmt("PDR %llu/%llu, %zu irradiance records, %zu lines round trip, %.2f s",
               static_cast<unsigned long long>(got), static_cast<unsigned long long>(sent), irradiance, lines, t));
    return v;
}

Verdict criterion9() {
    Verdict v;
    const auto dir = std::filesystem::temp_directory_path() / "meshsim-acceptance";
    std::size_t compared = 0;
    for (const auto& name : cli::builtin_names()) {
        std::array<std::map<std::string, std::string>, 2> files;
        for (int k = 0; k < 2; ++k) {
            const auto out = dir / name / std::to_string(k);
            std::filesystem::remove_all(out);
            const std::string out_s = out.string();
            const char* argv[] = {"meshsim", "--scenario", name.c_str(), "--emit", "summary,map_csv,series,uplinks",
                                  "--out-dir", out_s.c_str()};
            std::ostringstream o, e;
            const int code = cli::run_main(7, argv, o, e);
            v.require(code == 0, name + " exited " + std::to_string(code) + ": " + e.str());
            for (const char* f : {"summary.json", "map.csv", "series.lp", "uplinks.ndjson"})
                files[k][f] = slurp(out / f);
        }
        for (const auto& [f, content] : files[0]) {
            ++compared;
            v.require(content == files[1][f], name + "/" + f + " differs between runs");
        }
    }
    std::filesystem::remove_all(dir);
    v.note(fmt("%zu artifacts byte-identical across %zu built-ins", compared, cli::builtin_names().size()));
    return v;
}

Verdict criterion10() {
    Verdict v;
    using gateway::RssiBucket;
    v.require(gateway::classify_rssi(-85) == RssiBucket::Green, "-85 not GREEN");
    v.require(gateway::classify_rssi(-100) == RssiBucket::Orange, "-100 not ORANGE");
    v.require(gateway::classify_rssi(-120) == RssiBucket::Red, "-120 not RED");
    v.require(gateway::classify_rssi(-90) == RssiBucket::Orange, "-90 not ORANGE");
    v.require(gateway::classify_rssi(-110) == RssiBucket::Orange, "-110 not ORANGE");
    v.note("-85 GREEN, -90/-100/-110 ORANGE, -120 RED");
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"airtime matches the reference formula", criterion1},
        {"measured RSSI ranges reproduced by the fitted NLOS exponent", criterion2},
        {"summit emissions decodable at the gateway", criterion3},
        {"raw SNR codec", criterion4},
        {"flood delivers exactly once on k4", criterion5},
        {"hop limit bounds delivery on a 5-node line", criterion6},
        {"backoff delay ordering", criterion7},
        {"24 h campus pipeline integrity", criterion8},
        {"byte-identical reruns", criterion9},
        {"RSSI bucket thresholds", criterion10},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        if (!v.pass) ++failed;
        std::printf("%s criterion %zu: %s (%s)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    v.detail.c_str());
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
