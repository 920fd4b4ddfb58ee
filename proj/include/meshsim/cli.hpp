#pragma once

// Scenario files, built-in scenarios, run artifacts and the command line.

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "meshsim/engine.hpp"
#include "meshsim/gateway.hpp"

namespace meshsim::cli {

using Json = nlohmann::json;

const std::vector<std::string>& builtin_names();
/// JSON text of a built-in scenario; throws std::out_of_range for unknown names.
std::string_view builtin_source(std::string_view name);

/// Throws sim::ValidationError listing every violation with its field path.
sim::Scenario parse_scenario(const Json& doc);
sim::Scenario parse_scenario_text(std::string_view text);
/// A built-in name or a path to a JSON file.
Json load_scenario_document(const std::string& name_or_path);
sim::Scenario load_scenario(const std::string& name_or_path);

struct CalibrationRow {
    double distance_m = 0.0;
    double rssi_lo_dbm = 0.0;
    double rssi_hi_dbm = 0.0;
    phy::EnvKind env = phy::EnvKind::NlosBuilt;

    double midpoint() const { return 0.5 * (rssi_lo_dbm + rssi_hi_dbm); }
};

/// Columns: distance_m,rssi_lo_dbm[,rssi_hi_dbm[,env]]. A header line and
/// lines starting with '#' are skipped. Throws std::invalid_argument.
std::vector<CalibrationRow> parse_measurements_csv(std::string_view text);

struct FittedClass {
    phy::EnvKind env = phy::EnvKind::NlosBuilt;
    phy::Calibration calibration;
    std::size_t rows = 0;
};

/// One exponent per environment class, fitted on range midpoints. A class
/// measured at a single distance is solved exactly from that point.
std::vector<FittedClass> calibrate(std::span<const CalibrationRow> rows, const phy::RadioConfig& cfg = {});

struct Artifacts {
    std::string summary_json;
    std::string summary_text;
    std::string report_json;
    std::string trace_log;
    std::string map_csv;
    std::string map_kml;
    std::string uplinks_ndjson;
    std::string series_lp;
};

std::vector<gateway::UplinkMessage> uplinks(const sim::Scenario& scenario, const sim::SimReport& report);
Json summarize(const sim::Scenario& scenario, const sim::SimReport& report);
std::string summary_text(const Json& summary);
Artifacts render(const sim::Scenario& scenario, const sim::SimReport& report);

/// Full command line. Exit codes: 0 ok, 1 runtime failure, 2 usage or validation error.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace meshsim::cli
