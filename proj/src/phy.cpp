#include "meshsim/phy.hpp"

#include "meshsim/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>

namespace meshsim::phy {

namespace {

constexpr double kSpeedOfLight = 299'792'458.0;
constexpr double kThermalNoiseDbmPerHz = -174.0;

// SX126x demodulator SNR limits, SF7..SF12.
constexpr std::array<double, 6> kSnrFloorDb{-7.5, -10.0, -12.5, -15.0, -17.5, -20.0};

std::string join_error(const std::vector<std::string>& errors) {
    std::string out;
    for (const auto& e : errors) {
        if (!out.empty()) out += "; ";
        out += e;
    }
    return out;
}

}  // namespace

std::vector<std::string> RadioConfig::violations() const {
    std::vector<std::string> out;
    if (spreading_factor < 7 || spreading_factor > 12)
        out.push_back("spreading_factor must be in [7, 12]");
    if (coding_rate < 1 || coding_rate > 4) out.push_back("coding_rate must be in [1, 4]");
    if (hop_limit < 0 || hop_limit > 7) out.push_back("hop_limit must be in [0, 7]");
    if (bandwidth_hz <= 0) out.push_back("bandwidth_hz must be positive");
    if (frequency_hz <= 0) out.push_back("frequency_hz must be positive");
    if (preamble_symbols < 6 || preamble_symbols > 65535)
        out.push_back("preamble_symbols must be in [6, 65535]");
    if (!std::isfinite(tx_power_dbm)) out.push_back("tx_power_dbm must be finite");
    if (!std::isfinite(noise_figure_db) || noise_figure_db < 0)
        out.push_back("noise_figure_db must be finite and >= 0");
    if (!std::isfinite(antenna_gain_tx_dbi) || !std::isfinite(antenna_gain_rx_dbi))
        out.push_back("antenna gains must be finite");
    return out;
}

void RadioConfig::validate() const {
    if (auto errors = violations(); !errors.empty())
        throw std::invalid_argument("invalid radio config: " + join_error(errors));
}

std::string_view to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::LosOpen:
            return "LOS_OPEN";
        case EnvKind::NlosBuilt:
            return "NLOS_BUILT";
        case EnvKind::QuasiLosElevated:
            return "QUASI_LOS_ELEVATED";
    }
    return "UNKNOWN";
}

std::optional<EnvKind> env_from_string(std::string_view name) {
    for (auto kind : {EnvKind::LosOpen, EnvKind::NlosBuilt, EnvKind::QuasiLosElevated})
        if (to_string(kind) == name) return kind;
    return std::nullopt;
}

std::vector<std::string> EnvironmentClass::violations() const {
    std::vector<std::string> out;
    if (!(path_loss_exponent >= 2.0)) out.push_back("path_loss_exponent must be >= 2.0");
    if (!(reference_loss_db > 0.0)) out.push_back("reference_loss_db must be > 0");
    if (!(shadowing_sigma_db >= 0.0)) out.push_back("shadowing_sigma_db must be >= 0");
    return out;
}

EnvironmentClass default_environment(EnvKind kind) {
    const double ref = free_space_loss_db(1.0, 915e6);
    switch (kind) {
        case EnvKind::LosOpen:
            return {kind, kLosOpenExponent, ref, 3.0};
        case EnvKind::NlosBuilt:
            return {kind, kNlosBuiltExponent, ref, 6.0};
        case EnvKind::QuasiLosElevated:
            return {kind, kQuasiLosExponent, ref, 2.0};
    }
    return {kind, 2.0, ref, 0.0};
}

double symbol_time(const RadioConfig& cfg) {
    return std::ldexp(1.0, cfg.spreading_factor) / static_cast<double>(cfg.bandwidth_hz);
}

bool low_data_rate_optimize(const RadioConfig& cfg) {
    // 2^SF / BW >= 16 ms, compared in integers.
    return (std::int64_t{1} << cfg.spreading_factor) * 1000 >= 16 * cfg.bandwidth_hz;
}

int payload_symbols(int payload_len, const RadioConfig& cfg) {
    if (payload_len < 1 || payload_len > kMaxPhyPayload)
        throw std::invalid_argument("payload length must be in [1, 255], got " +
                                    std::to_string(payload_len));
    const int sf = cfg.spreading_factor;
    const int de = low_data_rate_optimize(cfg) ? 1 : 0;
    const int ih = cfg.explicit_header ? 0 : 1;
    const int crc = cfg.crc_enabled ? 1 : 0;
    const int numerator = 8 * payload_len - 4 * sf + 28 + 16 * crc - 20 * ih;
    const int denominator = 4 * (sf - 2 * de);
    int blocks = 0;
    if (numerator > 0) blocks = (numerator + denominator - 1) / denominator;
    return 8 + blocks * (cfg.coding_rate + 4);
}

namespace {

// Airtime measured in quarter symbols: 4 * (preamble + 4.25 + payload symbols).
std::int64_t quarter_symbols(int payload_len, const RadioConfig& cfg) {
    return 4 * static_cast<std::int64_t>(cfg.preamble_symbols) + 17 +
           4 * static_cast<std::int64_t>(payload_symbols(payload_len, cfg));
}

}  // namespace

double time_on_air(int payload_len, const RadioConfig& cfg) {
    const auto q = quarter_symbols(payload_len, cfg);
    return static_cast<double>(q) * std::ldexp(1.0, cfg.spreading_factor) /
           (4.0 * static_cast<double>(cfg.bandwidth_hz));
}

std::int64_t time_on_air_ns(int payload_len, const RadioConfig& cfg) {
    const auto q = quarter_symbols(payload_len, cfg);
    const __int128 num = static_cast<__int128>(q) * (std::int64_t{1} << cfg.spreading_factor) *
                         kNanosPerSecond;
    const __int128 den = static_cast<__int128>(4) * cfg.bandwidth_hz;
    return static_cast<std::int64_t>((num + den - 1) / den);
}

double noise_floor_dbm(const RadioConfig& cfg) {
    return kThermalNoiseDbmPerHz + 10.0 * std::log10(static_cast<double>(cfg.bandwidth_hz)) +
           cfg.noise_figure_db;
}

double snr_floor_db(int spreading_factor) {
    if (spreading_factor < 7 || spreading_factor > 12)
        throw std::invalid_argument("spreading factor must be in [7, 12], got " +
                                    std::to_string(spreading_factor));
    return kSnrFloorDb[static_cast<std::size_t>(spreading_factor - 7)];
}

double sensitivity_dbm(const RadioConfig& cfg) {
    return noise_floor_dbm(cfg) + snr_floor_db(cfg.spreading_factor);
}

double free_space_loss_db(double distance_m, double frequency_hz) {
    return 20.0 * std::log10(4.0 * std::numbers::pi * distance_m * frequency_hz / kSpeedOfLight);
}

PathLoss path_loss_db(double distance_m, const EnvironmentClass& env, double shadow_draw_db) {
    PathLoss out;
    double d = distance_m;
    if (!(d >= 1.0)) {
        d = 1.0;
        out.clamped = true;
    }
    out.db = env.reference_loss_db + 10.0 * env.path_loss_exponent * std::log10(d) + shadow_draw_db;
    return out;
}

Signal received_signal(const RadioConfig& cfg, double path_loss_db) {
    Signal s;
    s.rssi_dbm = cfg.tx_power_dbm + cfg.antenna_gain_tx_dbi + cfg.antenna_gain_rx_dbi - path_loss_db;
    s.snr_db = s.rssi_dbm - noise_floor_dbm(cfg);
    return s;
}

std::string_view to_string(DecodeOutcome outcome) {
    switch (outcome) {
        case DecodeOutcome::Decoded:
            return "DECODED";
        case DecodeOutcome::BelowSensitivity:
            return "BELOW_SENSITIVITY";
        case DecodeOutcome::BelowSnrFloor:
            return "BELOW_SNR_FLOOR";
    }
    return "UNKNOWN";
}

DecodeOutcome decode_outcome(double rssi_dbm, double snr_db, const RadioConfig& cfg) {
    if (!(rssi_dbm >= sensitivity_dbm(cfg))) return DecodeOutcome::BelowSensitivity;
    if (!(snr_db >= snr_floor_db(cfg.spreading_factor))) return DecodeOutcome::BelowSnrFloor;
    return DecodeOutcome::Decoded;
}

int snr_raw_encode(double snr_db) {
    // std::lround rounds halfway cases away from zero.
    const long raw = std::lround(snr_db / kSnrRawStepDb);
    return static_cast<int>(std::clamp(raw, -128L, 127L));
}

double snr_raw_decode(int raw) { return raw * kSnrRawStepDb; }

Calibration calibrate_exponent(std::span<const Measurement> measurements, const RadioConfig& cfg,
                               double reference_loss_db) {
    std::set<double> distinct;
    for (const auto& m : measurements) distinct.insert(m.distance_m);
    if (distinct.size() < 2)
        throw InsufficientDataError("calibration needs at least 2 distinct distances, got " +
                                    std::to_string(distinct.size()));

    // rssi = eirp - ref - n * x with x = 10 log10(d): minimize sum (y - n x)^2
    // where y = eirp - ref - rssi.
    const double eirp = cfg.tx_power_dbm + cfg.antenna_gain_tx_dbi + cfg.antenna_gain_rx_dbi;
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& m : measurements) {
        const double x = 10.0 * std::log10(std::max(m.distance_m, 1.0));
        const double y = eirp - reference_loss_db - m.rssi_dbm;
        sxy += x * y;
        sxx += x * x;
    }
    if (sxx <= 0.0) throw InsufficientDataError("all measurements are at the reference distance");

    Calibration out;
    out.exponent = sxy / sxx;
    if (out.exponent < 2.0) {
        out.exponent = 2.0;
        out.clamped = true;
    }
    double ss = 0.0;
    for (const auto& m : measurements) {
        const double x = 10.0 * std::log10(std::max(m.distance_m, 1.0));
        const double predicted = eirp - reference_loss_db - out.exponent * x;
        ss += (m.rssi_dbm - predicted) * (m.rssi_dbm - predicted);
    }
    out.rms_residual_db = std::sqrt(ss / static_cast<double>(measurements.size()));
    return out;
}

double solve_exponent(const Measurement& m, const RadioConfig& cfg, double reference_loss_db) {
    if (!(m.distance_m > 1.0))
        throw InsufficientDataError("exponent is undefined at or below the reference distance");
    const double eirp = cfg.tx_power_dbm + cfg.antenna_gain_tx_dbi + cfg.antenna_gain_rx_dbi;
    return (eirp - reference_loss_db - m.rssi_dbm) / (10.0 * std::log10(m.distance_m));
}

}  // namespace meshsim::phy
