#pragma once

// LoRa physical layer: airtime, link budget, path loss and decode decisions.
// Everything in here is a pure function of its arguments.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meshsim::phy {

/// Radio parameters shared by every node of a deployment. The defaults are
/// the LongFast preset used on the campus mesh (US 915 MHz band).
struct RadioConfig {
    std::int64_t frequency_hz = 915'000'000;
    int spreading_factor = 11;
    std::int64_t bandwidth_hz = 125'000;
    int coding_rate = 1;  // 1..4 for 4/5..4/8
    double tx_power_dbm = 22.0;
    int hop_limit = 3;
    int preamble_symbols = 16;
    bool crc_enabled = true;
    bool explicit_header = true;
    double antenna_gain_tx_dbi = 0.0;
    double antenna_gain_rx_dbi = 0.0;
    double noise_figure_db = 6.0;

    /// Human-readable list of broken invariants; empty when valid.
    std::vector<std::string> violations() const;
    void validate() const;
};

enum class EnvKind { LosOpen, NlosBuilt, QuasiLosElevated };

std::string_view to_string(EnvKind kind);
std::optional<EnvKind> env_from_string(std::string_view name);

/// Log-distance propagation class.
struct EnvironmentClass {
    EnvKind kind = EnvKind::LosOpen;
    double path_loss_exponent = 2.0;
    double reference_loss_db = 31.67;
    double shadowing_sigma_db = 0.0;

    std::vector<std::string> violations() const;
};

/// Exponents fitted to the campus-to-summit route measurements, with the
/// 915 MHz free-space reference loss at 1 m.
inline constexpr double kNlosBuiltExponent = 3.5873;
inline constexpr double kQuasiLosExponent = 2.9571;
inline constexpr double kLosOpenExponent = 2.7;

EnvironmentClass default_environment(EnvKind kind);

/// Chirp duration 2^SF / BW in seconds.
double symbol_time(const RadioConfig& cfg);

/// True when the symbol time is at least 16 ms (SF11/SF12 at 125 kHz).
bool low_data_rate_optimize(const RadioConfig& cfg);

inline constexpr int kMaxPhyPayload = 255;

/// Number of payload symbols (including the 8 fixed symbols) for a frame.
int payload_symbols(int payload_len, const RadioConfig& cfg);

/// Airtime in seconds. Throws std::invalid_argument outside 1..255 bytes.
double time_on_air(int payload_len, const RadioConfig& cfg);

/// Airtime in nanoseconds, rounded up. Exact whenever BW divides 2^SF * 1e9 / 4.
std::int64_t time_on_air_ns(int payload_len, const RadioConfig& cfg);

/// Thermal noise floor: -174 dBm/Hz + 10 log10(BW) + NF.
double noise_floor_dbm(const RadioConfig& cfg);

/// Demodulation SNR floor of an SX126x-class receiver (datasheet table).
double snr_floor_db(int spreading_factor);

double sensitivity_dbm(const RadioConfig& cfg);

double free_space_loss_db(double distance_m, double frequency_hz);

struct PathLoss {
    double db = 0.0;
    bool clamped = false;  // distance was raised to 1 m
};

PathLoss path_loss_db(double distance_m, const EnvironmentClass& env, double shadow_draw_db);

struct Signal {
    double rssi_dbm = 0.0;
    double snr_db = 0.0;
};

Signal received_signal(const RadioConfig& cfg, double path_loss_db);

enum class DecodeOutcome { Decoded, BelowSensitivity, BelowSnrFloor };

std::string_view to_string(DecodeOutcome outcome);

DecodeOutcome decode_outcome(double rssi_dbm, double snr_db, const RadioConfig& cfg);

// Packet SNR as reported by the radio: signed quarter-dB steps in one byte.
inline constexpr double kSnrRawStepDb = 0.25;
int snr_raw_encode(double snr_db);
double snr_raw_decode(int raw);

struct Measurement {
    double distance_m = 0.0;
    double rssi_dbm = 0.0;
};

struct Calibration {
    double exponent = 0.0;
    bool clamped = false;  // least-squares optimum was below free space
    double rms_residual_db = 0.0;
};

class InsufficientDataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Least-squares fit of the path-loss exponent with the reference loss held
/// fixed and no shadowing term. Needs at least two distinct distances.
Calibration calibrate_exponent(std::span<const Measurement> measurements, const RadioConfig& cfg,
                               double reference_loss_db);

/// Closed-form exponent through a single (distance, RSSI) point.
double solve_exponent(const Measurement& m, const RadioConfig& cfg, double reference_loss_db);

}  // namespace meshsim::phy
