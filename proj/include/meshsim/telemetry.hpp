#pragma once

// Application payloads: the irradiance sensor chain on the solar node and
// GNSS position frames from the tracker, plus their emission schedules.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshsim/common.hpp"

namespace meshsim::telemetry {

class CodecError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

enum class PayloadSource { IrradianceSensor, GnssTracker, TextFixed };

std::string_view to_string(PayloadSource source);
std::optional<PayloadSource> payload_source_from_string(std::string_view name);

struct AppSchedule {
    Port port = Port::TextMessageApp;
    double period_s = 60.0;
    double start_offset_s = 0.0;
    PayloadSource source = PayloadSource::TextFixed;
    std::string text;  // TextFixed payload

    static constexpr double kPositionPeriodS = 60.0;
    static constexpr double kTelemetryPeriodS = 300.0;
};

/// Emission times (ns) of `schedule` over [0, duration], offset inclusive.
std::vector<SimTime> emission_times(const AppSchedule& schedule, SimTime duration);

// 12-bit ADC, 0..3.3 V full scale.
inline constexpr int kAdcMax = 4095;
inline constexpr double kAdcFullScaleV = 3.3;

double adc_to_voltage(int raw);

struct IrradianceModel {
    double volts_per_wm2 = 0.00167;  // 1.67 mV per W/m^2
    double max_wm2 = 1800.0;
};

struct Irradiance {
    double wm2 = 0.0;
    bool clamped = false;
};

Irradiance voltage_to_irradiance(double volts, const IrradianceModel& model = {});

struct IrradianceSample {
    int adc_raw = 0;
    double volts = 0.0;
    double irradiance = 0.0;
    std::optional<int> battery_soc;  // percent
};

IrradianceSample sample_from_adc(int raw, const IrradianceModel& model = {},
                                 std::optional<int> battery_soc = std::nullopt);

// Wire layout, little endian: u16 adc_raw, f32 irradiance, [u8 battery %].
std::vector<std::uint8_t> encode_irradiance(const IrradianceSample& sample);
IrradianceSample decode_irradiance(std::span<const std::uint8_t> bytes);

struct PositionFix {
    std::int32_t lat_i = 0;  // degrees * 1e7
    std::int32_t lon_i = 0;
    std::int32_t alt_m = 0;
    std::uint32_t fix_time = 0;

    double latitude() const { return lat_i / 1e7; }
    double longitude() const { return lon_i / 1e7; }
};

inline constexpr std::size_t kPositionPayloadBytes = 16;

// Wire layout, little endian: i32 lat*1e7, i32 lon*1e7, i32 alt m, u32 fix time.
std::vector<std::uint8_t> encode_position(double lat, double lon, double alt_m,
                                          std::uint32_t fix_time = 0);
PositionFix decode_position(std::span<const std::uint8_t> bytes);

/// Half-sine diurnal profile sampled through the ADC.
struct DiurnalProfile {
    int peak_raw = 3000;
    double sunrise_s = 6 * 3600.0;
    double sunset_s = 18 * 3600.0;
};

int irradiance_source(double time_s, const DiurnalProfile& profile);

}  // namespace meshsim::telemetry
