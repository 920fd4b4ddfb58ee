#include "meshsim/telemetry.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace meshsim::telemetry {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
    return v;
}

std::int32_t degrees_to_fixed(double deg) {
    return static_cast<std::int32_t>(std::llround(deg * 1e7));
}

}  // namespace

std::string_view to_string(PayloadSource source) {
    switch (source) {
        case PayloadSource::IrradianceSensor:
            return "IRRADIANCE_SENSOR";
        case PayloadSource::GnssTracker:
            return "GNSS_TRACKER";
        case PayloadSource::TextFixed:
            return "TEXT_FIXED";
    }
    return "UNKNOWN";
}

std::optional<PayloadSource> payload_source_from_string(std::string_view name) {
    for (auto s : {PayloadSource::IrradianceSensor, PayloadSource::GnssTracker, PayloadSource::TextFixed})
        if (to_string(s) == name) return s;
    return std::nullopt;
}

std::vector<SimTime> emission_times(const AppSchedule& schedule, SimTime duration) {
    const SimTime period = seconds_to_sim(schedule.period_s);
    const SimTime offset = seconds_to_sim(schedule.start_offset_s);
    if (period <= 0) throw std::invalid_argument("schedule period must be positive");
    std::vector<SimTime> out;
    for (SimTime t = offset; t <= duration; t += period) out.push_back(t);
    return out;
}

double adc_to_voltage(int raw) {
    if (raw < 0 || raw > kAdcMax)
        throw std::invalid_argument("adc reading must be in [0, 4095], got " + std::to_string(raw));
    return static_cast<double>(raw) / kAdcMax * kAdcFullScaleV;
}

Irradiance voltage_to_irradiance(double volts, const IrradianceModel& model) {
    if (!(volts >= 0.0)) throw std::invalid_argument("sensor voltage must be non-negative");
    if (!(model.volts_per_wm2 > 0.0)) throw std::invalid_argument("sensor scale must be positive");
    Irradiance out{volts / model.volts_per_wm2, false};
    if (out.wm2 > model.max_wm2) {
        out.wm2 = model.max_wm2;
        out.clamped = true;
    }
    return out;
}

IrradianceSample sample_from_adc(int raw, const IrradianceModel& model, std::optional<int> battery_soc) {
    IrradianceSample s;
    s.adc_raw = raw;
    s.volts = adc_to_voltage(raw);
    s.irradiance = voltage_to_irradiance(s.volts, model).wm2;
    s.battery_soc = battery_soc;
    return s;
}

std::vector<std::uint8_t> encode_irradiance(const IrradianceSample& sample) {
    if (sample.adc_raw < 0 || sample.adc_raw > kAdcMax) throw CodecError("adc_raw out of range");
    if (sample.battery_soc && (*sample.battery_soc < 0 || *sample.battery_soc > 100))
        throw CodecError("battery percentage out of range");
    std::vector<std::uint8_t> out;
    out.reserve(7);
    put_u16(out, static_cast<std::uint16_t>(sample.adc_raw));
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(sample.irradiance)));
    if (sample.battery_soc) out.push_back(static_cast<std::uint8_t>(*sample.battery_soc));
    return out;
}

IrradianceSample decode_irradiance(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != 6 && bytes.size() != 7)
        throw CodecError("irradiance payload must be 6 or 7 bytes, got " + std::to_string(bytes.size()));
    IrradianceSample s;
    s.adc_raw = get_u16(bytes, 0);
    if (s.adc_raw > kAdcMax) throw CodecError("adc_raw out of range");
    s.volts = adc_to_voltage(s.adc_raw);
    s.irradiance = std::bit_cast<float>(get_u32(bytes, 2));
    if (bytes.size() == 7) {
        if (bytes[6] > 100) throw CodecError("battery percentage out of range");
        s.battery_soc = bytes[6];
    }
    return s;
}

std::vector<std::uint8_t> encode_position(double lat, double lon, double alt_m, std::uint32_t fix_time) {
    if (!(lat >= -90.0 && lat <= 90.0)) throw CodecError("latitude out of range");
    if (!(lon >= -180.0 && lon <= 180.0)) throw CodecError("longitude out of range");
    if (!(std::abs(alt_m) < 2e9)) throw CodecError("altitude out of range");
    std::vector<std::uint8_t> out;
    out.reserve(kPositionPayloadBytes);
    put_u32(out, static_cast<std::uint32_t>(degrees_to_fixed(lat)));
    put_u32(out, static_cast<std::uint32_t>(degrees_to_fixed(lon)));
    put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(std::lround(alt_m))));
    put_u32(out, fix_time);
    return out;
}

PositionFix decode_position(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kPositionPayloadBytes)
        throw CodecError("position payload must be 16 bytes, got " + std::to_string(bytes.size()));
    PositionFix fix;
    fix.lat_i = static_cast<std::int32_t>(get_u32(bytes, 0));
    fix.lon_i = static_cast<std::int32_t>(get_u32(bytes, 4));
    fix.alt_m = static_cast<std::int32_t>(get_u32(bytes, 8));
    fix.fix_time = get_u32(bytes, 12);
    if (std::abs(fix.latitude()) > 90.0) throw CodecError("latitude out of range");
    if (std::abs(fix.longitude()) > 180.0) throw CodecError("longitude out of range");
    return fix;
}

int irradiance_source(double time_s, const DiurnalProfile& profile) {
    const double t = std::fmod(std::fmod(time_s, 86400.0) + 86400.0, 86400.0);
    if (t <= profile.sunrise_s || t >= profile.sunset_s) return 0;
    // Measured from solar noon so the curve is exactly symmetric.
    const double half_day = 0.5 * (profile.sunset_s - profile.sunrise_s);
    const double noon = profile.sunrise_s + half_day;
    const double phase = std::abs(t - noon) / half_day;
    return static_cast<int>(std::lround(profile.peak_raw * std::cos(0.5 * std::numbers::pi * phase)));
}

}  // namespace meshsim::telemetry
