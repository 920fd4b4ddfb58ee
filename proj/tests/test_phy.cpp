#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "meshsim/phy.hpp"

using namespace meshsim::phy;

namespace {

RadioConfig radio(int sf, int cr = 1, int preamble = 16) {
    RadioConfig cfg;
    cfg.spreading_factor = sf;
    cfg.coding_rate = cr;
    cfg.preamble_symbols = preamble;
    return cfg;
}

}  // namespace

TEST_SUITE("phy") {

TEST_CASE("symbol time at 125 kHz") {
    CHECK(symbol_time(radio(11)) == doctest::Approx(0.016384).epsilon(1e-15));
    CHECK(symbol_time(radio(7)) == doctest::Approx(0.001024).epsilon(1e-15));
    CHECK(symbol_time(radio(12)) == doctest::Approx(0.032768).epsilon(1e-15));
}

TEST_CASE("low data rate optimization switches on at 16 ms symbols") {
    CHECK_FALSE(low_data_rate_optimize(radio(10)));
    CHECK(low_data_rate_optimize(radio(11)));
    CHECK(low_data_rate_optimize(radio(12)));
    RadioConfig wide = radio(12);
    wide.bandwidth_hz = 250'000;
    CHECK(low_data_rate_optimize(wide));  // 16.384 ms
    wide.spreading_factor = 11;
    CHECK_FALSE(low_data_rate_optimize(wide));  // 8.192 ms
}

TEST_CASE("airtime spot values") {
    CHECK(payload_symbols(20, radio(11)) == 33);
    CHECK(time_on_air(20, radio(11)) == 0.872448);
    CHECK(time_on_air_ns(20, radio(11)) == 872'448'000);
    CHECK(time_on_air(20, radio(12)) > time_on_air(20, radio(11)));
    // Exact rational evaluation, frozen.
    CHECK(payload_symbols(1, radio(7, 1, 8)) == 13);
    CHECK(time_on_air_ns(1, radio(7, 1, 8)) == 25'856'000);
    CHECK(time_on_air_ns(20, radio(12)) == 1'581'056'000);
    CHECK(time_on_air_ns(255, radio(12, 4)) == 14'295'040'000);
    CHECK(time_on_air_ns(253, radio(11)) == 5'132'288'000);
    CHECK(time_on_air_ns(16, radio(7, 4)) == 78'080'000);
    CHECK(time_on_air_ns(51, radio(9, 2)) == 410'624'000);
    CHECK(time_on_air_ns(100, radio(10, 3)) == 1'435'648'000);
}

TEST_CASE("airtime rejects out of range payloads") {
    CHECK_THROWS_AS(time_on_air(0, radio(11)), std::invalid_argument);
    CHECK_THROWS_AS(time_on_air(256, radio(11)), std::invalid_argument);
    CHECK_NOTHROW(time_on_air(255, radio(11)));
}

TEST_CASE("airtime is monotone in payload and spreading factor") {
    for (int cr = 1; cr <= 4; ++cr)
        for (int sf = 7; sf <= 12; ++sf)
            for (int len = 1; len <= 255; ++len) {
                if (len > 1) REQUIRE(time_on_air(len - 1, radio(sf, cr)) <= time_on_air(len, radio(sf, cr)));
                if (sf > 7) REQUIRE(time_on_air(len, radio(sf - 1, cr)) < time_on_air(len, radio(sf, cr)));
            }
}

TEST_CASE("noise floor and sensitivity") {
    CHECK(std::abs(noise_floor_dbm(radio(11)) + 117.03) < 0.005);
    CHECK(noise_floor_dbm(radio(11)) == doctest::Approx(-117.0309).epsilon(1e-6));
    RadioConfig quiet = radio(11);
    quiet.noise_figure_db = 0.0;
    CHECK(noise_floor_dbm(quiet) == doctest::Approx(-123.0309).epsilon(1e-6));
    CHECK(snr_floor_db(11) == -17.5);
    CHECK(snr_floor_db(12) == -20.0);
    CHECK(snr_floor_db(7) == -7.5);
    CHECK_THROWS_AS(snr_floor_db(6), std::invalid_argument);
    CHECK_THROWS_AS(snr_floor_db(13), std::invalid_argument);
    CHECK(sensitivity_dbm(radio(11)) == doctest::Approx(-134.5309).epsilon(1e-6));
    CHECK(sensitivity_dbm(radio(7)) == doctest::Approx(-124.5309).epsilon(1e-6));
}

TEST_CASE("path loss") {
    const double fs = free_space_loss_db(1.0, 915e6);
    CHECK(std::abs(fs - 31.67) < 0.01);
    EnvironmentClass env{EnvKind::NlosBuilt, 3.48, 31.67, 0.0};
    CHECK(path_loss_db(1.0, env, 0.0).db == 31.67);
    CHECK(path_loss_db(2050.0, env, 0.0).db == doctest::Approx(146.919).epsilon(1e-5));
    CHECK(path_loss_db(2050.0, env, 2.5).db == doctest::Approx(149.419).epsilon(1e-5));

    const auto clamped = path_loss_db(0.2, env, 0.0);
    CHECK(clamped.clamped);
    CHECK(clamped.db == 31.67);
    CHECK_FALSE(path_loss_db(1.0, env, 0.0).clamped);

    double prev = path_loss_db(1.0, env, 0.0).db;
    for (double d = 1.5; d < 5000.0; d *= 1.3) {
        const double pl = path_loss_db(d, env, 0.0).db;
        CHECK(pl > prev);
        prev = pl;
    }
}

TEST_CASE("received signal") {
    RadioConfig cfg = radio(11);
    auto s = received_signal(cfg, 147.0);
    CHECK(s.rssi_dbm == -125.0);
    CHECK(received_signal(cfg, 22.0).rssi_dbm == 0.0);
    s = received_signal(cfg, 132.0);
    CHECK(s.rssi_dbm == -110.0);
    CHECK(s.snr_db == doctest::Approx(7.0309).epsilon(1e-5));
    cfg.antenna_gain_tx_dbi = 2.0;
    cfg.antenna_gain_rx_dbi = 3.0;
    CHECK(received_signal(cfg, 27.0).rssi_dbm == 0.0);
}

TEST_CASE("decode outcome") {
    const RadioConfig cfg = radio(11);
    CHECK(decode_outcome(-110.0, 2.75, cfg) == DecodeOutcome::Decoded);
    CHECK(decode_outcome(-140.0, 5.0, cfg) == DecodeOutcome::BelowSensitivity);
    CHECK(decode_outcome(-120.0, -18.0, cfg) == DecodeOutcome::BelowSnrFloor);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rssi(-160.0, -60.0), snr(-40.0, 40.0);
    for (int i = 0; i < 10000; ++i) {
        const double r = rssi(rng), s = snr(rng);
        const auto o = decode_outcome(r, s, cfg);
        if (o == DecodeOutcome::Decoded) {
            CHECK(r >= sensitivity_dbm(cfg));
            CHECK(s >= snr_floor_db(11));
        } else if (o == DecodeOutcome::BelowSensitivity) {
            CHECK(r < sensitivity_dbm(cfg));
        } else {
            CHECK(r >= sensitivity_dbm(cfg));
            CHECK(s < snr_floor_db(11));
        }
    }
}

TEST_CASE("raw snr codec") {
    CHECK(snr_raw_decode(11) == 2.75);
    CHECK(snr_raw_decode(0) == 0.0);
    CHECK(snr_raw_encode(-17.5) == -70);
    CHECK(snr_raw_decode(-70) == -17.5);
    CHECK(snr_raw_encode(2.75) == 11);
    CHECK(snr_raw_encode(1000.0) == 127);
    CHECK(snr_raw_encode(-1000.0) == -128);
    for (int raw = -128; raw <= 127; ++raw) CHECK(snr_raw_encode(snr_raw_decode(raw)) == raw);
}

TEST_CASE("exponent calibration") {
    const RadioConfig cfg = radio(11);

    SUBCASE("single point inversion") {
        CHECK(solve_exponent({2050.0, -125.0}, cfg, 31.67) == doctest::Approx(3.48244).epsilon(1e-5));
        const std::vector<Measurement> one{{2050.0, -125.0}};
        CHECK_THROWS_AS(calibrate_exponent(one, cfg, 31.67), InsufficientDataError);
        const std::vector<Measurement> same{{2050.0, -125.0}, {2050.0, -126.0}};
        CHECK_THROWS_AS(calibrate_exponent(same, cfg, 31.67), InsufficientDataError);
    }

    SUBCASE("noise free data recovers the exponent") {
        for (double n : {2.0, 2.7, 3.0, 3.5873, 4.4}) {
            std::vector<Measurement> ms;
            for (double d : {30.0, 250.0, 1090.0, 2470.0}) {
                const EnvironmentClass env{EnvKind::NlosBuilt, n, 31.67, 0.0};
                ms.push_back({d, received_signal(cfg, path_loss_db(d, env, 0.0).db).rssi_dbm});
            }
            const auto cal = calibrate_exponent(ms, cfg, 31.67);
            CHECK(cal.exponent == doctest::Approx(n).epsilon(1e-9));
            CHECK(cal.rms_residual_db < 1e-9);
            CHECK_FALSE(cal.clamped);
        }
    }

    SUBCASE("route midpoints") {
        const std::vector<Measurement> mid{{1090.0, -121.5}, {1600.0, -125.5}, {2050.0, -125.0}};
        const auto cal = calibrate_exponent(mid, cfg, free_space_loss_db(1.0, 915e6));
        CHECK(cal.exponent >= 3.2);
        CHECK(cal.exponent <= 3.8);
        CHECK(cal.exponent == doctest::Approx(3.587301).epsilon(1e-6));
        CHECK(kNlosBuiltExponent == doctest::Approx(cal.exponent).epsilon(1e-4));
    }

    SUBCASE("optimum below free space is clamped") {
        const std::vector<Measurement> hot{{100.0, -20.0}, {200.0, -25.0}};
        const auto cal = calibrate_exponent(hot, cfg, 31.67);
        CHECK(cal.clamped);
        CHECK(cal.exponent == 2.0);
    }
}

TEST_CASE("radio config validation") {
    CHECK(RadioConfig{}.violations().empty());
    RadioConfig bad;
    bad.spreading_factor = 13;
    bad.coding_rate = 0;
    bad.hop_limit = 8;
    CHECK(bad.violations().size() == 3);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

}  // TEST_SUITE
