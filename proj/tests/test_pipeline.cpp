#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sccr/pipeline.hpp"
#include "sccr/serialization.hpp"
#include "support/oracles.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
namespace pl = sccr::pipeline;

namespace {

pl::ScanSchema schema() {
    pl::ScanSchema s;
    s.attack_levels = {{"atk0", 2}, {"atk1", 1}};
    s.env_size = 2;
    s.posture_size = 1;
    return s;
}

const std::string kGood = R"({"org":"s1","t":3,"attacks":{"atk0":[0.5,0.1],"atk1":[2]},"env":[10,20],"posture":[55]})";

std::string message_of(const std::string& line) {
    try {
        pl::parse_scan(line, schema(), 7);
    } catch (const sccr::ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("exponential smoothing equals its expansion", "[pipeline]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (double h : {0.05, 0.3, 0.9, 1.0}) {
        std::vector<double> x(40);
        for (auto& v : x) v = u(rng);
        pl::SmoothedSeries s;
        s.factor = h;
        for (std::size_t j = 0; j < x.size(); ++j) {
            s = pl::smooth(s, x[j]);
            CHECK_THAT(s.value, WithinAbs(oracle::smoothing_expansion(x, j, h), 1e-12));
        }
        CHECK(s.count == x.size());
    }
    pl::SmoothedSeries bad;
    bad.factor = 0.0;
    CHECK_THROWS_AS(pl::smooth(bad, 1.0), sccr::ValidationError);
    CHECK_THROWS_AS(pl::smooth({}, std::nan("")), sccr::ValidationError);
}

TEST_CASE("effective window", "[pipeline]") {
    // 0.7^12 = 0.0138 > 0.01 > 0.7^13 = 0.0097
    CHECK(pl::effective_window(0.3) == 13);
    CHECK(pl::effective_window(1.0) == 1);
    CHECK(pl::effective_window(0.5) == 7);
    for (double h : {0.05, 0.2, 0.3, 0.6}) {
        const auto k = pl::effective_window(h);
        CHECK(std::pow(1.0 - h, static_cast<double>(k)) < 0.01);
        CHECK(std::pow(1.0 - h, static_cast<double>(k - 1)) >= 0.01);
    }
    CHECK_THROWS_AS(pl::effective_window(0.0), sccr::ValidationError);
}

TEST_CASE("min-max scaling clamps and flags", "[pipeline]") {
    const pl::ScalerEntry e{20.0, 70.0};
    CHECK(pl::scale(45.0, e) == 0.5);
    const auto lo = pl::scale_checked(-5.0, e);
    CHECK(lo.value == 0.0);
    CHECK(lo.clamped);
    const auto hi = pl::scale_checked(90.0, e);
    CHECK(hi.value == 1.0);
    CHECK(hi.clamped);
    CHECK_FALSE(pl::scale_checked(70.0, e).clamped);
    CHECK_THROWS_AS(pl::scale(1.0, {1.0, 1.0}), sccr::ValidationError);
}

TEST_CASE("scan records parse and round trip", "[pipeline]") {
    const auto s = pl::parse_scan(kGood, schema());
    CHECK(s.org == "s1");
    CHECK(s.t == 3);
    CHECK(s.attacks.at("atk0") == std::vector<double>{0.5, 0.1});
    CHECK(s.env == std::vector<double>{10.0, 20.0});
    CHECK(pl::parse_scan(pl::write_scan(s), schema()) == s);
}

TEST_CASE("malformed scans are rejected with their line number", "[pipeline]") {
    auto j = nlohmann::json::parse(kGood);
    auto variant = [&](auto edit) {
        auto k = j;
        edit(k);
        return message_of(k.dump());
    };
    CHECK_THAT(message_of("{not json"), ContainsSubstring("line 7") && ContainsSubstring("malformed"));
    CHECK_THAT(variant([](auto& k) { k["extra"] = 1; }), ContainsSubstring("unknown field 'extra'"));
    CHECK_THAT(variant([](auto& k) { k.erase("env"); }), ContainsSubstring("missing field 'env'"));
    CHECK_THAT(variant([](auto& k) { k["attacks"].erase("atk1"); }), ContainsSubstring("attacks.atk1"));
    CHECK_THAT(variant([](auto& k) { k["attacks"]["atk9"] = {1}; }), ContainsSubstring("unknown attack type"));
    CHECK_THAT(variant([](auto& k) { k["attacks"]["atk0"] = {1}; }), ContainsSubstring("needs 2"));
    CHECK_THAT(variant([](auto& k) { k["attacks"]["atk0"][0] = -1.0; }), ContainsSubstring("line 7"));
    CHECK_THAT(variant([](auto& k) { k["env"] = {1}; }), ContainsSubstring("'env'"));
    CHECK_THAT(variant([](auto& k) { k["posture"] = {"x"}; }), ContainsSubstring("line 7"));
    CHECK_THAT(variant([](auto& k) { k["t"] = 1.5; }), ContainsSubstring("'t'"));
    CHECK_THAT(variant([](auto& k) { k["org"] = 5; }), ContainsSubstring("'org'"));
}

TEST_CASE("scan streams skip blank lines and count lines from one", "[pipeline]") {
    std::istringstream in(kGood + "\n\n   \n" + kGood + "\r\n{\"org\":1}\n");
    try {
        pl::read_scans(in, schema());
        FAIL("expected a validation error");
    } catch (const sccr::ValidationError& e) {
        CHECK_THAT(std::string(e.what()), ContainsSubstring("line 5"));
    }
    std::istringstream ok(kGood + "\n\n" + kGood + "\n");
    CHECK(pl::read_scans(ok, schema()).size() == 2);
}

TEST_CASE("simulator is a deterministic function of seed and time", "[pipeline]") {
    const auto sc = sccr::io::scenario_from_json(sccr::io::read_json_file(SCCR_DATA_DIR "/scenario.json"));
    const auto a = pl::simulate_scan(sc, 17);
    const auto b = pl::simulate_scan(sc, 17);
    CHECK(a == b);
    REQUIRE(a.size() == 3);
    CHECK(a[0].org == "company");
    CHECK(a[0].attacks.size() == 4);
    CHECK(a[0].env.size() == 2);
    // Later times do not depend on which earlier times were generated.
    pl::simulate_scan(sc, 3);
    CHECK(pl::simulate_scan(sc, 17) == a);
    auto other = sc;
    other.seed = 43;
    CHECK_FALSE(pl::simulate_scan(other, 17) == a);
    for (const auto& s : a) {
        for (const auto& [id, v] : s.attacks) {
            for (double x : v) CHECK(x >= 0.0);
        }
    }
}

TEST_CASE("simulated change point shifts the channel", "[pipeline]") {
    auto sc = sccr::io::scenario_from_json(sccr::io::read_json_file(SCCR_DATA_DIR "/scenario.json"));
    for (auto& o : sc.overrides) o.process.noise = 0.0;
    sc.defaults.noise = 0.0;
    auto atk3 = [&](std::int64_t j) { return pl::simulate_scan(sc, j)[2].attacks.at("atk3")[0]; };
    CHECK_THAT(atk3(59), WithinAbs(0.15 + 0.003 * 59, 1e-12));
    CHECK_THAT(atk3(60), WithinAbs(0.15 + 0.003 * 60 + 0.25, 1e-12));
}

TEST_CASE("scenario validation", "[pipeline]") {
    auto j = sccr::io::read_json_file(SCCR_DATA_DIR "/scenario.json");
    j["channels"][0]["channel"] = "nope";
    CHECK_THROWS_AS(sccr::io::scenario_from_json(j), sccr::ValidationError);
    j = sccr::io::read_json_file(SCCR_DATA_DIR "/scenario.json");
    j["suppliers"] = {"s1", "s1"};
    CHECK_THROWS_AS(sccr::io::scenario_from_json(j), sccr::ValidationError);
    j = sccr::io::read_json_file(SCCR_DATA_DIR "/scenario.json");
    j["defaults"]["noise"] = -1;
    CHECK_THROWS_AS(sccr::io::scenario_from_json(j), sccr::ValidationError);
}
