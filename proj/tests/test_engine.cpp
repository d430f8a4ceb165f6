#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sccr/cli.hpp"
#include "sccr/engine.hpp"
#include "support/oracles.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;
namespace en = sccr::engine;

namespace {

const std::string kData = SCCR_DATA_DIR;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("sccr_engine_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    if (!fs::exists(p)) return "<absent>";
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

en::Engine data_engine() {
    return sccr::cli::load_engine(kData + "/model.json", kData + "/impacts.json", kData + "/engine.json");
}

std::vector<std::vector<sccr::pipeline::ScanSnapshot>> scenario_batches(int steps) {
    const auto sc = sccr::io::scenario_from_json(sccr::io::read_json_file(kData + "/scenario.json"));
    std::vector<std::vector<sccr::pipeline::ScanSnapshot>> out;
    for (int j = 0; j < steps; ++j) out.push_back(sccr::pipeline::simulate_scan(sc, j));
    return out;
}

const std::vector<double> kPc{0.057, 0.187, 0.131, 0.236};
const std::vector<double> kPs1{0.468, 0.164, 0.166, 0.481};
const std::vector<double> kPs2{0.383, 0.350, 0.143, 0.200};
const std::vector<double> kQ{0.103, 0.107, 0.056, 0.084};

}  // namespace

TEST_CASE("zero scans with zero index coefficients reduce to the intercepts", "[engine]") {
    auto model = sccr::io::model_set_from_json(sccr::io::read_json_file(kData + "/model.json"));
    model.index = {0.0, 0.0};
    auto impacts = sccr::io::impact_model_from_json(sccr::io::read_json_file(kData + "/impacts.json"));
    en::EngineConfig cfg;
    cfg.suppliers = {"s1", "s2"};
    cfg.utility.enabled = false;
    en::Engine e(cfg, model, impacts);

    std::vector<sccr::pipeline::ScanSnapshot> snaps;
    for (const auto& org : cfg.organisations()) {
        sccr::pipeline::ScanSnapshot s;
        s.org = org;
        s.t = 0;
        for (const auto& a : model.attacks) s.attacks[a.attack_id].assign(a.levels(), 0.0);
        s.env.assign(2, 0.4);
        s.posture.assign(2, 0.9);
        snaps.push_back(s);
    }
    const auto [state, r] = e.run_cycle({}, snaps);
    std::vector<double> p;
    std::vector<double> q;
    for (const auto& a : model.attacks) {
        p.push_back(1.0 / (1.0 + std::exp(-a.intercept)));
        q.push_back(a.transfer_probability);
    }
    const auto cap = std::min<std::size_t>(3, p.size());
    CHECK_THAT(r.ap, WithinAbs(oracle::enumerate_states(p, {}, cap).any, 1e-14));
    CHECK_THAT(r.supplier("s1")->iap, WithinAbs(oracle::enumerate_states(p, q, cap).transferred, 1e-14));
    CHECK(state.t == 0);
    CHECK(r.t == 0);
}

TEST_CASE("injected worked-example probabilities give the reference figures", "[engine]") {
    sccr::AttackModelSet model;
    for (std::size_t i = 0; i < kQ.size(); ++i) model.attacks.push_back({"atk" + std::to_string(i), -2.0, {1.0}, kQ[i]});
    auto impacts = sccr::io::impact_model_from_json(sccr::io::read_json_file(kData + "/impacts.json"));
    en::EngineConfig cfg;
    cfg.suppliers = {"s1", "s2"};
    cfg.attack_cap = 4;
    cfg.supplier_cap = 2;
    cfg.utility.enabled = false;
    en::Engine e(cfg, model, impacts);
    const auto r = e.run_with_probabilities({}, {kPc, {{"s1", kPs1}, {"s2", kPs2}}}).second;
    CHECK_THAT(r.ap, WithinAbs(0.491, 0.001));
    CHECK_THAT(r.supplier("s1")->iap, WithinAbs(0.111, 0.001));
    CHECK_THAT(r.supplier("s2")->iap, WithinAbs(0.098, 0.001));
    CHECK_THAT(r.gap, WithinAbs(0.592, 0.001));

    const auto& c = e.costs();
    const auto s1 = oracle::enumerate_states(kPs1, kQ, 4);
    CHECK_THAT(r.supplier("s1")->ir,
               WithinRel(s1.any * c.supplier_downtime.at("s1") + s1.transferred * (c.reputation + c.company_downtime), 1e-12));
    CHECK_THAT(r.r, WithinRel(r.ap * (c.reputation + c.company_downtime), 1e-14));
    CHECK(r.tr == r.r + r.supplier("s1")->ir + r.supplier("s2")->ir);
    // The worked example prefers the second supplier on both keys.
    const std::vector<sccr::RiskReport> rs{r};
    CHECK(sccr::rank_suppliers(rs, sccr::RankKey::iap).front().supplier == "s2");
    CHECK(sccr::rank_suppliers(rs, sccr::RankKey::ir).front().supplier == "s2");
}

TEST_CASE("default caps and indicators", "[engine]") {
    const auto e = data_engine();
    CHECK(*e.config().attack_cap == 3);
    CHECK(*e.config().supplier_cap == 2);
    en::EngineConfig plain;
    plain.suppliers = {"s1", "s2"};
    CHECK(plain.monitored() == std::vector<std::string>{"AP", "IAP:s1", "IAP:s2", "GAP", "TR"});
}

TEST_CASE("a cycle with a missing organisation aborts without side effects", "[engine]") {
    TempDir dir("atomic");
    en::Runner runner(data_engine(), en::StateStore(dir.path));
    const auto batches = scenario_batches(3);
    runner.step(batches[0]);
    const auto state_before = slurp(runner.store().state_path());
    const auto history_before = slurp(runner.store().history_path());
    const auto mem_before = runner.state();

    auto partial = batches[1];
    partial.pop_back();
    CHECK_THROWS_AS(runner.step(partial), sccr::ValidationError);
    auto dup = batches[1];
    dup.push_back(dup.front());
    CHECK_THROWS_AS(runner.step(dup), sccr::ValidationError);
    auto wrong_t = batches[2];
    CHECK_THROWS_AS(runner.step(wrong_t), sccr::ValidationError);

    CHECK(slurp(runner.store().state_path()) == state_before);
    CHECK(slurp(runner.store().history_path()) == history_before);
    CHECK(runner.state() == mem_before);
    CHECK_NOTHROW(runner.step(batches[1]));
    CHECK(runner.state().t == 1);
}

TEST_CASE("fault injection at every commit stage leaves both files unchanged", "[engine]") {
    const auto batches = scenario_batches(3);
    for (const std::string stage : {"prepare", "state_written", "history_appended", "committed"}) {
        for (int warm = 0; warm <= 1; ++warm) {
            DYNAMIC_SECTION(stage << " after " << warm << " cycles") {
                TempDir dir("fault");
                en::Runner runner(data_engine(), en::StateStore(dir.path));
                for (int j = 0; j < warm; ++j) runner.step(batches[static_cast<std::size_t>(j)]);
                const auto state_before = slurp(runner.store().state_path());
                const auto history_before = slurp(runner.store().history_path());

                runner.store().set_fault_hook([&](const std::string& s) {
                    if (s == stage) throw sccr::IoError("injected at " + s);
                });
                CHECK_THROWS_AS(runner.step(batches[static_cast<std::size_t>(warm)]), sccr::IoError);
                CHECK(slurp(runner.store().state_path()) == state_before);
                if (warm == 0) {
                    const auto h = runner.store().history_path();
                    CHECK((!fs::exists(h) || fs::file_size(h) == 0));
                } else {
                    CHECK(slurp(runner.store().history_path()) == history_before);
                }
                CHECK_FALSE(fs::exists(dir.path / "state.json.tmp"));

                // A fresh runner resumes from the untouched files.
                runner.store().set_fault_hook({});
                en::Runner again(data_engine(), en::StateStore(dir.path));
                CHECK(again.state().t == warm - 1);
                CHECK_NOTHROW(again.step(batches[static_cast<std::size_t>(warm)]));
            }
        }
    }
}

TEST_CASE("load repairs a history longer than the state records", "[engine]") {
    TempDir dir("repair");
    const auto batches = scenario_batches(2);
    std::string clean;
    {
        en::Runner runner(data_engine(), en::StateStore(dir.path));
        runner.step(batches[0]);
        clean = slurp(runner.store().history_path());
        std::ofstream out(runner.store().history_path(), std::ios::app);
        out << "{\"t\":1,\"partial";
    }
    en::StateStore store(dir.path);
    const auto s = store.load();
    CHECK(s.t == 0);
    CHECK(slurp(store.history_path()) == clean);
    CHECK(store.history().size() == 1);

    fs::resize_file(store.history_path(), clean.size() - 5);
    CHECK_THROWS_AS(store.load(), sccr::IoError);
}

TEST_CASE("what-if leaves persisted state untouched", "[engine]") {
    TempDir dir("whatif");
    en::Runner runner(data_engine(), en::StateStore(dir.path));
    const auto batches = scenario_batches(4);
    for (int j = 0; j < 3; ++j) runner.step(batches[static_cast<std::size_t>(j)]);
    const auto state_before = slurp(runner.store().state_path());
    const auto history_before = slurp(runner.store().history_path());

    auto hypothetical = batches[3];
    for (auto& s : hypothetical) s.t = 999;
    const auto r = runner.engine().what_if(runner.state(), hypothetical);
    CHECK(r.ephemeral);
    CHECK(r.t == 3);
    CHECK(slurp(runner.store().state_path()) == state_before);
    CHECK(slurp(runner.store().history_path()) == history_before);

    const auto real = runner.step(batches[3]);
    CHECK_FALSE(real.ephemeral);
    CHECK(real.ap == r.ap);
    CHECK(real.tr == r.tr);
}

TEST_CASE("replaying a stream gives identical histories and per-record hashes", "[engine]") {
    TempDir a("replay_a");
    TempDir b("replay_b");
    const auto batches = scenario_batches(12);
    std::string hist[2];
    int k = 0;
    for (const auto* d : {&a, &b}) {
        en::Runner runner(data_engine(), en::StateStore(d->path));
        for (const auto& batch : batches) runner.step(batch);
        hist[k++] = slurp(runner.store().history_path());
        for (const auto& j : runner.store().history()) {
            CHECK(j.at("config_hash") == runner.engine().config_hash());
            CHECK(j.contains("t"));
        }
        const auto reps = runner.store().reports();
        for (std::size_t i = 0; i < reps.size(); ++i) {
            CHECK(reps[i].t == static_cast<std::int64_t>(i));
            double tr = reps[i].r;
            for (const auto& s : reps[i].suppliers) tr += s.ir;
            CHECK_THAT(reps[i].tr, WithinRel(tr, 1e-15));
        }
    }
    CHECK(hist[0] == hist[1]);
}

TEST_CASE("monitoring produces forecasts, alarms and SLA runs", "[engine]") {
    auto e = data_engine();
    en::EngineState s;
    const auto batches = scenario_batches(30);
    sccr::RiskReport last;
    for (const auto& batch : batches) {
        auto [next, r] = e.run_cycle(s, batch);
        s = std::move(next);
        last = std::move(r);
    }
    for (const auto& k : e.config().monitored()) {
        REQUIRE(s.dlm.contains(k));
        CHECK(last.next.at(k).time == 30);
        CHECK(last.next.at(k).mean == sccr::dlm::one_step(s.dlm.at(k), e.config().alpha).mean);
    }
    REQUIRE(last.sla.size() == 2);
    for (const auto& st : last.sla) {
        CHECK(st.violated == (st.value > st.level));
        CHECK(st.breach == (st.run_length >= 3));
    }
}

TEST_CASE("scaling clamps with a warning and config changes move the hash", "[engine]") {
    auto e = data_engine();
    auto batch = scenario_batches(1)[0];
    batch[0].env[0] = 500.0;
    const auto r = e.run_cycle({}, batch).second;
    bool warned = false;
    for (const auto& w : r.warnings) warned = warned || w.find("clamped") != std::string::npos;
    CHECK(warned);

    const auto before = e.config_hash();
    e.set_sla({{"s1", "IR:s1", 1e6, 2}});
    CHECK(e.config_hash() != before);
    CHECK_THROWS_AS(e.set_sla({{"nobody", "", 1.0, 2}}), sccr::ValidationError);
}

TEST_CASE("ranking tie rule and windows", "[engine]") {
    sccr::RiskReport a;
    a.suppliers = {{"zeta", 0.1, 5.0}, {"alpha", 0.2, 5.0}};
    sccr::RiskReport b;
    b.suppliers = {{"zeta", 0.1, 1.0}, {"alpha", 0.2, 9.0}};
    const std::vector<sccr::RiskReport> one{a};
    const auto tie = sccr::rank_suppliers(one, sccr::RankKey::ir);
    CHECK(tie[0].supplier == "alpha");
    CHECK(tie[1].supplier == "zeta");

    sccr::RiskReport example;
    example.suppliers = {{"s1", 0.111, 116730.0}, {"s2", 0.098, 103380.0}};
    const std::vector<sccr::RiskReport> p{example};
    CHECK(sccr::rank_suppliers(p, sccr::RankKey::ir)[0].supplier == "s2");

    const std::vector<sccr::RiskReport> two{a, b};
    const auto w1 = sccr::rank_suppliers(two, sccr::RankKey::ir, 1);
    CHECK(w1[0].supplier == "zeta");
    const auto w2 = sccr::rank_suppliers(two, sccr::RankKey::ir, 2);
    CHECK(w2[0].supplier == "zeta");
    CHECK(w2[0].score == 3.0);
    CHECK(w2[1].score == 7.0);
    CHECK_THROWS_AS(sccr::rank_key_from_string("TR"), sccr::ValidationError);
}

TEST_CASE("SLA violation runs", "[engine]") {
    using Series = std::vector<std::pair<std::int64_t, double>>;
    const Series below{{0, 0.1}, {1, 0.2}};
    const auto none = sccr::sla_check(below, 0.5, 2);
    CHECK(none.violations.empty());
    CHECK_FALSE(none.breach);

    const Series single{{0, 0.1}, {1, 0.7}, {2, 0.2}};
    const auto one = sccr::sla_check(single, 0.5, 2);
    CHECK(one.violations == std::vector<std::int64_t>{1});
    CHECK_FALSE(one.breach);

    const Series three{{0, 0.1}, {1, 0.7}, {2, 0.8}, {3, 0.9}, {4, 0.1}, {5, 0.6}};
    const auto run = sccr::sla_check(three, 0.5, 3);
    CHECK(run.breach);
    CHECK(run.breach_time == 3);
    REQUIRE(run.runs.size() == 2);
    CHECK(run.runs[0].length == 3);
    CHECK(run.runs[1].start == 5);
    // Exactly at the level is not a violation.
    const Series edge{{0, 0.5}};
    CHECK(sccr::sla_check(edge, 0.5, 1).violations.empty());
    CHECK_THROWS_AS(sccr::sla_check(edge, 0.5, 0), sccr::ValidationError);
}

TEST_CASE("config and state round trip through JSON", "[engine]") {
    const auto cfg = en::config_from_json(sccr::io::read_json_file(kData + "/engine.json"));
    const auto j = en::config_to_json(cfg);
    CHECK(en::config_to_json(en::config_from_json(j)) == j);
    auto bad = sccr::io::read_json_file(kData + "/engine.json");
    bad["unknown"] = 1;
    CHECK_THROWS_AS(en::config_from_json(bad), sccr::ValidationError);

    auto e = data_engine();
    en::EngineState s;
    for (const auto& batch : scenario_batches(4)) s = e.run_cycle(s, batch).first;
    CHECK(en::state_from_json(en::state_to_json(s)) == s);
}

TEST_CASE("CSV export", "[engine]") {
    sccr::RiskReport r;
    r.t = 4;
    r.ap = 0.5;
    r.suppliers = {{"s1", 0.1, 2.0}};
    const auto csv = en::reports_to_csv({r}, {"s1", "s2"});
    CHECK(csv.rfind("t,AP,GAP,R,TR,IAP:s1,IR:s1,IAP:s2,IR:s2\n", 0) == 0);
    CHECK(csv.find("\n4,0.5,0,0,0,0.10000000000000001,2,,\n") != std::string::npos);
}
