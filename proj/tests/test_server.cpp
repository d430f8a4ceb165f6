#include "catch_amalgamated.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "sccr/cli.hpp"
#include "sccr/server.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kData = SCCR_DATA_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

sccr::engine::Engine data_engine() {
    return sccr::cli::load_engine(kData + "/model.json", kData + "/impacts.json", kData + "/engine.json");
}

std::vector<sccr::pipeline::ScanSnapshot> batch(int j) {
    static const auto sc = sccr::io::scenario_from_json(sccr::io::read_json_file(kData + "/scenario.json"));
    return sccr::pipeline::simulate_scan(sc, j);
}

json batch_json(int j, bool with_t = true) {
    json arr = json::array();
    for (const auto& s : batch(j)) {
        auto v = sccr::pipeline::scan_to_json(s);
        if (!with_t) v.erase("t");
        arr.push_back(v);
    }
    return arr;
}

struct LiveServer {
    fs::path dir;
    sccr::engine::Runner runner;
    sccr::server::Api api;
    httplib::Server http;
    std::thread thread;
    int port = 0;

    LiveServer(const std::string& name, std::optional<sccr::elicitation::Questionnaire> q = std::nullopt)
        : dir(fresh(name)), runner(data_engine(), sccr::engine::StateStore(dir)), api(runner, std::move(q)) {
        api.mount(http);
        port = http.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { http.listen_after_bind(); });
        for (int i = 0; i < 500 && !http.is_running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    ~LiveServer() {
        http.stop();
        thread.join();
        fs::remove_all(dir);
    }

    static fs::path fresh(const std::string& name) {
        const auto p = fs::temp_directory_path() / ("sccr_server_" + name);
        fs::remove_all(p);
        return p;
    }

    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json body(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

json post(httplib::Client& c, const std::string& path, const json& j, int expect) {
    auto r = c.Post(path, j.dump(), "application/json");
    REQUIRE(r);
    INFO(r->body);
    CHECK(r->status == expect);
    return json::parse(r->body);
}

}  // namespace

TEST_CASE("scan, report and history endpoints", "[server]") {
    LiveServer s("reports");
    auto c = s.client();
    auto st = body(c.Get("/api/v1/status"));
    CHECK(st.at("t") == -1);
    CHECK(st.at("suppliers") == json{"s1", "s2"});
    CHECK(c.Get("/api/v1/report/latest")->status == 404);
    CHECK(c.Get("/api/v1/suppliers/ranking")->status == 404);

    const auto first = post(c, "/api/v1/scan", batch_json(0), 200);
    CHECK(first.at("t") == 0);
    CHECK(body(c.Get("/api/v1/report/latest")) == first);
    post(c, "/api/v1/scan", json{{"snapshots", batch_json(1, false)}}, 200);
    post(c, "/api/v1/scan", batch_json(2), 200);
    CHECK(body(c.Get("/api/v1/status")).at("t") == 2);
    CHECK(body(c.Get("/api/v1/report/history")).size() == 3);
    const auto window = body(c.Get("/api/v1/report/history?from=1&to=1"));
    REQUIRE(window.size() == 1);
    CHECK(window[0].at("t") == 1);

    const auto rank = body(c.Get("/api/v1/suppliers/ranking?key=IAP&window=2"));
    CHECK(rank.at("key") == "IAP");
    CHECK(rank.at("ranking").size() == 2);
    CHECK(c.Get("/api/v1/suppliers/ranking?key=XX")->status == 400);
}

TEST_CASE("HTTP and direct runs produce identical reports", "[server]") {
    LiveServer s("parity");
    auto c = s.client();
    const auto other = LiveServer::fresh("parity_direct");
    {
        sccr::engine::Runner direct(data_engine(), sccr::engine::StateStore(other));
        for (int j = 0; j < 5; ++j) {
            post(c, "/api/v1/scan", batch_json(j), 200);
            direct.step(batch(j));
        }
    }
    CHECK(slurp(s.runner.store().history_path()) == slurp(other / "history.jsonl"));
    fs::remove_all(other);
}

TEST_CASE("forecast endpoint equals the module forecast", "[server]") {
    LiveServer s("forecast");
    auto c = s.client();
    for (int j = 0; j < 6; ++j) post(c, "/api/v1/scan", batch_json(j), 200);
    const auto got = body(c.Get("/api/v1/forecast?indicator=GAP&steps=20"));
    const auto direct = sccr::dlm::forecast(s.runner.state().dlm.at("GAP"), 20, s.runner.engine().config().alpha);
    REQUIRE(got.at("forecasts").size() == 20);
    for (std::size_t k = 0; k < direct.size(); ++k) {
        CHECK(got.at("forecasts")[k] == sccr::io::forecast_to_json(direct[k]));
    }
    CHECK(body(c.Get("/api/v1/forecast?indicator=AP")).at("forecasts").size() == 20);
    CHECK(c.Get("/api/v1/forecast?indicator=NOPE")->status == 404);
    CHECK(c.Get("/api/v1/forecast")->status == 400);
    CHECK(c.Get("/api/v1/forecast?indicator=GAP&steps=0")->status == 400);
    CHECK(c.Get("/api/v1/forecast?indicator=GAP&steps=abc")->status == 400);
}

TEST_CASE("what-if is ephemeral", "[server]") {
    LiveServer s("whatif");
    auto c = s.client();
    for (int j = 0; j < 3; ++j) post(c, "/api/v1/scan", batch_json(j), 200);
    const auto state_before = slurp(s.runner.store().state_path());
    const auto history_before = slurp(s.runner.store().history_path());

    auto hypothetical = batch_json(3, false);
    hypothetical[1]["attacks"]["atk0"] = {5.0, 5.0};
    const auto r = post(c, "/api/v1/whatif",
                        json{{"snapshots", hypothetical}, {"sla", {{{"supplier", "s1"}, {"level", 0.01}}}}}, 200);
    CHECK(r.at("ephemeral") == true);
    CHECK(r.at("report").at("ephemeral") == true);
    CHECK(r.at("report").at("t") == 3);
    CHECK(r.at("ranking").at("ranking").size() == 2);
    CHECK(r.at("report").at("sla").size() == 1);
    CHECK(slurp(s.runner.store().state_path()) == state_before);
    CHECK(slurp(s.runner.store().history_path()) == history_before);
    CHECK(body(c.Get("/api/v1/status")).at("t") == 2);
}

TEST_CASE("SLA configuration and bad input", "[server]") {
    LiveServer s("sla");
    auto c = s.client();
    const auto hash = body(c.Get("/api/v1/status")).at("config_hash");
    const auto r = post(c, "/api/v1/sla/config",
                        json{{"sla", {{{"supplier", "s2"}, {"indicator", "IAP:s2"}, {"level", 0.05}, {"run_threshold", 2}}}}},
                        200);
    CHECK(r.at("sla").size() == 1);
    CHECK(r.at("config_hash") != hash);
    post(c, "/api/v1/sla/config", json{{"sla", {{{"supplier", "s9"}, {"level", 0.05}}}}}, 400);

    const auto rep = post(c, "/api/v1/scan", batch_json(0), 200);
    REQUIRE(rep.at("sla").size() == 1);
    CHECK(rep.at("sla")[0].at("indicator") == "IAP:s2");

    CHECK(c.Post("/api/v1/scan", "{oops", "application/json")->status == 400);
    auto missing = batch_json(1);
    missing.erase(2);
    post(c, "/api/v1/scan", missing, 400);
    CHECK(body(c.Get("/api/v1/status")).at("t") == 0);
}

TEST_CASE("elicitation session flow", "[server]") {
    const auto q = sccr::elicitation::questionnaire_from_json(sccr::io::read_json_file(kData + "/questionnaire.json"));
    const auto answers = sccr::io::read_json_file(kData + "/answers.json");
    const auto& e1 = answers.at("experts")[0].at("model_answers");
    {
        LiveServer bare("no_questionnaire");
        auto c = bare.client();
        post(c, "/api/v1/elicitation/session", json::object(), 400);
    }
    LiveServer s("elicitation", q);
    auto c = s.client();
    const auto open = post(c, "/api/v1/elicitation/session", json{{"tradeoffs", answers.at("tradeoffs")}}, 201);
    const auto id = open.at("session").get<std::string>();
    CHECK(open.at("complete") == false);
    CHECK(open.at("questions").size() == sccr::elicitation::question_list(q).size());

    post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"finalize", true}}, 400);
    post(c, "/api/v1/elicitation/answer", json{{"session", "nope"}, {"question", "atk0.p0"}, {"probability", 0.1}}, 404);
    post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"question", "atk0.p0"}, {"probability", 1.0}}, 400);

    json view = open;
    while (!view.at("next").is_null()) {
        const auto qid = view.at("next").at("id").get<std::string>();
        const double p = e1.at(qid).is_number() ? e1.at(qid).get<double>() : e1.at(qid).at("probability").get<double>();
        view = post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"question", qid}, {"probability", p}}, 200);
    }
    CHECK(view.at("complete") == true);
    CHECK(view.contains("feedback"));

    const auto done = post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"finalize", true}}, 200);
    sccr::elicitation::Session local(q, sccr::io::tradeoffs_from_json(answers.at("tradeoffs").at("environment")),
                                     sccr::io::tradeoffs_from_json(answers.at("tradeoffs").at("posture")));
    for (const auto& question : local.questions()) {
        const auto& v = e1.at(question.id);
        local.answer(question.id, v.is_number() ? v.get<double>() : v.at("probability").get<double>());
    }
    CHECK(done.at("model") == sccr::io::model_set_to_json(local.finalize().model));

    // An inconsistent check answer blocks finalizing unless forced.
    post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"question", "atk0.c1"}, {"probability", 0.01}}, 200);
    const auto refused = post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"finalize", true}}, 409);
    CHECK_FALSE(refused.at("feedback").empty());
    post(c, "/api/v1/elicitation/answer", json{{"session", id}, {"finalize", true}, {"force", true}}, 200);
}
