#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sccr/cli.hpp"
#include "sccr/server.hpp"

namespace {

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << "\n";
    } else {
        sccr::io::write_json_file(out, j);
    }
}

std::optional<std::string> opt(const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Supply-chain cyber-risk engine"};
    app.require_subcommand(1);

    std::string seeds, answers, questionnaire, weights, out, report, spec, scenario;
    std::string scans, model, impacts, config, state = "state", csv, indicator, key = "IR";
    double cutoff = 0.0, alpha = 0.05, level = 0.0;
    int steps = 20, run_threshold = 3, port = 8787;
    std::size_t window = 1;
    std::string host = "127.0.0.1";

    auto* cal = app.add_subcommand("calibrate", "Cooke performance weights from seed questions");
    cal->add_option("--seeds", seeds, "seed question file")->required()->check(CLI::ExistingFile);
    cal->add_option("--answers", answers, "expert answers file")->required()->check(CLI::ExistingFile);
    cal->add_option("--cutoff", cutoff, "calibration cutoff");
    cal->add_option("--out", out, "weights output (stdout when absent)");

    auto* eli = app.add_subcommand("elicit", "Attack model file from pooled expert answers");
    eli->add_option("--questionnaire", questionnaire)->required()->check(CLI::ExistingFile);
    eli->add_option("--answers", answers)->required()->check(CLI::ExistingFile);
    eli->add_option("--weights", weights, "weights from calibrate (equal weights when absent)")
        ->check(CLI::ExistingFile);
    eli->add_option("--out", out, "model file output")->required();
    eli->add_option("--report", report, "consistency report output (stdout when absent)");

    auto* fit = app.add_subcommand("fit-impacts", "Fit downtime and reputation distributions");
    fit->add_option("--spec", spec, "impact file with quantile blocks")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", out);

    auto* sim = app.add_subcommand("simulate", "Synthetic scan stream from a scenario");
    sim->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "scans JSONL output")->required();

    auto* run = app.add_subcommand("run", "Run the operation loop over a scan stream");
    run->add_option("--scans", scans)->required()->check(CLI::ExistingFile);
    run->add_option("--model", model)->required()->check(CLI::ExistingFile);
    run->add_option("--impacts", impacts)->required()->check(CLI::ExistingFile);
    run->add_option("--config", config)->check(CLI::ExistingFile);
    run->add_option("--state", state, "state directory");
    run->add_option("--out", out, "reports of this run as JSONL");
    run->add_option("--csv", csv, "plot data CSV of the full history");

    auto* fc = app.add_subcommand("forecast", "k-step forecasts for one indicator");
    fc->add_option("--state", state);
    fc->add_option("--indicator", indicator)->required();
    fc->add_option("--steps", steps)->check(CLI::Range(1, 1000));
    fc->add_option("--alpha", alpha)->check(CLI::Range(1e-9, 1.0 - 1e-9));
    fc->add_option("--out", out);

    auto* rk = app.add_subcommand("rank", "Rank suppliers by induced risk");
    rk->add_option("--state", state);
    rk->add_option("--key", key, "IR or IAP")->check(CLI::IsMember({"IR", "IAP"}));
    rk->add_option("--window", window, "average over the last N reports");
    rk->add_option("--out", out);

    auto* sla = app.add_subcommand("sla-check", "Violations of a maximum level on an indicator history");
    sla->add_option("--state", state);
    sla->add_option("--indicator", indicator)->required();
    sla->add_option("--level", level)->required();
    sla->add_option("--run-threshold", run_threshold)->check(CLI::PositiveNumber);
    sla->add_option("--out", out);

    auto* srv = app.add_subcommand("serve", "Serve the HTTP API");
    srv->add_option("--model", model)->required()->check(CLI::ExistingFile);
    srv->add_option("--impacts", impacts)->required()->check(CLI::ExistingFile);
    srv->add_option("--config", config)->check(CLI::ExistingFile);
    srv->add_option("--questionnaire", questionnaire)->check(CLI::ExistingFile);
    srv->add_option("--state", state);
    srv->add_option("--host", host);
    srv->add_option("--port", port)->check(CLI::Range(1, 65535));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cal) {
            emit(sccr::cli::calibrate(seeds, answers, cutoff), out);
        } else if (*eli) {
            const auto r = sccr::cli::elicit(questionnaire, answers, opt(weights));
            sccr::io::write_json_file(out, r.model);
            emit(r.consistency, report);
            if (!r.consistent) std::cerr << "warning: some consistency checks exceed the tolerance\n";
        } else if (*fit) {
            emit(sccr::cli::fit_impacts(spec), out);
        } else if (*sim) {
            sccr::io::write_text_file(out, sccr::cli::simulate(scenario));
        } else if (*run) {
            sccr::engine::Runner runner(sccr::cli::load_engine(model, impacts, opt(config)),
                                        sccr::engine::StateStore(state));
            const auto summary = sccr::cli::run(scans, runner);
            if (!out.empty()) {
                std::string text;
                for (const auto& r : summary.reports) text += sccr::io::report_to_json(r).dump() + "\n";
                sccr::io::write_text_file(out, text);
            }
            if (!csv.empty()) {
                sccr::io::write_text_file(csv, sccr::engine::reports_to_csv(runner.store().reports(),
                                                                            runner.engine().config().suppliers));
            }
            std::cerr << summary.cycles << " cycles, last t=" << runner.state().t << "\n";
        } else if (*fc) {
            emit(sccr::cli::forecast(sccr::engine::StateStore(state).load(), indicator, steps, alpha), out);
        } else if (*rk) {
            emit(sccr::cli::rank(sccr::engine::StateStore(state), key, window), out);
        } else if (*sla) {
            emit(sccr::cli::sla_check(sccr::engine::StateStore(state), indicator, level, run_threshold), out);
        } else if (*srv) {
            sccr::engine::Runner runner(sccr::cli::load_engine(model, impacts, opt(config)),
                                        sccr::engine::StateStore(state));
            std::optional<sccr::elicitation::Questionnaire> q;
            if (!questionnaire.empty()) {
                q = sccr::elicitation::questionnaire_from_json(sccr::io::read_json_file(questionnaire));
            }
            sccr::server::Api api(runner, q);
            httplib::Server http;
            api.mount(http);
            std::cerr << "listening on " << host << ":" << port << "\n";
            if (!http.listen(host, port)) {
                std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
                return 2;
            }
        }
    } catch (const sccr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
