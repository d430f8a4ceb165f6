#pragma once

// Command implementations behind tools/sccr_cli. Each takes plain paths and
// options so tests can drive them without a process boundary.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccr/elicitation.hpp"
#include "sccr/elicitation_workflow.hpp"
#include "sccr/engine.hpp"
#include "sccr/pipeline.hpp"
#include "sccr/report.hpp"
#include "sccr/serialization.hpp"

namespace sccr::cli {

using json = nlohmann::json;

inline json calibrate(const std::string& seeds_path, const std::string& answers_path, double cutoff = 0.0) {
    const auto seeds = io::seeds_from_json(io::read_json_file(seeds_path));
    const auto answers = io::answers_from_json(io::read_json_file(answers_path));
    elicitation::CookeOptions opt;
    opt.calibration_cutoff = cutoff;
    return io::weights_to_json(elicitation::cooke_scores(seeds, answers.experts, opt));
}

struct ElicitOutput {
    json model;
    json consistency;
    bool consistent = true;
};

// Pools the panel's model answers (performance weights when given, equal
// weights otherwise) and inverts them into an attack model file.
inline ElicitOutput elicit(const std::string& questionnaire_path, const std::string& answers_path,
                           const std::optional<std::string>& weights_path) {
    const auto q = elicitation::questionnaire_from_json(io::read_json_file(questionnaire_path));
    const auto answers = io::answers_from_json(io::read_json_file(answers_path));
    const auto weights = weights_path ? io::weights_from_json(io::read_json_file(*weights_path))
                                      : elicitation::equal_weights(answers.experts);
    const auto pooled = elicitation::pool_answers(weights, answers.experts);
    const auto result =
        elicitation::build_model(q, pooled, answers.environment_tradeoffs, answers.posture_tradeoffs);
    ElicitOutput out;
    out.model = io::model_set_to_json(result.model);
    out.consistency = json::array();
    for (const auto& c : result.checks) {
        out.consistency.push_back(io::consistency_to_json(c));
        out.consistent = out.consistent && c.pass;
    }
    return out;
}

inline json fit_impacts(const std::string& spec_path) {
    return io::impact_model_to_json(io::impact_model_from_json(io::read_json_file(spec_path)));
}

inline std::string simulate(const std::string& scenario_path) {
    const auto sc = io::scenario_from_json(io::read_json_file(scenario_path));
    std::ostringstream out;
    for (std::int64_t j = 0; j < sc.steps; ++j) pipeline::write_scans(out, pipeline::simulate_scan(sc, j));
    return out.str();
}

// Default config when none is given: company and suppliers from the impact file.
inline engine::EngineConfig load_config(const std::optional<std::string>& config_path, const ImpactModel& impacts) {
    if (config_path) return engine::config_from_json(io::read_json_file(*config_path));
    engine::EngineConfig c;
    c.company = impacts.company_id;
    for (const auto& [id, _] : impacts.supplier_downtime) c.suppliers.push_back(id);
    return c;
}

inline engine::Engine load_engine(const std::string& model_path, const std::string& impacts_path,
                                  const std::optional<std::string>& config_path) {
    auto model = io::model_set_from_json(io::read_json_file(model_path));
    auto impacts = io::impact_model_from_json(io::read_json_file(impacts_path));
    auto config = load_config(config_path, impacts);
    return engine::Engine(std::move(config), std::move(model), std::move(impacts));
}

struct RunSummary {
    std::size_t cycles = 0;
    std::vector<RiskReport> reports;
};

// Feeds a scan stream through the engine, one cycle per time index. Scans at or
// before the stored time are skipped so a rerun over the same file resumes.
inline RunSummary run(const std::string& scans_path, engine::Runner& runner) {
    std::ifstream in(scans_path);
    if (!in) throw IoError("cannot open " + scans_path);
    const auto scans = pipeline::read_scans(in, runner.engine().schema());
    RunSummary s;
    for (const auto& batch : engine::group_by_time(scans)) {
        if (batch.front().t <= runner.state().t) continue;
        s.reports.push_back(runner.step(batch));
        ++s.cycles;
    }
    return s;
}

inline json forecast(const engine::EngineState& state, const std::string& indicator, int steps, double alpha) {
    auto it = state.dlm.find(indicator);
    if (it == state.dlm.end()) throw ValidationError("no forecasting model for indicator " + indicator);
    json fc = json::array();
    for (const auto& f : dlm::forecast(it->second, steps, alpha)) fc.push_back(io::forecast_to_json(f));
    return json{{"indicator", indicator}, {"origin", it->second.t}, {"forecasts", fc}};
}

inline json rank(const engine::StateStore& store, const std::string& key, std::size_t window) {
    const auto reports = store.reports();
    if (reports.empty()) throw ValidationError("no reports in " + store.history_path().string());
    const auto k = rank_key_from_string(key);
    return io::ranking_to_json(rank_suppliers(reports, k, window), k);
}

inline json sla_check(const engine::StateStore& store, const std::string& indicator, double level,
                      int run_threshold) {
    const auto reports = store.reports();
    if (reports.empty()) throw ValidationError("no reports in " + store.history_path().string());
    auto j = io::sla_report_to_json(::sccr::sla_check(indicator_series(reports, indicator), level, run_threshold));
    j["indicator"] = indicator;
    return j;
}

}  // namespace sccr::cli
