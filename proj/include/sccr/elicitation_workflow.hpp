#pragma once

// Turns a questionnaire plus pooled expert answers into an attack model file and
// a list of consistency reports. The same routine backs batch `elicit` runs and
// interactive wizard sessions.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccr/attack_model.hpp"
#include "sccr/elicitation.hpp"
#include "sccr/serialization.hpp"

namespace sccr::elicitation {

struct ProbeCheck {
    std::string id;
    std::vector<double> severity;
    double posture = 0.0;
    double environment = 0.0;
};

struct AttackQuestions {
    std::string attack_id;
    std::string intercept_question;
    std::vector<std::string> level_questions;  // one per severity level
    double level_probe = 1.0;                   // count placed at the probed level
    std::string transfer_question;
    std::vector<ProbeCheck> checks;
};

struct IndexQuestions {
    std::string reference_attack;
    std::string posture_question;
    double posture_reference = 1.0;
    std::string environment_question;
    double environment_reference = 1.0;
    std::vector<std::pair<std::string, ProbeCheck>> checks;  // (attack id, check)
};

struct Questionnaire {
    std::vector<AttackQuestions> attacks;
    std::optional<IndexQuestions> index;
    std::size_t environment_variables = 1;
    std::size_t posture_variables = 1;
    double tolerance_logit = kDefaultConsistencyTolerance;
};

struct Question {
    std::string id;
    std::string kind;  // intercept | level | transfer | check | posture | environment
    std::string attack_id;
    std::string prompt;
};

struct ElicitationResult {
    AttackModelSet model;
    std::vector<ConsistencyReport> checks;
    std::map<std::string, double> pooled;  // question id -> pooled probability
};

inline Questionnaire questionnaire_from_json(const nlohmann::json& j) {
    using io::check_keys;
    using io::get;
    const std::string ctx = "questionnaire";
    check_keys(j, {"attack_types"}, {"index", "environment_variables", "posture_variables", "tolerance_logit"}, ctx);
    Questionnaire q;
    auto read_check = [](const nlohmann::json& c, const std::string& cctx) {
        check_keys(c, {"id", "severity"}, {"posture", "environment", "attack"}, cctx);
        ProbeCheck p;
        p.id = get<std::string>(c, "id", cctx);
        p.severity = get<std::vector<double>>(c, "severity", cctx);
        if (c.contains("posture")) p.posture = get<double>(c, "posture", cctx);
        if (c.contains("environment")) p.environment = get<double>(c, "environment", cctx);
        return p;
    };
    for (const auto& a : j.at("attack_types")) {
        check_keys(a, {"id", "intercept_question", "level_questions", "transfer_question"},
                   {"level_probe", "checks"}, "questionnaire attack type");
        AttackQuestions aq;
        aq.attack_id = get<std::string>(a, "id", ctx);
        const std::string actx = "questionnaire attack type " + aq.attack_id;
        aq.intercept_question = get<std::string>(a, "intercept_question", actx);
        aq.level_questions = get<std::vector<std::string>>(a, "level_questions", actx);
        aq.transfer_question = get<std::string>(a, "transfer_question", actx);
        if (a.contains("level_probe")) aq.level_probe = get<double>(a, "level_probe", actx);
        if (aq.level_questions.empty()) throw ValidationError(actx + ": needs at least one level question");
        if (a.contains("checks")) {
            for (const auto& c : a.at("checks")) {
                auto p = read_check(c, actx + " check");
                if (p.severity.size() != aq.level_questions.size()) {
                    throw ValidationError(actx + ": check " + p.id + " has the wrong severity length");
                }
                aq.checks.push_back(std::move(p));
            }
        }
        q.attacks.push_back(std::move(aq));
    }
    if (j.contains("environment_variables")) q.environment_variables = get<std::size_t>(j, "environment_variables", ctx);
    if (j.contains("posture_variables")) q.posture_variables = get<std::size_t>(j, "posture_variables", ctx);
    if (j.contains("tolerance_logit")) q.tolerance_logit = get<double>(j, "tolerance_logit", ctx);
    if (j.contains("index")) {
        const auto& ix = j.at("index");
        const std::string ictx = "questionnaire index";
        check_keys(ix, {"reference_attack", "posture_question", "posture_reference", "environment_question",
                        "environment_reference"},
                   {"checks"}, ictx);
        IndexQuestions iq;
        iq.reference_attack = get<std::string>(ix, "reference_attack", ictx);
        iq.posture_question = get<std::string>(ix, "posture_question", ictx);
        iq.posture_reference = get<double>(ix, "posture_reference", ictx);
        iq.environment_question = get<std::string>(ix, "environment_question", ictx);
        iq.environment_reference = get<double>(ix, "environment_reference", ictx);
        if (ix.contains("checks")) {
            for (const auto& c : ix.at("checks")) {
                const auto attack = c.contains("attack") ? get<std::string>(c, "attack", ictx) : iq.reference_attack;
                iq.checks.emplace_back(attack, read_check(c, ictx + " check"));
            }
        }
        q.index = std::move(iq);
    }
    return q;
}

// Question order: per attack type intercept, levels, consistency checks,
// transfer; then the posture and environment coefficients and their checks.
inline std::vector<Question> question_list(const Questionnaire& q) {
    std::vector<Question> out;
    for (const auto& a : q.attacks) {
        out.push_back({a.intercept_question, "intercept", a.attack_id,
                       "The scan detects no evidence of " + a.attack_id +
                           ". What is the probability of a sufficiently harmful attack of this type?"});
        for (std::size_t i = 0; i < a.level_questions.size(); ++i) {
            out.push_back({a.level_questions[i], "level", a.attack_id,
                           "The scan detects " + std::to_string(a.level_probe) + " at severity level " +
                               std::to_string(i + 1) + " of " + a.attack_id +
                               " and nothing else. What is the probability of a sufficiently harmful attack?"});
        }
        for (const auto& c : a.checks) {
            out.push_back({c.id, "check", a.attack_id,
                           "Consistency check for " + a.attack_id + ": what is the attack probability for the "
                                                                    "stated severity profile?"});
        }
        out.push_back({a.transfer_question, "transfer", a.attack_id,
                       "A supplier suffers a " + a.attack_id +
                           " attack. What is the probability that it is leveraged into an attack on the company?"});
    }
    if (q.index) {
        out.push_back({q.index->posture_question, "posture", q.index->reference_attack,
                       "All severity levels of " + q.index->reference_attack + " read 1 and the posture index is " +
                           std::to_string(q.index->posture_reference) + ". What is the attack probability?"});
        out.push_back({q.index->environment_question, "environment", q.index->reference_attack,
                       "All severity levels of " + q.index->reference_attack +
                           " read 1 and the environment index is " +
                           std::to_string(q.index->environment_reference) + ". What is the attack probability?"});
        for (const auto& [attack, c] : q.index->checks) {
            out.push_back({c.id, "check", attack, "Consistency check on the index coefficients."});
        }
    }
    return out;
}

namespace detail {

// Full coefficient vector [intercept, severity..., posture, environment].
inline std::vector<double> coefficient_vector(const AttackVectorModel& m, const IndexCoefficients& ix) {
    std::vector<double> c{m.intercept};
    c.insert(c.end(), m.severity.begin(), m.severity.end());
    c.push_back(ix.posture);
    c.push_back(ix.environment);
    return c;
}

inline std::vector<double> probe_vector(const ProbeCheck& c) {
    std::vector<double> p{1.0};
    p.insert(p.end(), c.severity.begin(), c.severity.end());
    p.push_back(c.posture);
    p.push_back(c.environment);
    return p;
}

}  // namespace detail

// Builds the model from pooled probabilities (question id -> probability).
// Check questions that are absent are skipped; all others are required.
inline ElicitationResult build_model(const Questionnaire& q, const std::map<std::string, double>& pooled,
                                     const std::vector<TradeoffJudgment>& env_tradeoffs,
                                     const std::vector<TradeoffJudgment>& posture_tradeoffs) {
    auto need = [&](const std::string& id) {
        auto it = pooled.find(id);
        if (it == pooled.end()) throw ValidationError("no answer for question " + id);
        return it->second;
    };
    if (q.attacks.empty()) throw ValidationError("questionnaire defines no attack types");
    ElicitationResult r;
    r.pooled = pooled;
    for (const auto& a : q.attacks) {
        AttackVectorModel m;
        m.attack_id = a.attack_id;
        m.intercept = invert_intercept(need(a.intercept_question));
        const std::size_t h = a.level_questions.size();
        m.severity.assign(h, 0.0);
        std::vector<double> coeffs{m.intercept};
        coeffs.resize(h + 1, 0.0);
        for (std::size_t i = 0; i < h; ++i) {
            std::vector<double> probe(h + 1, 0.0);
            probe[0] = 1.0;
            probe[i + 1] = a.level_probe;
            m.severity[i] = invert_level_coefficient(need(a.level_questions[i]), coeffs, probe, i + 1);
        }
        m.transfer_probability = need(a.transfer_question);
        r.model.attacks.push_back(std::move(m));
    }

    if (q.index) {
        const auto* ref = r.model.find(q.index->reference_attack);
        if (!ref) throw ValidationError("index reference attack " + q.index->reference_attack + " is not defined");
        const std::size_t h = ref->levels();
        auto base = detail::coefficient_vector(*ref, {});
        std::vector<double> probe(h + 3, 1.0);
        probe[h + 1] = q.index->posture_reference;
        probe[h + 2] = 0.0;
        r.model.index.posture = invert_level_coefficient(need(q.index->posture_question), base, probe, h + 1);
        base[h + 1] = r.model.index.posture;
        probe[h + 1] = 0.0;
        probe[h + 2] = q.index->environment_reference;
        r.model.index.environment =
            invert_level_coefficient(need(q.index->environment_question), base, probe, h + 2);
    }

    r.model.weights.environment = solve_tradeoff_weights(env_tradeoffs, q.environment_variables);
    r.model.weights.posture = solve_tradeoff_weights(posture_tradeoffs, q.posture_variables);

    auto run_check = [&](const AttackVectorModel& m, const ProbeCheck& c) {
        auto it = pooled.find(c.id);
        if (it == pooled.end()) return;
        if (c.severity.size() != m.levels()) throw ValidationError("check " + c.id + " has the wrong severity length");
        r.checks.push_back(consistency_check(c.id, detail::probe_vector(c), it->second,
                                             detail::coefficient_vector(m, r.model.index), q.tolerance_logit));
    };
    for (const auto& a : q.attacks) {
        for (const auto& c : a.checks) run_check(*r.model.find(a.attack_id), c);
    }
    if (q.index) {
        for (const auto& [attack, c] : q.index->checks) {
            const auto* m = r.model.find(attack);
            if (!m) throw ValidationError("check " + c.id + " names unknown attack type " + attack);
            run_check(*m, c);
        }
    }
    validate(r.model);
    return r;
}

// Pools every model question over the panel with the given weights.
inline std::map<std::string, double> pool_answers(const ExpertWeights& weights,
                                                  const std::vector<ExpertAnswerSet>& experts) {
    std::map<std::string, std::map<std::string, double>> by_question;
    for (const auto& e : experts) {
        for (const auto& [qid, p] : e.model_answers) by_question[qid][e.expert_id] = p;
    }
    std::map<std::string, double> pooled;
    for (const auto& [qid, answers] : by_question) pooled[qid] = aggregate_probability(weights, answers);
    return pooled;
}

inline ExpertWeights equal_weights(const std::vector<ExpertAnswerSet>& experts) {
    if (experts.empty()) throw ValidationError("answers file lists no experts");
    ExpertWeights w;
    for (const auto& e : experts) w.weights[e.expert_id] = 1.0 / static_cast<double>(experts.size());
    return w;
}

inline nlohmann::json question_to_json(const Question& q) {
    return {{"id", q.id}, {"kind", q.kind}, {"attack", q.attack_id}, {"prompt", q.prompt}};
}

// Server-side wizard state: one respondent answering the questionnaire in
// order, with consistency feedback as soon as a check becomes computable.
class Session {
public:
    explicit Session(Questionnaire q, std::vector<TradeoffJudgment> env = {},
                     std::vector<TradeoffJudgment> posture = {})
        : questionnaire_(std::move(q)), questions_(question_list(questionnaire_)),
          env_tradeoffs_(std::move(env)), posture_tradeoffs_(std::move(posture)) {}

    const std::vector<Question>& questions() const { return questions_; }
    const std::map<std::string, double>& answers() const { return answers_; }

    std::optional<Question> next_question() const {
        for (const auto& q : questions_) {
            if (!answers_.contains(q.id)) return q;
        }
        return std::nullopt;
    }

    // Records (or revises) an answer and returns the consistency reports that
    // can be computed from the answers given so far.
    std::vector<ConsistencyReport> answer(const std::string& question_id, double p) {
        bool known = false;
        for (const auto& q : questions_) known = known || q.id == question_id;
        if (!known) throw ValidationError("unknown question " + question_id);
        if (!(p > 0.0 && p < 1.0)) {
            throw ValidationError("answers must lie strictly inside (0,1); 0 and 1 are not identifiable");
        }
        answers_[question_id] = p;
        return feedback();
    }

    std::vector<ConsistencyReport> feedback() const {
        // Only questions whose coefficients are all answered can be checked.
        std::map<std::string, double> usable;
        for (const auto& q : questions_) {
            if (q.kind == "check") continue;
            auto it = answers_.find(q.id);
            if (it != answers_.end()) usable[q.id] = it->second;
        }
        std::vector<ConsistencyReport> out;
        for (const auto& a : questionnaire_.attacks) {
            Questionnaire single;
            single.attacks = {a};
            single.tolerance_logit = questionnaire_.tolerance_logit;
            std::map<std::string, double> pooled;
            bool complete = usable.contains(a.intercept_question) && usable.contains(a.transfer_question);
            for (const auto& l : a.level_questions) complete = complete && usable.contains(l);
            if (!complete) continue;
            for (const auto& [k, v] : usable) pooled[k] = v;
            for (const auto& c : a.checks) {
                if (answers_.contains(c.id)) pooled[c.id] = answers_.at(c.id);
            }
            auto r = build_model(single, pooled, {}, {});
            out.insert(out.end(), r.checks.begin(), r.checks.end());
        }
        if (complete()) {
            auto all = build_model(questionnaire_, answers_, env_tradeoffs_, posture_tradeoffs_);
            if (questionnaire_.index) {
                for (const auto& c : all.checks) {
                    for (const auto& [attack, ic] : questionnaire_.index->checks) {
                        if (ic.id == c.check_id) out.push_back(c);
                    }
                }
            }
        }
        return out;
    }

    bool complete() const {
        for (const auto& q : questions_) {
            if (q.kind != "check" && !answers_.contains(q.id)) return false;
        }
        return true;
    }

    ElicitationResult finalize() const {
        if (!complete()) throw ValidationError("session has unanswered questions");
        return build_model(questionnaire_, answers_, env_tradeoffs_, posture_tradeoffs_);
    }

private:
    Questionnaire questionnaire_;
    std::vector<Question> questions_;
    std::vector<TradeoffJudgment> env_tradeoffs_;
    std::vector<TradeoffJudgment> posture_tradeoffs_;
    std::map<std::string, double> answers_;
};

}  // namespace sccr::elicitation
