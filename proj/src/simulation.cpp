#include "tutor/simulation.hpp"

#include <algorithm>
#include <ctime>

#include "tutor/error.hpp"
#include "tutor/rng.hpp"

namespace tutor::sim {

namespace {

constexpr std::time_t kClockStart = 1767225600;  // 2026-01-01T00:00:00Z

std::string logical_time(std::uint64_t tick) {
    const std::time_t t = kClockStart + static_cast<std::time_t>(tick);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

double tier_weight(ModelTier tier) {
    switch (tier) {
        case ModelTier::Baseline: return 1.0 / 3.0;
        case ModelTier::Shallow: return 2.0 / 3.0;
        case ModelTier::Deep: return 1.0;
    }
    return 0.0;
}

std::vector<SimulatedStudent> make_cohort(const CohortOptions& options) {
    if (options.students == 0) throw Error("sim.students", "a cohort needs at least one student");
    std::vector<SimulatedStudent> out;
    for (std::size_t i = 0; i < options.students; ++i) {
        SimulatedStudent s;
        s.id = "sim-" + std::to_string(i);
        s.seed = derive_seed(options.seed, i);
        Rng rng(s.seed);
        s.ability = options.ability_low + (options.ability_high - options.ability_low) * uniform_unit(rng);
        s.responsiveness = options.responsiveness;
        out.push_back(std::move(s));
    }
    return out;
}

SimulationResult simulate(const core::TutorEngine& engine, const CohortOptions& options) {
    if (options.max_attempts == 0) throw Error("sim.attempts", "students need at least one attempt");
    SimulationResult result;
    std::uint64_t tick = 0;
    const auto& bank = engine.resources().bank;
    for (const auto& student : make_cohort(options)) {
        // Independent stream from the one that drew the ability.
        Rng rng(derive_seed(student.seed, 1));
        core::StudentRecord record;
        record.profile.id = student.id;
        for (const auto& ex : bank) {
            auto session = engine.open_session(student.id + ":" + ex.id, student.id, ex.id);
            double bonus = 0.0;
            auto log = [&](const core::StepResult& step) {
                result.records.push_back({step.turn, logical_time(tick++), engine.turn_seed(session.id, step.turn.sequence)});
                bonus = 0.0;
                if (step.turn.intervention && step.turn.intervention->tier)
                    bonus = student.responsiveness * tier_weight(*step.turn.intervention->tier);
            };
            if (bernoulli(rng, options.help_first)) log(engine.help(session, record));
            const bool latex = ex.expectations.empty();
            for (std::uint32_t k = 0; k < options.max_attempts && !session.state.terminal(); ++k) {
                const double p = std::clamp(student.ability + bonus, 0.0, 1.0);
                const bool success = bernoulli(rng, p);
                std::string answer = latex ? (success ? ex.math->latex : std::string(kWrongLatex))
                                           : (success ? ex.expectations.front() : std::string(kWrongText));
                log(engine.attempt(session, record, std::move(answer), latex));
            }
            if (!session.state.terminal()) log(engine.skip(session, record));
            result.states[session.id] = session.state;
        }
    }
    return result;
}

std::shared_ptr<core::TutorResources> with_seed(const core::TutorResources& base, std::uint64_t seed) {
    auto r = std::make_shared<core::TutorResources>(base);
    r->master_seed = seed;
    return r;
}

std::map<ModelTier, feedback::FeedbackModel> train_from_simulation(const core::TutorEngine& engine,
                                                                   const SimulationResult& run,
                                                                   const ml::ForestParams& params, std::uint64_t seed) {
    const auto turns = run.turns();
    std::map<ModelTier, feedback::FeedbackModel> models;
    for (auto tier : kAllTiers) {
        const auto examples = core::examples_from_log(engine, turns, tier);
        if (examples.empty()) throw Error("sim.training", "the warm-up run showed no scorable interventions");
        models.emplace(tier, feedback::train_feedback_model(examples, tier, params, seed));
    }
    return models;
}

}  // namespace tutor::sim
