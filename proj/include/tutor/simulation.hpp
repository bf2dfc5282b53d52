#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tutor/storage.hpp"
#include "tutor/tutoring.hpp"

namespace tutor::sim {

/// Success on an attempt is drawn with probability ability + bonus, clamped to [0, 1].
/// The bonus applies to the attempt right after an intervention of tier t and equals
/// responsiveness * tier_weight(t); untiered (stock) interventions give no bonus.
struct SimulatedStudent {
    std::string id;
    std::uint64_t seed = 0;
    double ability = 0.5;
    double responsiveness = 0.0;
};

double tier_weight(ModelTier tier);

struct CohortOptions {
    std::size_t students = 200;
    std::uint64_t seed = 0;
    double responsiveness = 0.6;
    double ability_low = 0.2;
    double ability_high = 0.6;
    std::uint32_t max_attempts = 3;
    double help_first = 0.1;  // probability of asking for help before the first attempt
};

std::vector<SimulatedStudent> make_cohort(const CohortOptions& options);

/// Wrong answers the simulator submits.
inline constexpr std::string_view kWrongText = "I am not sure.";
inline constexpr std::string_view kWrongLatex = "x = 0";

struct SimulationResult {
    std::vector<storage::LogRecord> records;
    std::map<std::string, core::SessionState> states;  // by session id

    std::vector<InteractionTurn> turns() const { return storage::turns_of(records); }
};

/// Runs every student through every exercise in bank order. The engine's master seed
/// drives intervention choices; the cohort seed drives the students. Timestamps are a
/// logical clock so reruns are byte-identical.
SimulationResult simulate(const core::TutorEngine& engine, const CohortOptions& options);

/// Resources whose master seed is replaced, for running a cohort under its own seed.
std::shared_ptr<core::TutorResources> with_seed(const core::TutorResources& base, std::uint64_t seed);

/// Trains one model per tier on the interventions of a random-policy run.
std::map<ModelTier, feedback::FeedbackModel> train_from_simulation(const core::TutorEngine& engine,
                                                                   const SimulationResult& run,
                                                                   const ml::ForestParams& params, std::uint64_t seed);

}  // namespace tutor::sim
