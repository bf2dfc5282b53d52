#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tutor/domain.hpp"

namespace tutor::analytics {

enum class AttemptFilter { AllAttempts, BeforeSecondAttempt };

inline constexpr AttemptFilter kAllFilters[] = {AttemptFilter::AllAttempts, AttemptFilter::BeforeSecondAttempt};

std::string_view filter_name(AttemptFilter filter);
AttemptFilter parse_filter(std::string_view name);

struct Gain {
    std::size_t successes = 0;
    std::size_t trials = 0;
    double proportion = 0.0;
};

/// A trial is an intervention of the tier; it succeeds when the next attempt by the same
/// student on the same exercise is graded Correct. BeforeSecondAttempt keeps interventions
/// shown while at most one attempt had been made. Throws "no trials" when none qualify.
Gain learning_gain(std::span<const InteractionTurn> log, ModelTier tier, AttemptFilter filter);

struct Interval {
    double lower = 0.0;
    double upper = 1.0;
};

/// Exact binomial interval from beta quantiles.
Interval clopper_pearson_ci(std::size_t successes, std::size_t trials, double level = 0.95);

struct ZTestResult {
    double z = 0.0;
    double p_one_tailed = 0.5;  // P(Z >= z): evidence that group 1 beats group 2
    double p_two_tailed = 1.0;
    double pooled = 0.0;
};

/// Pooled two-proportion z-test. Throws when the pooled proportion is 0 or 1.
ZTestResult two_proportion_ztest(std::size_t s1, std::size_t n1, std::size_t s2, std::size_t n2);

/// Share of (student, exercise) pairs with a rated intervention where at least one
/// rating was helpful.
double helpfulness_rate(std::span<const InteractionTurn> log);

struct Cell {
    Gain gain;
    Interval ci;
};

struct PairTest {
    ModelTier first;   // higher tier
    ModelTier second;  // lower tier
    AttemptFilter filter;
    std::optional<ZTestResult> result;  // empty when a side has no trials or variance is zero
};

struct LearningGainReport {
    std::map<std::pair<ModelTier, AttemptFilter>, std::optional<Cell>> cells;
    std::vector<PairTest> tests;
    std::optional<double> helpfulness;
};

LearningGainReport build_report(std::span<const InteractionTurn> log);

nlohmann::json to_json(const LearningGainReport& report);
/// Tier rows by {All Attempts, Before Second Attempt} columns, percentages with CIs.
std::string to_table(const LearningGainReport& report);

}  // namespace tutor::analytics
