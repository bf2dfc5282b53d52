#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tutor {

struct MathExpectation {
    std::string latex;
    std::vector<std::string> functions;  // declared function symbols

    friend bool operator==(const MathExpectation&, const MathExpectation&) = default;
};

struct Exercise {
    std::string id;
    std::string question;
    std::vector<std::string> expectations;
    std::optional<MathExpectation> math;
    std::vector<std::string> tags;
    double difficulty = 0.5;

    friend bool operator==(const Exercise&, const Exercise&) = default;
};

enum class ModelTier { Baseline, Shallow, Deep };

inline constexpr ModelTier kAllTiers[] = {ModelTier::Baseline, ModelTier::Shallow, ModelTier::Deep};

std::string_view tier_name(ModelTier tier);
ModelTier parse_tier(std::string_view name);

struct TopicRecord {
    std::size_t attempted = 0;
    std::size_t correct = 0;

    double rate() const { return attempted == 0 ? 0.0 : static_cast<double>(correct) / attempted; }
    friend bool operator==(const TopicRecord&, const TopicRecord&) = default;
};

struct StudentProfile {
    std::string id;
    std::size_t attempted = 0;
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    std::size_t skips = 0;
    std::size_t exercises_seen = 0;
    std::map<std::string, TopicRecord> topics;
    double skill = 0.5;

    friend bool operator==(const StudentProfile&, const StudentProfile&) = default;
};

enum class EventKind { Attempt, Help, Skip };
enum class Grade { Correct, Incorrect };

std::string_view event_name(EventKind kind);
EventKind parse_event(std::string_view name);
std::string_view grade_name(Grade grade);
Grade parse_grade(std::string_view name);

/// Intervention variants. The last three are named by the tutoring flow but have no
/// generator; they are never emitted.
enum class InterventionType {
    TextHint,
    WikiExplanation,
    MathGapHint,
    MathDiffHint,
    Elaboration,
    ConceptTree,
    MultipleChoice,
};

std::string_view intervention_name(InterventionType type);
InterventionType parse_intervention(std::string_view name);
bool is_implemented(InterventionType type);

struct InterventionRecord {
    InterventionType type = InterventionType::TextHint;
    std::optional<ModelTier> tier;
    std::string content_id;
    std::string text;
    double score = 0.0;

    friend bool operator==(const InterventionRecord&, const InterventionRecord&) = default;
};

struct InteractionTurn {
    std::string student_id;
    std::string session_id;
    std::uint64_t sequence = 0;
    std::string exercise_id;
    /// For attempts, the 1-based attempt number; for help and skip, the number of the
    /// next attempt.
    std::uint32_t attempt_index = 1;
    EventKind event = EventKind::Attempt;
    std::string content;
    bool latex = false;
    std::optional<Grade> grade;
    std::optional<InterventionRecord> intervention;
    std::optional<bool> helpful_rating;

    /// Attempts already made on the exercise when this turn finished.
    std::uint32_t attempts_made() const { return event == EventKind::Attempt ? attempt_index : attempt_index - 1; }

    friend bool operator==(const InteractionTurn&, const InteractionTurn&) = default;
};

}  // namespace tutor
