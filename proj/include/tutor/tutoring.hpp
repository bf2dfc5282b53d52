#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tutor/domain.hpp"
#include "tutor/feedback.hpp"
#include "tutor/hint_generation.hpp"
#include "tutor/math_hints.hpp"
#include "tutor/wiki.hpp"

namespace tutor::core {

// ---------------------------------------------------------------------------
// Grading

inline constexpr double kDefaultGradeThreshold = 0.5;

struct GradeResult {
    Grade grade = Grade::Incorrect;
    double similarity = 0.0;                          // best TF-IDF cosine (text route)
    std::optional<math::EquivalenceVerdict> verdict;  // math route
    std::optional<std::string> parse_error;
};

/// Parse context for an exercise's equations: its declared functions, plus the free
/// symbols of its expectation as bound variables.
math::ParseContext math_context(const MathExpectation& expectation);

/// Text attempts: byte-equal to an expectation, or best TF-IDF cosine >= threshold.
/// LaTeX attempts: the selected parse is Equivalent to the expectation; Ambiguous and
/// unparsable attempts are Incorrect.
GradeResult grade_attempt(std::string_view attempt, const Exercise& exercise, bool latex,
                          const text::CorpusStats& stats, double threshold = kDefaultGradeThreshold,
                          std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Session state machine

enum class Phase { AwaitingAttempt, InterventionShown, Solved, Skipped };

std::string_view phase_name(Phase phase);
Phase parse_phase(std::string_view name);

struct SessionState {
    Phase phase = Phase::AwaitingAttempt;
    std::string exercise_id;
    std::uint32_t attempt_index = 1;  // number of the next attempt

    bool terminal() const { return phase == Phase::Solved || phase == Phase::Skipped; }
    friend bool operator==(const SessionState&, const SessionState&) = default;
};

/// Attempt(Correct) -> Solved; Attempt(Incorrect) or Help -> InterventionShown; Skip ->
/// Skipped. Solved and Skipped accept nothing. An incorrect attempt advances the
/// attempt index.
SessionState advance_session(const SessionState& state, EventKind event, std::optional<Grade> grade = std::nullopt);

/// Counters and topic rates; skill follows 0.9 * skill + 0.1 * correct on attempts.
/// exercises_seen counts first attempts and skips before any attempt.
StudentProfile update_profile(StudentProfile profile, const InteractionTurn& turn, const Exercise* exercise = nullptr);

// ---------------------------------------------------------------------------
// Interventions

enum class Mode { Experiment, Production };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

inline constexpr double kZpdHalfWidth = 0.35;
/// Score given to candidates that no model scores (math hints, or every candidate when
/// no model is loaded).
inline constexpr double kNeutralScore = 0.5;
inline constexpr std::string_view kStockHint = "Re-read the question and identify exactly what it asks for.";

struct Intervention {
    InterventionType type = InterventionType::TextHint;
    std::optional<ModelTier> tier;
    std::string content_id;
    std::string text;
    double score = 0.0;

    InterventionRecord record() const { return {type, tier, content_id, text, score}; }
};

/// Per-exercise material that does not depend on the student.
struct ExerciseMaterial {
    std::vector<hints::HintCandidate> hints;
    std::optional<wiki::ExplanationCandidate> explanation;
    std::optional<math::Expr> math_expectation;
};

struct SelectionInput {
    const Exercise* exercise = nullptr;
    const ExerciseMaterial* material = nullptr;
    feedback::StudentState student;
    const InteractionTurn* last_turn = nullptr;  // incorrect attempt or help request
    std::optional<math::DiffHint> diff;          // from grading a LaTeX attempt
};

/// Score band around the skill estimate, clamped to [0, 1].
std::pair<double, double> zpd_band(double skill);

/// Builds a candidate pool per tier (top text hint, wiki explanation, math hint), keeps
/// those inside the ZPD band unless that empties the tier's pool, then picks a tier
/// uniformly at random (experiment) or the best score overall (production).
Intervention select_intervention(const SelectionInput& input, const std::map<ModelTier, feedback::FeedbackModel>& models,
                                 const feedback::FeatureContext& features, Mode mode, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Engine

struct TutorResources {
    std::vector<Exercise> bank;
    feedback::FeatureContext features;
    std::map<ModelTier, feedback::FeedbackModel> models;
    std::optional<wiki::ArticleIndex> wiki;
    std::optional<ml::DecisionTree<double>> wiki_model;
    Mode mode = Mode::Experiment;
    std::uint64_t master_seed = 0;
    double grade_threshold = kDefaultGradeThreshold;
};

struct StudentRecord {
    StudentProfile profile;
    std::vector<InteractionTurn> history;
};

struct Session {
    std::string id;
    std::string student_id;
    SessionState state;
    std::uint64_t next_sequence = 1;
};

struct StepResult {
    InteractionTurn turn;
    SessionState state;
    std::optional<GradeResult> grade;
};

/// Applies events to sessions. Holds only immutable resources, so one engine may serve
/// many sessions concurrently as long as each session and student record has a single
/// writer.
class TutorEngine {
public:
    explicit TutorEngine(std::shared_ptr<const TutorResources> resources);

    const TutorResources& resources() const { return *resources_; }
    const Exercise& exercise(std::string_view id) const;
    const ExerciseMaterial& material(std::string_view exercise_id) const;

    Session open_session(std::string session_id, std::string student_id, std::string exercise_id) const;

    StepResult attempt(Session& session, StudentRecord& student, std::string content, bool latex) const;
    StepResult help(Session& session, StudentRecord& student) const;
    StepResult skip(Session& session, StudentRecord& student) const;

    /// Seed for the intervention at a given turn; depends only on the master seed,
    /// session id and sequence number.
    std::uint64_t turn_seed(std::string_view session_id, std::uint64_t sequence) const;

private:
    InteractionTurn begin_turn(const Session& session, EventKind event) const;
    StepResult finish(Session& session, StudentRecord& student, InteractionTurn turn,
                      std::optional<GradeResult> grade) const;

    std::shared_ptr<const TutorResources> resources_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
    std::vector<ExerciseMaterial> materials_;
};

/// Keywords used to look up a wiki explanation: question keywords, then topic tags.
std::vector<std::string> explanation_keywords(const Exercise& exercise);

/// Re-applies every event of a log to fresh sessions and compares each produced turn
/// with the logged one. Returns the final state of every session, keyed by session id.
struct ReplayResult {
    std::map<std::string, SessionState> states;
    std::vector<InteractionTurn> turns;
    std::size_t mismatches = 0;
    std::optional<std::string> first_mismatch;
};

ReplayResult replay_log(const TutorEngine& engine, std::span<const InteractionTurn> log);

/// Labelled examples from a log for one tier: every text hint or explanation shown is
/// re-featurized with the student's state at that moment; the label is whether the
/// student's next attempt on that exercise was correct. Interventions never followed
/// by an attempt are left out.
std::vector<feedback::TrainingExample> examples_from_log(const TutorEngine& engine, std::span<const InteractionTurn> log,
                                                         ModelTier tier);

}  // namespace tutor::core
