#pragma once

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tutor/domain.hpp"
#include "tutor/feedback.hpp"
#include "tutor/ml/decision_tree.hpp"

namespace tutor::storage {

inline constexpr std::string_view kExerciseSchema = "exercises/1";
inline constexpr std::string_view kLogSchema = "interactions/1";
inline constexpr std::string_view kModelFormat = "feedback-model/1";
inline constexpr std::string_view kExplanationModelFormat = "explanation-model/1";

std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it into place.
void write_file(const std::string& path, std::string_view contents);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

// ---------------------------------------------------------------------------
// Exercise bank: header line {"schema": "exercises/1"}, then one exercise per line.

nlohmann::ordered_json exercise_to_json(const Exercise& exercise);
Exercise exercise_from_json(const nlohmann::json& j);

std::vector<Exercise> parse_exercises(std::string_view contents);
std::string serialize_exercises(std::span<const Exercise> bank);
std::vector<Exercise> load_exercises(const std::string& path);
void save_exercises(const std::string& path, std::span<const Exercise> bank);

// ---------------------------------------------------------------------------
// Interaction log: header line {"schema": "interactions/1"}, then turns, ratings and
// session-opened lines {"session": {session_id, student_id, exercise_id}}.
// A rating line {"rating": {student_id, session_id, sequence, helpful}} attaches to an
// earlier turn that showed an intervention.

struct LogRecord {
    InteractionTurn turn;
    std::string timestamp;
    std::uint64_t seed = 0;

    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

struct Rating {
    std::string student_id;
    std::string session_id;
    std::uint64_t sequence = 0;
    bool helpful = false;
};

/// Written when a session is opened, so sessions without turns survive a restart.
struct SessionOpened {
    std::string session_id;
    std::string student_id;
    std::string exercise_id;

    friend bool operator==(const SessionOpened&, const SessionOpened&) = default;
};

nlohmann::ordered_json turn_to_json(const LogRecord& record);
LogRecord turn_from_json(const nlohmann::json& j);
std::string log_header_line();
std::string turn_line(const LogRecord& record);
std::string rating_line(const Rating& rating);
std::string session_line(const SessionOpened& opened);

/// Session-opened lines, in file order.
std::vector<SessionOpened> parse_session_lines(std::string_view contents);

/// Ratings are folded into the turns they refer to. Sequence numbers must increase
/// strictly within each (student, session); violations name the line.
std::vector<LogRecord> parse_log_records(std::string_view contents);
std::vector<LogRecord> load_log_records(const std::string& path);
std::vector<InteractionTurn> load_log(const std::string& path);
std::vector<InteractionTurn> turns_of(std::span<const LogRecord> records);

/// Serializes a whole log (header and turns; ratings are carried inside turns as the
/// helpful_rating field).
std::string serialize_log(std::span<const LogRecord> records);

/// Appends whole lines with single O_APPEND writes, so a reader never sees a partial
/// line. Creates the file with its header when missing or empty.
class LogWriter {
public:
    explicit LogWriter(std::string path);

    void append(const LogRecord& record);
    void append_rating(const Rating& rating);
    void append_session(const SessionOpened& opened);
    const std::string& path() const { return path_; }

private:
    void write_line(const std::string& line);

    std::string path_;
    std::mutex mutex_;
};

void append_turn(const std::string& path, const LogRecord& record);

// ---------------------------------------------------------------------------
// Model files

nlohmann::ordered_json model_to_json(const feedback::FeedbackModel& model);
/// Rejects files whose feature names do not hash to the stored schema hash, or whose
/// schema differs from the current one for the tier ("schema hash mismatch").
feedback::FeedbackModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const feedback::FeedbackModel& model);
feedback::FeedbackModel load_model(const std::string& path);

void save_explanation_model(const std::string& path, const ml::DecisionTree<double>& tree);
ml::DecisionTree<double> load_explanation_model(const std::string& path);

}  // namespace tutor::storage
