#include "tutor/storage.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tutor/error.hpp"

namespace tutor::storage {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string at_line(std::size_t line, const std::string& msg) { return "line " + std::to_string(line) + ": " + msg; }

// Calls fn(line_no, line) for every non-blank line.
template <typename Fn>
void for_each_line(std::string_view contents, Fn fn) {
    std::size_t pos = 0, line_no = 0;
    while (pos < contents.size()) {
        const auto nl = contents.find('\n', pos);
        const auto end = nl == std::string_view::npos ? contents.size() : nl;
        auto line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        fn(line_no, line);
    }
}

// First non-blank line must be the schema header.
void check_header(std::size_t line_no, const json& j, std::string_view schema, const char* code) {
    if (!j.is_object() || !j.contains("schema"))
        throw Error(code, at_line(line_no, "missing schema header {\"schema\": \"" + std::string(schema) + "\"}"));
    const auto found = j.at("schema").get<std::string>();
    if (found != schema)
        throw Error(code, at_line(line_no, "schema mismatch: expected " + std::string(schema) + ", found " + found));
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("storage.io", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("storage.io", "cannot write " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("storage.io", "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("storage.io", "cannot replace " + path + ": " + ec.message());
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Exercises

ojson exercise_to_json(const Exercise& ex) {
    ojson j;
    j["id"] = ex.id;
    j["question"] = ex.question;
    j["expectations"] = ex.expectations;
    if (ex.math) j["math"] = {{"latex", ex.math->latex}, {"functions", ex.math->functions}};
    j["tags"] = ex.tags;
    j["difficulty"] = ex.difficulty;
    return j;
}

Exercise exercise_from_json(const json& j) {
    Exercise ex;
    ex.id = j.at("id").get<std::string>();
    ex.question = j.at("question").get<std::string>();
    if (j.contains("expectations")) ex.expectations = j.at("expectations").get<std::vector<std::string>>();
    if (j.contains("math") && !j.at("math").is_null()) {
        const auto& m = j.at("math");
        MathExpectation me;
        me.latex = m.at("latex").get<std::string>();
        if (m.contains("functions")) me.functions = m.at("functions").get<std::vector<std::string>>();
        ex.math = std::move(me);
    }
    if (j.contains("tags")) ex.tags = j.at("tags").get<std::vector<std::string>>();
    if (j.contains("difficulty")) ex.difficulty = j.at("difficulty").get<double>();
    if (ex.id.empty()) throw Error("storage.exercise", "exercise id is empty");
    if (ex.expectations.empty() && !ex.math)
        throw Error("storage.exercise", "exercise '" + ex.id + "' has neither text nor math expectations");
    return ex;
}

std::vector<Exercise> parse_exercises(std::string_view contents) {
    std::vector<Exercise> bank;
    std::set<std::string> ids;
    bool header = false;
    for_each_line(contents, [&](std::size_t n, std::string_view line) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("storage.exercises", at_line(n, e.what()));
        }
        if (!header) {
            check_header(n, j, kExerciseSchema, "storage.exercises");
            header = true;
            return;
        }
        Exercise ex;
        try {
            ex = exercise_from_json(j);
        } catch (const json::exception& e) {
            throw Error("storage.exercises", at_line(n, e.what()));
        } catch (const Error& e) {
            throw Error("storage.exercises", at_line(n, e.what()));
        }
        if (!ids.insert(ex.id).second) throw Error("storage.exercises", at_line(n, "duplicate exercise id '" + ex.id + "'"));
        bank.push_back(std::move(ex));
    });
    if (!header) throw Error("storage.exercises", "missing schema header");
    return bank;
}

std::string serialize_exercises(std::span<const Exercise> bank) {
    std::string out = ojson{{"schema", kExerciseSchema}}.dump() + "\n";
    for (const auto& ex : bank) out += exercise_to_json(ex).dump() + "\n";
    return out;
}

std::vector<Exercise> load_exercises(const std::string& path) { return parse_exercises(read_file(path)); }

void save_exercises(const std::string& path, std::span<const Exercise> bank) {
    write_file(path, serialize_exercises(bank));
}

// ---------------------------------------------------------------------------
// Interaction log

ojson turn_to_json(const LogRecord& r) {
    const auto& t = r.turn;
    ojson j;
    j["student_id"] = t.student_id;
    j["session_id"] = t.session_id;
    j["sequence"] = t.sequence;
    j["exercise_id"] = t.exercise_id;
    j["attempt_index"] = t.attempt_index;
    j["event"] = event_name(t.event);
    j["content"] = t.content;
    j["latex"] = t.latex;
    j["grade"] = t.grade ? ojson(grade_name(*t.grade)) : ojson(nullptr);
    if (t.intervention) {
        const auto& i = *t.intervention;
        j["intervention"] = {{"type", intervention_name(i.type)},
                             {"tier", i.tier ? ojson(tier_name(*i.tier)) : ojson(nullptr)},
                             {"content_id", i.content_id},
                             {"text", i.text},
                             {"score", i.score}};
    } else {
        j["intervention"] = nullptr;
    }
    j["helpful_rating"] = t.helpful_rating ? ojson(*t.helpful_rating) : ojson(nullptr);
    j["timestamp"] = r.timestamp;
    j["seed"] = r.seed;
    return j;
}

LogRecord turn_from_json(const json& j) {
    LogRecord r;
    auto& t = r.turn;
    t.student_id = j.at("student_id").get<std::string>();
    t.session_id = j.at("session_id").get<std::string>();
    t.sequence = j.at("sequence").get<std::uint64_t>();
    t.exercise_id = j.at("exercise_id").get<std::string>();
    t.attempt_index = j.at("attempt_index").get<std::uint32_t>();
    t.event = parse_event(j.at("event").get<std::string>());
    t.content = j.value("content", std::string());
    t.latex = j.value("latex", false);
    if (j.contains("grade") && !j.at("grade").is_null()) t.grade = parse_grade(j.at("grade").get<std::string>());
    if (j.contains("intervention") && !j.at("intervention").is_null()) {
        const auto& ij = j.at("intervention");
        InterventionRecord i;
        i.type = parse_intervention(ij.at("type").get<std::string>());
        if (ij.contains("tier") && !ij.at("tier").is_null()) i.tier = parse_tier(ij.at("tier").get<std::string>());
        i.content_id = ij.at("content_id").get<std::string>();
        i.text = ij.at("text").get<std::string>();
        i.score = ij.at("score").get<double>();
        t.intervention = std::move(i);
    }
    if (j.contains("helpful_rating") && !j.at("helpful_rating").is_null())
        t.helpful_rating = j.at("helpful_rating").get<bool>();
    r.timestamp = j.value("timestamp", std::string());
    r.seed = j.value("seed", std::uint64_t{0});
    if (t.event == EventKind::Attempt && !t.grade) throw Error("storage.log", "attempt without a grade");
    if (t.attempt_index == 0) throw Error("storage.log", "attempt index must be at least 1");
    return r;
}

std::string log_header_line() { return ojson{{"schema", kLogSchema}}.dump() + "\n"; }

std::string turn_line(const LogRecord& record) { return turn_to_json(record).dump() + "\n"; }

std::string rating_line(const Rating& r) {
    return ojson{{"rating",
                  {{"student_id", r.student_id},
                   {"session_id", r.session_id},
                   {"sequence", r.sequence},
                   {"helpful", r.helpful}}}}
               .dump() +
           "\n";
}

std::string session_line(const SessionOpened& o) {
    return ojson{{"session", {{"session_id", o.session_id}, {"student_id", o.student_id}, {"exercise_id", o.exercise_id}}}}
               .dump() +
           "\n";
}

std::vector<SessionOpened> parse_session_lines(std::string_view contents) {
    std::vector<SessionOpened> out;
    for_each_line(contents, [&](std::size_t n, std::string_view line) {
        if (line.find("\"session\"") == std::string_view::npos) return;
        try {
            const auto j = json::parse(line);
            if (!j.is_object() || !j.contains("session")) return;
            const auto& sj = j.at("session");
            out.push_back({sj.at("session_id").get<std::string>(), sj.at("student_id").get<std::string>(),
                           sj.at("exercise_id").get<std::string>()});
        } catch (const json::exception& e) {
            throw Error("storage.log", at_line(n, e.what()));
        }
    });
    return out;
}

std::vector<LogRecord> parse_log_records(std::string_view contents) {
    std::vector<LogRecord> records;
    using Key = std::pair<std::string, std::string>;
    std::map<Key, std::uint64_t> last_sequence;
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::size_t> index;
    bool header = false;
    for_each_line(contents, [&](std::size_t n, std::string_view line) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("storage.log", at_line(n, e.what()));
        }
        if (!header) {
            check_header(n, j, kLogSchema, "storage.log");
            header = true;
            return;
        }
        try {
            if (j.contains("session")) return;
            if (j.contains("rating")) {
                const auto& rj = j.at("rating");
                const auto key = std::make_tuple(rj.at("student_id").get<std::string>(),
                                                 rj.at("session_id").get<std::string>(),
                                                 rj.at("sequence").get<std::uint64_t>());
                const auto it = index.find(key);
                if (it == index.end()) throw Error("storage.log", "rating refers to an unknown turn");
                auto& turn = records[it->second].turn;
                if (!turn.intervention) throw Error("storage.log", "rating refers to a turn without an intervention");
                turn.helpful_rating = rj.at("helpful").get<bool>();
                return;
            }
            auto r = turn_from_json(j);
            const Key key{r.turn.student_id, r.turn.session_id};
            const auto prev = last_sequence.find(key);
            if (prev != last_sequence.end() && r.turn.sequence <= prev->second)
                throw Error("storage.log", "sequence " + std::to_string(r.turn.sequence) + " after " +
                                               std::to_string(prev->second) + " in session " + key.second);
            last_sequence[key] = r.turn.sequence;
            index[{key.first, key.second, r.turn.sequence}] = records.size();
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw Error("storage.log", at_line(n, e.what()));
        } catch (const Error& e) {
            throw Error("storage.log", at_line(n, e.what()));
        }
    });
    if (!header) throw Error("storage.log", "missing schema header");
    return records;
}

std::vector<LogRecord> load_log_records(const std::string& path) { return parse_log_records(read_file(path)); }

std::vector<InteractionTurn> turns_of(std::span<const LogRecord> records) {
    std::vector<InteractionTurn> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.turn);
    return out;
}

std::vector<InteractionTurn> load_log(const std::string& path) { return turns_of(load_log_records(path)); }

std::string serialize_log(std::span<const LogRecord> records) {
    std::string out = log_header_line();
    for (const auto& r : records) out += turn_line(r);
    return out;
}

LogWriter::LogWriter(std::string path) : path_(std::move(path)) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
    if (fresh) {
        write_line(log_header_line());
    } else {
        // Validate the header without reading the whole log.
        std::ifstream in(path_);
        std::string first;
        std::getline(in, first);
        try {
            check_header(1, json::parse(first), kLogSchema, "storage.log");
        } catch (const json::exception& e) {
            throw Error("storage.log", path_ + ": " + at_line(1, e.what()));
        }
    }
}

void LogWriter::write_line(const std::string& line) {
    std::lock_guard lock(mutex_);
    const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error("storage.io", "cannot open " + path_ + ": " + std::strerror(errno));
    const auto written = ::write(fd, line.data(), line.size());
    const int err = errno;
    ::close(fd);
    if (written != static_cast<ssize_t>(line.size()))
        throw Error("storage.io", "short write to " + path_ + ": " + std::strerror(err));
}

void LogWriter::append(const LogRecord& record) { write_line(turn_line(record)); }

void LogWriter::append_rating(const Rating& rating) { write_line(rating_line(rating)); }

void LogWriter::append_session(const SessionOpened& opened) { write_line(session_line(opened)); }

void append_turn(const std::string& path, const LogRecord& record) { LogWriter(path).append(record); }

// ---------------------------------------------------------------------------
// Models

ojson model_to_json(const feedback::FeedbackModel& model) {
    ojson j;
    j["format"] = kModelFormat;
    j["tier"] = tier_name(model.tier);
    j["schema"] = {{"hash", feedback::schema_hash(model.tier)}, {"features", feedback::feature_names(model.tier)}};
    j["forest"] = model.forest.to_json();
    j["metadata"] = {{"seed", model.meta.seed},
                     {"data_hash", model.meta.data_hash},
                     {"date", model.meta.date},
                     {"examples", model.meta.examples}};
    return j;
}

feedback::FeedbackModel model_from_json(const json& j) {
    try {
        if (j.value("format", std::string()) != kModelFormat)
            throw Error("storage.model", "not a " + std::string(kModelFormat) + " file");
        feedback::FeedbackModel m;
        const auto tier = j.at("tier").get<std::string>();
        m.tier = parse_tier(tier);
        const auto names = j.at("schema").at("features").get<std::vector<std::string>>();
        const auto stored = j.at("schema").at("hash").get<std::string>();
        if (feedback::schema_hash(tier, names) != stored || stored != feedback::schema_hash(m.tier))
            throw Error("storage.schema", "schema hash mismatch for tier " + tier);
        m.forest = ml::RandomForest<double>::from_json(j.at("forest"));
        if (m.forest.dims() != static_cast<Eigen::Index>(names.size()))
            throw Error("storage.schema", "forest expects " + std::to_string(m.forest.dims()) + " features, schema has " +
                                              std::to_string(names.size()));
        const auto& meta = j.at("metadata");
        m.meta.seed = meta.at("seed").get<std::uint64_t>();
        m.meta.data_hash = meta.at("data_hash").get<std::string>();
        m.meta.date = meta.at("date").get<std::string>();
        m.meta.examples = meta.at("examples").get<std::size_t>();
        return m;
    } catch (const json::exception& e) {
        throw Error("storage.model", e.what());
    }
}

void save_model(const std::string& path, const feedback::FeedbackModel& model) {
    write_file(path, model_to_json(model).dump() + "\n");
}

feedback::FeedbackModel load_model(const std::string& path) {
    try {
        return model_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error("storage.model", path + ": " + e.what());
    }
}

void save_explanation_model(const std::string& path, const ml::DecisionTree<double>& tree) {
    ojson j;
    j["format"] = kExplanationModelFormat;
    j["tree"] = tree.to_json();
    write_file(path, j.dump() + "\n");
}

ml::DecisionTree<double> load_explanation_model(const std::string& path) {
    try {
        const auto j = json::parse(read_file(path));
        if (j.value("format", std::string()) != kExplanationModelFormat)
            throw Error("storage.model", path + ": not a " + std::string(kExplanationModelFormat) + " file");
        return ml::DecisionTree<double>::from_json(j.at("tree"));
    } catch (const json::exception& e) {
        throw Error("storage.model", path + ": " + e.what());
    }
}

}  // namespace tutor::storage
