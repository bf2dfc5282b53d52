#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "tutor/storage.hpp"
#include "tutor/tutoring.hpp"

namespace tutor::service {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string bank;
    std::map<ModelTier, std::string> models;  // tier -> model file
    std::string log;
    core::Mode mode = core::Mode::Experiment;
    std::uint64_t seed = 0;
    std::optional<std::string> wiki;        // article corpus (JSONL)
    std::optional<std::string> synonyms;    // synonym map (JSON)
    std::optional<std::string> wiki_model;  // explanation quality model; trained from the corpus when absent

    static ServiceConfig from_json(const nlohmann::json& j);
    static ServiceConfig load(const std::string& path);
    /// Every input path must exist; the log's directory must exist.
    void validate() const;
};

/// Loads bank, models and wiki resources named by the config.
std::shared_ptr<core::TutorResources> build_resources(const ServiceConfig& config);

struct Response {
    int status = 200;
    nlohmann::json body;
};

/// Session store plus write-ahead logging. Each session and each student has its own
/// mutex; a turn is appended to the log before it becomes visible in memory.
class TutorService {
public:
    TutorService(std::shared_ptr<const core::TutorResources> resources, std::string log_path);

    Response create_session(const nlohmann::json& body);
    Response get_session(const std::string& id);
    Response attempt(const std::string& id, const nlohmann::json& body);
    Response help(const std::string& id);
    Response skip(const std::string& id);
    Response rate(const std::string& intervention_id, const nlohmann::json& body);
    Response learning_gains(const std::optional<std::string>& filter);

    /// Parses a raw body and dispatches; malformed JSON is a 422.
    Response handle(const std::string& method, const std::string& path, const std::string& body,
                    const std::optional<std::string>& filter = std::nullopt);

    const core::TutorEngine& engine() const { return engine_; }
    std::size_t session_count() const;

private:
    struct SessionSlot {
        std::mutex mutex;
        core::Session session;
    };
    struct StudentSlot {
        std::mutex mutex;
        core::StudentRecord record;
        std::map<std::string, std::size_t> finished;  // exercise id -> times solved or skipped
    };

    void replay_existing();
    std::shared_ptr<SessionSlot> find_session(const std::string& id);
    std::shared_ptr<StudentSlot> student_slot(const std::string& id);
    Response step(const std::string& id, EventKind event, const nlohmann::json& body);
    nlohmann::json session_json(const core::Session& s) const;

    core::TutorEngine engine_;
    storage::LogWriter writer_;
    mutable std::mutex registry_;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
    std::map<std::string, std::shared_ptr<StudentSlot>> students_;
    std::uint64_t next_session_ = 1;
    std::mutex log_mutex_;  // guards the in-memory copy of the log
    std::vector<InteractionTurn> turns_;
    std::map<std::string, std::size_t> turn_index_;  // "session:sequence" -> position in turns_
};

nlohmann::json intervention_json(const InteractionTurn& turn);

/// HTTP binding for a service. Port 0 picks a free port.
class HttpFrontend {
public:
    explicit HttpFrontend(TutorService& service);
    ~HttpFrontend();
    int bind(const std::string& host, int port);
    void run();  // blocks until stop()
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Blocks serving HTTP until the process is stopped.
void serve(const ServiceConfig& config);

}  // namespace tutor::service
