#include "tutor/service.hpp"

#include <filesystem>
#include <regex>

#include <httplib.h>

#include "tutor/analytics.hpp"
#include "tutor/error.hpp"

namespace tutor::service {

namespace {

using json = nlohmann::json;

Response error_response(int status, const std::string& code, const std::string& message) {
    return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

Response from_error(const Error& e) {
    const auto& code = e.code();
    if (code == "core.transition") return error_response(409, code, e.what());
    if (code == "core.unknown_exercise") return error_response(422, code, e.what());
    if (code.rfind("core.", 0) == 0 || code.rfind("math.", 0) == 0) return error_response(422, code, e.what());
    return error_response(500, code, e.what());
}

std::string turn_key(std::string_view session, std::uint64_t sequence) {
    return std::string(session) + ":" + std::to_string(sequence);
}

bool exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j) {
    try {
        ServiceConfig c;
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.bank = j.at("bank").get<std::string>();
        c.log = j.at("log").get<std::string>();
        if (j.contains("models"))
            for (const auto& [tier, path] : j.at("models").items()) c.models[parse_tier(tier)] = path.get<std::string>();
        c.mode = core::parse_mode(j.value("mode", std::string("experiment")));
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("wiki")) c.wiki = j.at("wiki").get<std::string>();
        if (j.contains("synonyms")) c.synonyms = j.at("synonyms").get<std::string>();
        if (j.contains("wiki_model")) c.wiki_model = j.at("wiki_model").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw Error("service.config", e.what());
    }
}

ServiceConfig ServiceConfig::load(const std::string& path) {
    try {
        auto c = from_json(json::parse(storage::read_file(path)));
        // Relative paths resolve against the config file's directory.
        const auto base = std::filesystem::path(path).parent_path();
        auto fix = [&](std::string& p) {
            if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
        };
        fix(c.bank);
        fix(c.log);
        for (auto& [_, p] : c.models) fix(p);
        if (c.wiki) fix(*c.wiki);
        if (c.synonyms) fix(*c.synonyms);
        if (c.wiki_model) fix(*c.wiki_model);
        return c;
    } catch (const json::exception& e) {
        throw Error("service.config", path + ": " + e.what());
    }
}

void ServiceConfig::validate() const {
    auto need = [](const std::string& what, const std::string& p) {
        if (!exists(p)) throw Error("service.config", what + " not found: " + p);
    };
    need("exercise bank", bank);
    for (const auto& [tier, p] : models) need(std::string(tier_name(tier)) + " model", p);
    if (wiki) need("wiki corpus", *wiki);
    if (synonyms) need("synonyms", *synonyms);
    if (wiki_model) need("explanation model", *wiki_model);
    auto dir = std::filesystem::path(log).parent_path();
    if (dir.empty()) dir = ".";
    need("log directory", dir.string());
    if (port <= 0 || port > 65535) throw Error("service.config", "port out of range");
}

std::shared_ptr<core::TutorResources> build_resources(const ServiceConfig& config) {
    config.validate();
    auto r = std::make_shared<core::TutorResources>();
    r->bank = storage::load_exercises(config.bank);
    for (const auto& [tier, path] : config.models) {
        auto m = storage::load_model(path);
        if (m.tier != tier)
            throw Error("service.config", path + " holds a " + std::string(tier_name(m.tier)) + " model, not " +
                                              std::string(tier_name(tier)));
        r->models.emplace(tier, std::move(m));
    }
    if (config.wiki) {
        auto index = wiki::ArticleIndex::load(*config.wiki);
        if (config.synonyms) index.set_synonyms(wiki::ArticleIndex::load_synonyms(*config.synonyms));
        r->wiki_model = config.wiki_model ? storage::load_explanation_model(*config.wiki_model)
                                          : wiki::train_quality_model(index, config.seed);
        r->wiki = std::move(index);
    }
    r->features = feedback::FeatureContext::from_bank(r->bank);
    r->mode = config.mode;
    r->master_seed = config.seed;
    return r;
}

json intervention_json(const InteractionTurn& turn) {
    const auto& i = *turn.intervention;
    return {{"id", turn_key(turn.session_id, turn.sequence)},
            {"type", intervention_name(i.type)},
            {"tier", i.tier ? json(tier_name(*i.tier)) : json(nullptr)},
            {"content_id", i.content_id},
            {"text", i.text},
            {"score", i.score}};
}

TutorService::TutorService(std::shared_ptr<const core::TutorResources> resources, std::string log_path)
    : engine_(std::move(resources)), writer_(std::move(log_path)) {
    replay_existing();
}

void TutorService::replay_existing() {
    const auto contents = storage::read_file(writer_.path());
    for (const auto& opened : storage::parse_session_lines(contents)) {
        auto slot = std::make_shared<SessionSlot>();
        slot->session = engine_.open_session(opened.session_id, opened.student_id, opened.exercise_id);
        sessions_[opened.session_id] = slot;
        ++next_session_;
    }
    for (const auto& record : storage::parse_log_records(contents)) {
        const auto& logged = record.turn;
        auto it = sessions_.find(logged.session_id);
        if (it == sessions_.end()) {
            auto slot = std::make_shared<SessionSlot>();
            slot->session = engine_.open_session(logged.session_id, logged.student_id, logged.exercise_id);
            it = sessions_.emplace(logged.session_id, slot).first;
            ++next_session_;
        }
        auto& session = it->second->session;
        auto student = student_slot(logged.student_id);
        core::StepResult step;
        switch (logged.event) {
            case EventKind::Attempt: step = engine_.attempt(session, student->record, logged.content, logged.latex); break;
            case EventKind::Help: step = engine_.help(session, student->record); break;
            case EventKind::Skip: step = engine_.skip(session, student->record); break;
        }
        step.turn.helpful_rating = logged.helpful_rating;
        student->record.history.back().helpful_rating = logged.helpful_rating;
        if (!(step.turn == logged))
            throw Error("service.replay", "log replay diverged at session " + logged.session_id + " turn " +
                                              std::to_string(logged.sequence));
        if (session.state.terminal()) ++student->finished[session.state.exercise_id];
        turn_index_[turn_key(logged.session_id, logged.sequence)] = turns_.size();
        turns_.push_back(step.turn);
    }
}

std::shared_ptr<TutorService::SessionSlot> TutorService::find_session(const std::string& id) {
    std::lock_guard lock(registry_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<TutorService::StudentSlot> TutorService::student_slot(const std::string& id) {
    std::lock_guard lock(registry_);
    auto& slot = students_[id];
    if (!slot) {
        slot = std::make_shared<StudentSlot>();
        slot->record.profile.id = id;
    }
    return slot;
}

std::size_t TutorService::session_count() const {
    std::lock_guard lock(registry_);
    return sessions_.size();
}

json TutorService::session_json(const core::Session& s) const {
    const auto& ex = engine_.exercise(s.state.exercise_id);
    return {{"session_id", s.id},
            {"student_id", s.student_id},
            {"exercise", {{"id", ex.id}, {"question", ex.question}, {"latex", ex.expectations.empty()}}},
            {"state", core::phase_name(s.state.phase)},
            {"attempt_index", s.state.attempt_index}};
}

Response TutorService::create_session(const json& body) {
    if (!body.is_object() || !body.contains("student_id") || !body.at("student_id").is_string() ||
        body.at("student_id").get<std::string>().empty())
        return error_response(422, "service.schema", "body needs a non-empty string student_id");
    const auto student_id = body.at("student_id").get<std::string>();
    auto student = student_slot(student_id);
    std::string exercise_id;
    if (body.contains("exercise_id")) {
        if (!body.at("exercise_id").is_string())
            return error_response(422, "service.schema", "exercise_id must be a string");
        exercise_id = body.at("exercise_id").get<std::string>();
    } else {
        // First exercise the student has finished least often.
        std::lock_guard lock(student->mutex);
        std::size_t best = SIZE_MAX;
        for (const auto& ex : engine_.resources().bank) {
            const auto it = student->finished.find(ex.id);
            const auto n = it == student->finished.end() ? 0 : it->second;
            if (n < best) {
                best = n;
                exercise_id = ex.id;
            }
        }
    }
    auto slot = std::make_shared<SessionSlot>();
    try {
        std::lock_guard lock(registry_);
        const auto id = "session-" + std::to_string(next_session_);
        slot->session = engine_.open_session(id, student_id, exercise_id);
        writer_.append_session({id, student_id, exercise_id});
        sessions_[id] = slot;
        ++next_session_;
    } catch (const Error& e) {
        return from_error(e);
    }
    return {201, session_json(slot->session)};
}

Response TutorService::get_session(const std::string& id) {
    auto slot = find_session(id);
    if (!slot) return error_response(404, "service.unknown_session", "unknown session '" + id + "'");
    std::lock_guard lock(slot->mutex);
    return {200, session_json(slot->session)};
}

Response TutorService::step(const std::string& id, EventKind event, const json& body) {
    auto slot = find_session(id);
    if (!slot) return error_response(404, "service.unknown_session", "unknown session '" + id + "'");
    std::string content;
    bool latex = false;
    if (event == EventKind::Attempt) {
        const bool has_text = body.is_object() && body.contains("text");
        const bool has_latex = body.is_object() && body.contains("latex");
        if (has_text == has_latex)
            return error_response(422, "service.schema", "attempt body needs exactly one of text or latex");
        const auto& v = body.at(has_text ? "text" : "latex");
        if (!v.is_string()) return error_response(422, "service.schema", "attempt must be a string");
        content = v.get<std::string>();
        latex = has_latex;
    }
    std::lock_guard session_lock(slot->mutex);
    auto student = student_slot(slot->session.student_id);
    std::lock_guard student_lock(student->mutex);
    // Work on copies; memory changes only after the turn is in the log.
    auto session = slot->session;
    auto record = student->record;
    core::StepResult step;
    try {
        switch (event) {
            case EventKind::Attempt: step = engine_.attempt(session, record, content, latex); break;
            case EventKind::Help: step = engine_.help(session, record); break;
            case EventKind::Skip: step = engine_.skip(session, record); break;
        }
        writer_.append({step.turn, storage::utc_timestamp(), engine_.turn_seed(session.id, step.turn.sequence)});
    } catch (const Error& e) {
        return from_error(e);
    }
    slot->session = std::move(session);
    student->record = std::move(record);
    if (slot->session.state.terminal()) ++student->finished[slot->session.state.exercise_id];
    {
        std::lock_guard lock(log_mutex_);
        turn_index_[turn_key(step.turn.session_id, step.turn.sequence)] = turns_.size();
        turns_.push_back(step.turn);
    }
    json out{{"session_id", id},
             {"sequence", step.turn.sequence},
             {"state", core::phase_name(step.state.phase)},
             {"attempt_index", step.state.attempt_index}};
    if (step.turn.grade) out["grade"] = grade_name(*step.turn.grade);
    if (step.grade && step.grade->verdict) out["verdict"] = math::verdict_name(step.grade->verdict->verdict);
    if (step.turn.intervention) out["intervention"] = intervention_json(step.turn);
    return {200, out};
}

Response TutorService::attempt(const std::string& id, const json& body) { return step(id, EventKind::Attempt, body); }
Response TutorService::help(const std::string& id) { return step(id, EventKind::Help, json::object()); }
Response TutorService::skip(const std::string& id) { return step(id, EventKind::Skip, json::object()); }

Response TutorService::rate(const std::string& intervention_id, const json& body) {
    if (!body.is_object() || !body.contains("helpful") || !body.at("helpful").is_boolean())
        return error_response(422, "service.schema", "body needs a boolean helpful");
    std::lock_guard lock(log_mutex_);
    const auto it = turn_index_.find(intervention_id);
    if (it == turn_index_.end() || !turns_[it->second].intervention)
        return error_response(404, "service.unknown_intervention", "unknown intervention '" + intervention_id + "'");
    auto& turn = turns_[it->second];
    if (turn.helpful_rating)
        return error_response(409, "service.already_rated", "intervention '" + intervention_id + "' is already rated");
    const bool helpful = body.at("helpful").get<bool>();
    try {
        writer_.append_rating({turn.student_id, turn.session_id, turn.sequence, helpful});
    } catch (const Error& e) {
        return from_error(e);
    }
    turn.helpful_rating = helpful;
    return {200, json::object()};
}

Response TutorService::learning_gains(const std::optional<std::string>& filter) {
    std::optional<analytics::AttemptFilter> only;
    if (filter && !filter->empty()) {
        try {
            only = analytics::parse_filter(*filter);
        } catch (const Error& e) {
            return error_response(422, e.code(), e.what());
        }
    }
    std::vector<InteractionTurn> turns;
    {
        std::lock_guard lock(log_mutex_);
        turns = turns_;
    }
    auto report = analytics::build_report(turns);
    if (only) {
        std::erase_if(report.cells, [&](const auto& kv) { return kv.first.second != *only; });
        std::erase_if(report.tests, [&](const auto& t) { return t.filter != *only; });
    }
    return {200, analytics::to_json(report)};
}

Response TutorService::handle(const std::string& method, const std::string& path, const std::string& body,
                              const std::optional<std::string>& filter) {
    json parsed = json::object();
    if (method == "POST" && body.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            parsed = json::parse(body);
        } catch (const json::exception& e) {
            return error_response(422, "service.schema", std::string("malformed JSON: ") + e.what());
        }
    }
    static const std::regex session_re("^/sessions/([^/]+)$");
    static const std::regex action_re("^/sessions/([^/]+)/(attempts|help|skip)$");
    static const std::regex rating_re("^/interventions/([^/]+)/rating$");
    std::smatch m;
    if (method == "POST" && path == "/sessions") return create_session(parsed);
    if (method == "GET" && std::regex_match(path, m, session_re)) return get_session(m[1]);
    if (method == "POST" && std::regex_match(path, m, action_re)) {
        const std::string action = m[2];
        if (action == "attempts") return attempt(m[1], parsed);
        if (action == "help") return help(m[1]);
        return skip(m[1]);
    }
    if (method == "POST" && std::regex_match(path, m, rating_re)) return rate(m[1], parsed);
    if (method == "GET" && path == "/analytics/learning-gains") return learning_gains(filter);
    return error_response(404, "service.not_found", method + " " + path + " is not a route");
}

struct HttpFrontend::Impl {
    httplib::Server server;
};

HttpFrontend::HttpFrontend(TutorService& service) : impl_(std::make_unique<Impl>()) {
    auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> filter;
        if (req.has_param("filter")) filter = req.get_param_value("filter");
        Response r;
        try {
            r = service.handle(req.method, req.path, req.body, filter);
        } catch (const std::exception& e) {
            r = error_response(500, "service.internal", e.what());
        }
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    impl_->server.Get(".*", dispatch);
    impl_->server.Post(".*", dispatch);
}

HttpFrontend::~HttpFrontend() = default;

int HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound > 0) return bound;
    } else if (impl_->server.bind_to_port(host, port)) {
        return port;
    }
    throw Error("service.bind", "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }
void HttpFrontend::stop() { impl_->server.stop(); }
bool HttpFrontend::running() const { return impl_->server.is_running(); }

void serve(const ServiceConfig& config) {
    TutorService service(build_resources(config), config.log);
    HttpFrontend http(service);
    http.bind(config.host, config.port);
    http.run();
}

}  // namespace tutor::service
