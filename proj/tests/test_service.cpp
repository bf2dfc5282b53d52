#include <doctest.h>

#include <filesystem>
#include <thread>

#include "tutor/error.hpp"
#include "tutor/service.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

using namespace tutor;
using json = nlohmann::json;

namespace {

std::shared_ptr<core::TutorResources> bundled() {
    service::ServiceConfig c;
    const std::string dir = TUTOR_DATA_DIR;
    c.bank = dir + "/exercises.jsonl";
    c.wiki = dir + "/wiki/articles.jsonl";
    c.synonyms = dir + "/wiki/synonyms.json";
    c.log = std::filesystem::temp_directory_path().string() + "/unused.jsonl";
    return service::build_resources(c);
}

const std::shared_ptr<core::TutorResources>& resources() {
    static const auto r = bundled();
    return r;
}

struct TempLog {
    std::string path;
    explicit TempLog(const std::string& name)
        : path((std::filesystem::temp_directory_path() / ("tutor-svc-" + name + ".jsonl")).string()) {
        std::filesystem::remove(path);
    }
    ~TempLog() { std::filesystem::remove(path); }
};

std::string open(service::TutorService& s, const std::string& student, const std::string& exercise) {
    const auto r = s.create_session({{"student_id", student}, {"exercise_id", exercise}});
    REQUIRE(r.status == 201);
    return r.body.at("session_id");
}

}  // namespace

TEST_CASE("session lifecycle over the handler") {
    TempLog log("lifecycle");
    service::TutorService s(resources(), log.path);
    const auto id = open(s, "ana", "ml-underfit");

    SUBCASE("correct answer solves the session") {
        const auto r = s.handle("POST", "/sessions/" + id + "/attempts",
                                R"({"text": "A model is underfitting when it has a high bias."})");
        CHECK(r.status == 200);
        CHECK(r.body.at("grade") == "Correct");
        CHECK(r.body.at("state") == "Solved");
        CHECK_FALSE(r.body.contains("intervention"));

        const auto again = s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": "anything"})");
        CHECK(again.status == 409);
        const std::string msg = again.body.at("error").at("message");
        CHECK(msg.find("Solved") != std::string::npos);
        CHECK(msg.find("Attempt") != std::string::npos);
        CHECK(s.handle("POST", "/sessions/" + id + "/help", "").status == 409);
        CHECK(s.handle("POST", "/sessions/" + id + "/skip", "").status == 409);
    }
    SUBCASE("wrong answers get interventions and ratings") {
        auto r = s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": "no idea"})");
        CHECK(r.status == 200);
        CHECK(r.body.at("grade") == "Incorrect");
        CHECK(r.body.at("state") == "InterventionShown");
        r = s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": "still no idea"})");
        REQUIRE(r.body.contains("intervention"));
        CHECK(r.body.at("attempt_index") == 3);
        const auto& iv = r.body.at("intervention");
        CHECK(is_implemented(parse_intervention(iv.at("type").get<std::string>())));
        const std::string iv_id = iv.at("id");

        CHECK(s.handle("POST", "/interventions/" + iv_id + "/rating", R"({"helpful": "yes"})").status == 422);
        CHECK(s.handle("POST", "/interventions/nope:1/rating", R"({"helpful": true})").status == 404);
        CHECK(s.handle("POST", "/interventions/" + iv_id + "/rating", R"({"helpful": true})").status == 200);
        CHECK(s.handle("POST", "/interventions/" + iv_id + "/rating", R"({"helpful": false})").status == 409);

        const auto gains = s.learning_gains(std::nullopt);
        CHECK(gains.status == 200);
        CHECK(gains.body.at("helpfulness") == 1.0);
    }
    SUBCASE("bad requests") {
        CHECK(s.handle("GET", "/sessions/missing", "").status == 404);
        CHECK(s.handle("POST", "/sessions/missing/help", "").status == 404);
        CHECK(s.handle("POST", "/sessions/" + id + "/attempts", "{not json").status == 422);
        CHECK(s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": "a", "latex": "b"})").status == 422);
        CHECK(s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": 4})").status == 422);
        CHECK(s.handle("POST", "/sessions/" + id + "/attempts", R"({"text": "   "})").status == 422);
        CHECK(s.handle("POST", "/sessions", R"({"exercise_id": "ml-underfit"})").status == 422);
        CHECK(s.handle("POST", "/sessions", R"({"student_id": "b", "exercise_id": "nope"})").status == 422);
        CHECK(s.handle("DELETE", "/sessions/" + id, "").status == 404);
        CHECK(s.handle("GET", "/sessions/" + id, "").body.at("attempt_index") == 1);
    }
    SUBCASE("learning-gain filter") {
        CHECK(s.learning_gains(std::string("AllAttempts")).status == 200);
        CHECK(s.learning_gains(std::string("BeforeSecondAttempt")).status == 200);
        const auto bad = s.handle("GET", "/analytics/learning-gains", "", std::string("Sometimes"));
        CHECK(bad.status == 422);
    }
}

TEST_CASE("math attempts report the verdict") {
    TempLog log("math");
    service::TutorService s(resources(), log.path);
    const auto id = open(s, "ana", "math-line");
    auto r = s.attempt(id, {{"text", "y equals m x plus b"}});
    CHECK(r.status == 422);
    r = s.attempt(id, {{"latex", "y = b + m x"}});
    CHECK(r.body.at("grade") == "Correct");
    CHECK(r.body.at("verdict") == "Equivalent");
}

TEST_CASE("exercise choice without an id") {
    TempLog log("choice");
    service::TutorService s(resources(), log.path);
    const auto first = s.create_session({{"student_id", "kai"}});
    REQUIRE(first.status == 201);
    const std::string ex = first.body.at("exercise").at("id");
    CHECK(s.skip(first.body.at("session_id")).status == 200);
    const auto second = s.create_session({{"student_id", "kai"}});
    CHECK(second.body.at("exercise").at("id") != ex);
}

TEST_CASE("restart replays the log") {
    TempLog log("restart");
    std::vector<std::string> ids;
    std::vector<json> before;
    json gains;
    {
        service::TutorService s(resources(), log.path);
        for (const std::string student : {"a", "b", "c"})
            for (const std::string ex : {"ml-underfit", "ml-regularization", "math-mse"}) ids.push_back(open(s, student, ex));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const bool latex = i % 3 == 2;
            s.attempt(ids[i], {{latex ? "latex" : "text", latex ? "x = 0" : "wrong"}});
            if (i % 2 == 0) s.help(ids[i]);
            const auto r = s.attempt(ids[i], {{latex ? "latex" : "text", "still wrong"}});
            if (r.body.contains("intervention"))
                s.rate(r.body.at("intervention").at("id"), {{"helpful", i % 4 == 0}});
            if (i % 3 == 0) s.skip(ids[i]);
        }
        open(s, "d", "ml-test-set");  // no turns yet
        for (const auto& id : ids) before.push_back(s.get_session(id).body);
        gains = s.learning_gains(std::nullopt).body;
    }
    service::TutorService restarted(resources(), log.path);
    CHECK(restarted.session_count() == ids.size() + 1);
    for (std::size_t i = 0; i < ids.size(); ++i) CHECK(restarted.get_session(ids[i]).body == before[i]);
    CHECK(restarted.learning_gains(std::nullopt).body == gains);
    // New sessions do not reuse ids.
    const auto fresh = open(restarted, "d", "ml-test-set");
    CHECK(std::find(ids.begin(), ids.end(), fresh) == ids.end());
    CHECK(restarted.get_session("session-" + std::to_string(ids.size() + 1)).status == 200);
}

TEST_CASE("concurrent sessions keep the log consistent") {
    TempLog log("concurrent");
    {
        service::TutorService s(resources(), log.path);
        std::vector<std::string> ids;
        for (int i = 0; i < 8; ++i) ids.push_back(open(s, "st" + std::to_string(i % 3), i % 2 ? "ml-test-set" : "ml-underfit"));
        std::vector<std::thread> threads;
        for (const auto& id : ids)
            threads.emplace_back([&s, id] {
                for (int k = 0; k < 3; ++k) s.attempt(id, {{"text", "nope"}});
                s.skip(id);
            });
        for (auto& t : threads) t.join();
        for (const auto& id : ids) CHECK(s.get_session(id).body.at("state") == "Skipped");
    }
    // A clean replay proves every student's turns were logged in history order.
    service::TutorService restarted(resources(), log.path);
    CHECK(restarted.session_count() == 8);
    CHECK(storage::load_log(log.path).size() == 8 * 4);
}

TEST_CASE("HTTP round trip") {
    TempLog log("http");
    service::TutorService s(resources(), log.path);
    service::HttpFrontend http(s);
    const int port = http.bind("127.0.0.1", 0);
    std::thread server([&] { http.run(); });
    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/sessions", R"({"student_id": "h", "exercise_id": "ml-underfit"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = json::parse(created->body).at("session_id");
    auto attempt = client.Post("/sessions/" + id + "/attempts", R"({"text": "nope"})", "application/json");
    REQUIRE(attempt);
    CHECK(attempt->status == 200);
    CHECK(json::parse(attempt->body).at("state") == "InterventionShown");
    auto gains = client.Get("/analytics/learning-gains?filter=Never");
    REQUIRE(gains);
    CHECK(gains->status == 422);
    auto missing = client.Get("/nowhere");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    http.stop();
    server.join();
}

TEST_CASE("config loading") {
    const auto dir = std::filesystem::temp_directory_path() / "tutor-svc-config";
    std::filesystem::create_directories(dir);
    const std::string data = TUTOR_DATA_DIR;
    storage::write_file((dir / "c.json").string(),
                        json{{"bank", data + "/exercises.jsonl"}, {"log", "log.jsonl"}, {"port", 9001}, {"mode", "production"}}.dump());
    const auto c = service::ServiceConfig::load((dir / "c.json").string());
    CHECK(c.port == 9001);
    CHECK(c.mode == core::Mode::Production);
    CHECK(c.log == (dir / "log.jsonl").string());
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.bank = (dir / "missing.jsonl").string();
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_THROWS_AS(service::ServiceConfig::from_json(json{{"log", "x"}}), Error);
    std::filesystem::remove_all(dir);
}
