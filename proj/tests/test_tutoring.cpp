#include <doctest.h>

#include <array>

#include "tutor/error.hpp"
#include "tutor/tutoring.hpp"

using namespace tutor;
using namespace tutor::core;

namespace {

Exercise text_exercise() {
    Exercise ex;
    ex.id = "ml-underfit";
    ex.question = "What is the difference between overfitting and underfitting?";
    ex.expectations = {"A model is underfitting when it cannot capture the underlying trend of the data.",
                       "A model is overfitting when it memorizes noise in the training data."};
    ex.tags = {"ml"};
    return ex;
}

Exercise math_exercise() {
    Exercise ex;
    ex.id = "line";
    ex.question = "Write the equation of a line with slope m and intercept b.";
    ex.math = MathExpectation{"y = mx + b", {}};
    ex.tags = {"algebra"};
    return ex;
}

std::shared_ptr<TutorResources> resources(Mode mode = Mode::Experiment) {
    auto r = std::make_shared<TutorResources>();
    r->bank = {text_exercise(), math_exercise()};
    r->features = feedback::FeatureContext::from_bank(r->bank);
    r->mode = mode;
    r->master_seed = 3;
    return r;
}

}  // namespace

TEST_CASE("grading") {
    const auto bank = std::vector<Exercise>{text_exercise(), math_exercise()};
    const auto stats = feedback::FeatureContext::from_bank(bank).stats;
    const auto ex = text_exercise();
    CHECK(grade_attempt(ex.expectations[1], ex, false, stats).grade == Grade::Correct);
    CHECK(grade_attempt(ex.expectations[1], ex, false, stats).similarity == 1.0);
    const auto close = grade_attempt("underfitting means it cannot capture the underlying trend of the data", ex, false,
                                     stats);
    CHECK(close.grade == Grade::Correct);
    CHECK(close.similarity >= 0.5);
    const auto off = grade_attempt("I do not know", ex, false, stats);
    CHECK(off.grade == Grade::Incorrect);
    CHECK(off.similarity < 0.5);
    CHECK_THROWS_AS(grade_attempt("  ", ex, false, stats), Error);
    CHECK_THROWS_AS(grade_attempt("x", ex, true, stats), Error);

    const auto line = math_exercise();
    CHECK(grade_attempt("y = b + xm", line, true, stats).grade == Grade::Correct);
    CHECK(grade_attempt("y - mx = b", line, true, stats).grade == Grade::Correct);
    const auto wrong = grade_attempt("y = mx", line, true, stats);
    CHECK(wrong.grade == Grade::Incorrect);
    REQUIRE(wrong.verdict);
    REQUIRE(wrong.verdict->diff);
    CHECK(wrong.verdict->diff->kind == math::DiffKind::MissingTerm);
    const auto broken = grade_attempt("y = (mx", line, true, stats);
    CHECK(broken.grade == Grade::Incorrect);
    CHECK(broken.parse_error);
    CHECK_THROWS_AS(grade_attempt("anything", line, false, stats), Error);
}

TEST_CASE("session transitions") {
    const SessionState start{Phase::AwaitingAttempt, "e", 1};
    CHECK(advance_session(start, EventKind::Attempt, Grade::Correct).phase == Phase::Solved);
    const auto wrong = advance_session(start, EventKind::Attempt, Grade::Incorrect);
    CHECK(wrong.phase == Phase::InterventionShown);
    CHECK(wrong.attempt_index == 2);
    const auto help = advance_session(start, EventKind::Help);
    CHECK(help.phase == Phase::InterventionShown);
    CHECK(help.attempt_index == 1);
    CHECK(advance_session(help, EventKind::Skip).phase == Phase::Skipped);
    CHECK(advance_session(wrong, EventKind::Attempt, Grade::Correct).phase == Phase::Solved);
    CHECK_THROWS_AS(advance_session(start, EventKind::Attempt), Error);

    SUBCASE("terminal states accept nothing and name the state and event") {
        for (auto phase : {Phase::Solved, Phase::Skipped}) {
            for (auto event : {EventKind::Attempt, EventKind::Help, EventKind::Skip}) {
                const SessionState s{phase, "e", 2};
                try {
                    advance_session(s, event, Grade::Correct);
                    FAIL("no error");
                } catch (const Error& e) {
                    const std::string what = e.what();
                    CHECK(what.find(phase_name(phase)) != std::string::npos);
                    CHECK(what.find(event_name(event)) != std::string::npos);
                }
            }
        }
    }
    CHECK(parse_phase("InterventionShown") == Phase::InterventionShown);
    CHECK_THROWS_AS(parse_phase("Done"), Error);
}

TEST_CASE("profile updates") {
    const auto ex = text_exercise();
    StudentProfile p;
    InteractionTurn t;
    t.event = EventKind::Attempt;
    t.grade = Grade::Incorrect;
    p = update_profile(p, t, &ex);
    CHECK(p.skill == doctest::Approx(0.45));
    CHECK(p.exercises_seen == 1);
    CHECK(p.topics.at("ml").attempted == 1);
    t.attempt_index = 2;
    t.grade = Grade::Correct;
    p = update_profile(p, t, &ex);
    CHECK(p.skill == doctest::Approx(0.9 * 0.45 + 0.1));
    CHECK(p.exercises_seen == 1);
    CHECK(p.correct == 1);
    CHECK(p.incorrect == 1);
    CHECK(p.topics.at("ml").rate() == 0.5);

    InteractionTurn skip;
    skip.event = EventKind::Skip;
    skip.attempt_index = 3;
    const auto after = update_profile(p, skip, &ex);
    CHECK(after.skill == p.skill);
    CHECK(after.skips == 1);
    CHECK(after.exercises_seen == 1);
    InteractionTurn help;
    help.event = EventKind::Help;
    CHECK(update_profile(p, help, &ex) == p);
    InteractionTurn ungraded;
    CHECK_THROWS_AS(update_profile(p, ungraded, &ex), Error);

    SUBCASE("skill stays inside [0, 1]") {
        StudentProfile q;
        Rng rng(5);
        for (int i = 0; i < 500; ++i) {
            InteractionTurn a;
            a.grade = bernoulli(rng, 0.5) ? Grade::Correct : Grade::Incorrect;
            q = update_profile(q, a);
            CHECK(q.skill >= 0.0);
            CHECK(q.skill <= 1.0);
        }
    }
}

TEST_CASE("intervention selection") {
    const TutorEngine engine(resources());
    const auto ex = text_exercise();
    const auto& mat = engine.material(ex.id);
    REQUIRE_FALSE(mat.hints.empty());
    StudentProfile profile;
    SelectionInput in;
    in.exercise = &ex;
    in.material = &mat;
    in.student = {&profile, {}};
    const std::map<ModelTier, feedback::FeedbackModel> none;

    SUBCASE("experiment mode spreads tiers uniformly") {
        std::array<int, 3> counts{};
        for (std::uint64_t seed = 0; seed < 300; ++seed) {
            const auto chosen = select_intervention(in, none, engine.resources().features, Mode::Experiment, seed);
            REQUIRE(chosen.tier);
            ++counts[static_cast<std::size_t>(*chosen.tier)];
            CHECK(chosen.type == InterventionType::TextHint);
        }
        for (int c : counts) CHECK(std::abs(c / 300.0 - 1.0 / 3.0) <= 0.08);
    }
    SUBCASE("production picks the best score") {
        ml::ForestParams params;
        params.n_trees = 5;
        std::map<ModelTier, feedback::FeedbackModel> models;
        for (auto tier : kAllTiers) {
            auto examples = feedback::synthetic_examples(40, tier, 1);
            for (auto& e : examples) e.label = tier == ModelTier::Shallow ? 1 : 0;
            models.emplace(tier, feedback::train_feedback_model(examples, tier, params, 2));
        }
        profile.skill = 0.9;
        const auto chosen = select_intervention(in, models, engine.resources().features, Mode::Production, 0);
        REQUIRE(chosen.tier);
        CHECK(*chosen.tier == ModelTier::Shallow);
        CHECK(chosen.score == 1.0);
        // Every candidate outside the band: the pool is kept rather than emptied.
        profile.skill = 0.0;
        CHECK(select_intervention(in, models, engine.resources().features, Mode::Production, 0).score == 1.0);
    }
    SUBCASE("nothing to offer gives the stock hint") {
        const ExerciseMaterial empty;
        in.material = &empty;
        const auto chosen = select_intervention(in, none, engine.resources().features, Mode::Experiment, 1);
        CHECK(chosen.content_id == "stock");
        CHECK(chosen.text == kStockHint);
        CHECK_FALSE(chosen.tier);
    }
    SUBCASE("math exercises offer gap and diff hints") {
        const auto line = math_exercise();
        in.exercise = &line;
        in.material = &engine.material(line.id);
        const auto gap = select_intervention(in, none, engine.resources().features, Mode::Experiment, 4);
        CHECK(gap.type == InterventionType::MathGapHint);
        CHECK(gap.text.find(math::kBlankSlot) != std::string::npos);
        in.diff = math::DiffHint{math::DiffKind::MissingTerm, "b", ""};
        const auto diff = select_intervention(in, none, engine.resources().features, Mode::Experiment, 4);
        CHECK(diff.type == InterventionType::MathDiffHint);
        CHECK(diff.text == in.diff->message());
    }
    CHECK(zpd_band(0.1) == std::pair{0.0, 0.1 + kZpdHalfWidth});
    CHECK(zpd_band(0.9).second == 1.0);
}

TEST_CASE("engine sessions") {
    const TutorEngine engine(resources());
    StudentRecord student;
    student.profile.id = "s1";
    auto session = engine.open_session("sess-1", "s1", "ml-underfit");
    CHECK_THROWS_AS(engine.open_session("x", "s1", "nope"), Error);

    const auto first = engine.attempt(session, student, "I do not know", false);
    CHECK(first.turn.sequence == 1);
    CHECK(first.turn.grade == Grade::Incorrect);
    REQUIRE(first.turn.intervention);
    CHECK(first.state.phase == Phase::InterventionShown);
    const auto help = engine.help(session, student);
    CHECK(help.turn.attempt_index == 2);
    CHECK(help.turn.intervention);
    const auto solved = engine.attempt(session, student, text_exercise().expectations[0], false);
    CHECK(solved.turn.sequence == 3);
    CHECK(solved.turn.attempt_index == 2);
    CHECK_FALSE(solved.turn.intervention);
    CHECK(session.state.phase == Phase::Solved);
    CHECK_THROWS_AS(engine.skip(session, student), Error);
    CHECK(student.history.size() == 3);
    CHECK(student.profile.attempted == 2);

    auto math_session = engine.open_session("sess-2", "s1", "line");
    const auto wrong = engine.attempt(math_session, student, "y = mx", true);
    REQUIRE(wrong.turn.intervention);
    CHECK(wrong.turn.intervention->type == InterventionType::MathDiffHint);
    engine.skip(math_session, student);

    SUBCASE("interventions only follow incorrect attempts and help") {
        for (const auto& t : student.history) {
            const bool allowed = t.event == EventKind::Help ||
                                 (t.event == EventKind::Attempt && t.grade == Grade::Incorrect);
            CHECK(t.intervention.has_value() == allowed);
        }
    }
    SUBCASE("replay reproduces every turn") {
        const auto replayed = replay_log(engine, student.history);
        CHECK(replayed.mismatches == 0);
        CHECK(replayed.states.at("sess-1").phase == Phase::Solved);
        CHECK(replayed.states.at("sess-2").phase == Phase::Skipped);
        auto tampered = student.history;
        tampered[0].intervention->text = "edited";
        CHECK(replay_log(engine, tampered).mismatches == 1);
    }
    SUBCASE("training examples from the log") {
        const auto examples = examples_from_log(engine, student.history, ModelTier::Deep);
        // Both interventions on the text exercise precede the correct second attempt.
        REQUIRE(examples.size() == 2);
        CHECK(examples[0].label == 1);
        CHECK(examples[1].label == 1);
        CHECK(examples[0].features.values.size() == 27);
    }
}
