#include <doctest.h>

#include "tutor/error.hpp"
#include "tutor/feedback.hpp"

using namespace tutor;
using namespace tutor::feedback;

namespace {

Exercise exercise() {
    Exercise ex;
    ex.id = "ml-underfit";
    ex.question = "What is the difference between overfitting and underfitting?";
    ex.expectations = {"A model is underfitting when it has a high bias."};
    return ex;
}

InteractionTurn attempt(std::uint64_t seq, std::string text, Grade grade) {
    InteractionTurn t;
    t.sequence = seq;
    t.exercise_id = "ml-underfit";
    t.content = std::move(text);
    t.grade = grade;
    return t;
}

// Walks one tree's node array by hand.
double walk(const ml::DecisionTree<double>& tree, const Eigen::VectorXd& x) {
    const auto& nodes = tree.nodes();
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
        i = static_cast<std::size_t>(x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
    return nodes[i].probability;
}

}  // namespace

TEST_CASE("schemas are nested prefixes") {
    CHECK(feature_count(ModelTier::Baseline) == 6);
    CHECK(feature_count(ModelTier::Shallow) == 11);
    CHECK(feature_count(ModelTier::Deep) == 27);
    const auto& b = feature_names(ModelTier::Baseline);
    const auto& s = feature_names(ModelTier::Shallow);
    const auto& d = feature_names(ModelTier::Deep);
    CHECK(std::equal(b.begin(), b.end(), s.begin()));
    CHECK(std::equal(s.begin(), s.end(), d.begin()));
    CHECK(schema_hash(ModelTier::Baseline) != schema_hash(ModelTier::Shallow));
    CHECK(schema_hash(ModelTier::Deep).size() == 16);
}

TEST_CASE("feature extraction") {
    const std::vector<Exercise> bank{exercise()};
    const auto ctx = FeatureContext::from_bank(bank);
    const std::string hint = "Think about the case when it has a high bias.";
    StudentProfile profile;
    profile.attempted = 4;
    profile.correct = 1;
    profile.incorrect = 3;
    profile.skips = 2;
    profile.exercises_seen = 2;
    const std::vector<InteractionTurn> history{attempt(1, "It memorizes noise", Grade::Incorrect),
                                               attempt(2, "A model is underfitting when it has a high bias.",
                                                       Grade::Correct)};

    SUBCASE("baseline ignores the student") {
        const auto a = extract_features(hint, exercise(), {&profile, history}, ModelTier::Baseline, ctx);
        const auto b = extract_features(hint, exercise(), {}, ModelTier::Baseline, ctx);
        CHECK(a.values.size() == 6);
        CHECK(a.values == b.values);
        CHECK(a.values(0) == 10);
        CHECK(a.values(1) == static_cast<double>(hint.size()));
        CHECK(a.values(2) == 0.0);
        CHECK(a.values(3) == 0.5);  // heads "case" and "bias"; only "bias" is a topic
        CHECK(a.values.allFinite());
    }
    SUBCASE("fresh profile gives zero profile features") {
        const StudentProfile fresh;
        const auto v = extract_features(hint, exercise(), {&fresh, {}}, ModelTier::Shallow, ctx);
        CHECK(v.values.tail(5).isZero());
    }
    SUBCASE("profile proportions") {
        const auto v = extract_features(hint, exercise(), {&profile, {}}, ModelTier::Shallow, ctx);
        CHECK(v.values(6) == 4);
        CHECK(v.values(7) == 0.25);
        CHECK(v.values(8) == 0.75);
        CHECK(v.values(9) == 2);
        CHECK(v.values(10) == 2);
    }
    SUBCASE("deep history is most recent first and zero padded") {
        const auto v = extract_features(hint, exercise(), {&profile, history}, ModelTier::Deep, ctx);
        REQUIRE(v.values.size() == 27);
        CHECK(v.values(11) == 10);                        // newest attempt length
        CHECK(v.values(12) == doctest::Approx(1.0));      // identical to the expectation
        CHECK(v.values(13) == 1.0);
        CHECK(v.values(15) == 3);
        CHECK(v.values(17) == 0.0);
        CHECK(v.values.tail(8).isZero());
        const auto shallow = extract_features(hint, exercise(), {&profile, history}, ModelTier::Shallow, ctx);
        CHECK(v.values.head(11) == shallow.values);
    }
}

TEST_CASE("ranking") {
    const std::vector<Exercise> bank{exercise()};
    const auto ctx = FeatureContext::from_bank(bank);
    ml::ForestParams params;
    params.n_trees = 5;

    SUBCASE("equal scores fall back to length then text") {
        auto examples = synthetic_examples(20, ModelTier::Baseline, 1);
        for (auto& e : examples) e.label = 1;
        const auto model = train_feedback_model(examples, ModelTier::Baseline, params, 3);
        const std::vector<std::string> texts{"Consider the bias term here.", "Think about bias.", "Recall bias first."};
        const auto ranked = rank_candidates(texts, exercise(), {}, model, ctx);
        REQUIRE(ranked.size() == 3);
        CHECK(ranked[0].text == "Think about bias.");
        CHECK(ranked[1].text == "Recall bias first.");
        CHECK(ranked[2].index == 0);
        const auto single = rank_candidates(std::span(texts).first(1), exercise(), {}, model, ctx);
        REQUIRE(single.size() == 1);
        CHECK(single[0].score == 1.0);
    }
    SUBCASE("order matches a hand walk of the trees") {
        const auto examples = synthetic_examples(200, ModelTier::Baseline, 5);
        const auto model = train_feedback_model(examples, ModelTier::Baseline, params, 9);
        const std::vector<std::string> texts{"Think about the case when it has a high bias.",
                                             "Remember that a simple model has high bias.",
                                             "Consider the training error."};
        const auto ranked = rank_candidates(texts, exercise(), {}, model, ctx);
        for (const auto& r : ranked) {
            const auto fv = extract_features(texts[r.index], exercise(), {}, ModelTier::Baseline, ctx);
            double sum = 0.0;
            for (const auto& tree : model.forest.trees()) sum += walk(tree, fv.values);
            CHECK(r.score == doctest::Approx(sum / 5.0).epsilon(1e-12));
        }
        for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score >= ranked[i].score);
    }
    SUBCASE("schema mismatch") {
        const auto model = train_feedback_model(synthetic_examples(30, ModelTier::Shallow, 1), ModelTier::Shallow,
                                                params, 1);
        const auto fv = extract_features("Think.", exercise(), {}, ModelTier::Baseline, ctx);
        CHECK_THROWS_AS(model.score(fv), Error);
        auto broken = model;
        broken.tier = ModelTier::Deep;
        const std::vector<std::string> texts{"Think."};
        CHECK_THROWS_AS(rank_candidates(texts, exercise(), {}, broken, ctx), Error);
    }
}

TEST_CASE("synthetic examples are deterministic and learnable") {
    const auto a = synthetic_examples(450, ModelTier::Deep, 42);
    const auto b = synthetic_examples(450, ModelTier::Deep, 42);
    REQUIRE(a.size() == 450);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].features.values == b[i].features.values);
    const auto data = to_dataset(a);
    CHECK(data.count(1) > 150);
    CHECK(data.count(0) > 150);
}

TEST_CASE("cross-validating a feedback forest") {
    const auto examples = synthetic_examples(450, ModelTier::Deep, 0);
    const auto report = cross_validate_model(examples, 50, {10, 6, 2, 0}, 0);
    REQUIRE(report.folds.size() == 50);
    for (const auto& f : report.folds) CHECK(f.size == 9);
    // The generating rule is learnable: well above the majority rate.
    CHECK(report.accuracy.mean > 0.65);
    CHECK(report.accuracy.lower < report.accuracy.mean);
    CHECK(report.f1.upper > report.f1.mean);
    CHECK(cross_validate_model(examples, 50, {10, 6, 2, 0}, 0).to_json() == report.to_json());
}
