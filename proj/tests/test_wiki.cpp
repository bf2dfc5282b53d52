#include <doctest.h>

#include "tutor/error.hpp"
#include "tutor/wiki.hpp"

using namespace tutor;
using namespace tutor::wiki;

namespace {

const char* kFixture =
    R"({"title": "Linear regression", "text": "Linear regression is a linear approach for modelling the relationship between a scalar response and explanatory variables. It minimizes squared error. The method dates to Legendre and Gauss.\n\nLinear regression is widely used in practice.", "links": ["Regression analysis"], "tags": ["statistics"]}
{"title": "Logistic regression", "text": "Logistic regression is a statistical model that uses a logistic function to model a binary dependent variable. They are fitted by maximum likelihood.", "links": [], "tags": ["statistics"]}
{"title": "Empty", "text": "   ", "links": [], "tags": []}

{"title": "Overfitting", "text": "Overfitting is the production of an analysis that corresponds too closely to a particular set of data.", "links": [], "tags": ["ml"]}
)";

ml::DecisionTree<double> stump(int feature, double threshold, double left_p, double right_p) {
    using Node = ml::DecisionTree<double>::Node;
    Node root;
    root.feature = feature;
    root.threshold = threshold;
    root.left = 1;
    root.right = 2;
    Node left;
    left.probability = left_p;
    left.label = left_p >= 0.5;
    Node right;
    right.probability = right_p;
    right.label = right_p >= 0.5;
    return ml::DecisionTree<double>::from_nodes({root, left, right}, kExplanationFeatures);
}

}  // namespace

TEST_CASE("ingestion") {
    const auto index = ArticleIndex::from_jsonl(kFixture);
    CHECK(index.articles().size() == 3);
    CHECK(index.skipped() == 1);
    REQUIRE(index.lookup("linear regression").size() == 1);
    CHECK(index.lookup("Linear Regression")[0]->title == "Linear regression");
    CHECK(index.lookup("overfitting").size() == 1);
    const auto both = index.lookup("regression");
    REQUIRE(both.size() == 2);
    CHECK(both[0]->title == "Linear regression");
    CHECK(both[1]->title == "Logistic regression");
    CHECK(index.lookup("quantum").empty());
    CHECK(index.articles()[0].first_paragraph.find("widely") == std::string::npos);

    SUBCASE("every key appears in the title or first paragraph") {
        for (const auto& [key, ids] : index.entries()) {
            for (auto id : ids) {
                const auto& a = index.articles()[id];
                CHECK((index_key(a.title).find(key) != std::string::npos ||
                       index_key(a.first_paragraph).find(key) != std::string::npos));
            }
        }
    }
    SUBCASE("synonyms") {
        auto with = ArticleIndex::from_jsonl(kFixture);
        with.set_synonyms({{"ols", {"linear regression"}}});
        REQUIRE(with.lookup("OLS").size() == 1);
        CHECK(with.lookup("OLS")[0]->title == "Linear regression");
    }
    SUBCASE("malformed line") {
        CHECK_THROWS_WITH_AS(ArticleIndex::from_jsonl("{\"title\": \"a\", \"text\": \"b.\"}\nnot json\n"),
                             doctest::Contains("line 2"), Error);
    }
}

TEST_CASE("extraction and generation") {
    const auto index = ArticleIndex::from_jsonl(kFixture);
    const auto& linear = index.articles()[0];
    const auto extracted = extract_explanation(linear);
    CHECK(extracted.kind == ExplanationKind::Extracted);
    CHECK(extracted.text ==
          "Linear regression is a linear approach for modelling the relationship between a scalar response and "
          "explanatory variables.");
    CHECK(extracted.first_sentence == 0);
    CHECK(extracted.last_sentence == 0);
    CHECK_THROWS_AS(extract_explanation(WikiArticle{}), Error);

    CHECK(substitute_leading_pronoun("It minimizes squared error.", "linear regression") ==
          "Linear regression minimizes squared error.");
    CHECK(substitute_leading_pronoun("This method is old.", "linear regression") == "This method is old.");
    CHECK(substitute_leading_pronoun("Linear regression is old.", "linear regression") == "Linear regression is old.");

    const auto generated = generate_candidates(linear, "linear regression");
    REQUIRE(generated.size() == 2);
    CHECK(generated[0].text == "Linear regression minimizes squared error.");
    CHECK(generated[0].first_sentence == 1);
    CHECK(generated[1].text == "Linear regression is widely used in practice.");
    CHECK(generated[1].first_sentence == 3);
    CHECK(generate_candidates(index.articles()[2], "overfitting").empty());
    CHECK(generate_candidates(linear, "gradient boosting").size() == 1);  // the pronoun sentence only

    SUBCASE("generated text traces back to its source sentences") {
        for (const auto& c : generated) {
            std::string rebuilt;
            for (auto i = c.first_sentence; i <= c.last_sentence; ++i)
                rebuilt += (rebuilt.empty() ? "" : " ") + substitute_leading_pronoun(linear.sentences[i], "linear regression");
            CHECK(rebuilt == c.text);
        }
    }
}

TEST_CASE("selection") {
    const auto index = ArticleIndex::from_jsonl(kFixture);
    SUBCASE("keyword not indexed") { CHECK_FALSE(score_and_select("quantum", index, stump(0, 10, 1, 1))); }
    SUBCASE("short candidates only") {
        // Token length <= 8 scores 0.9, longer 0.2: the generated sentences win.
        const auto best = score_and_select("linear regression", index, stump(0, 8.0, 0.9, 0.2));
        REQUIRE(best);
        CHECK(best->kind == ExplanationKind::Generated);
        CHECK(best->text == "Linear regression minimizes squared error.");
        CHECK(*best->quality == 0.9);
    }
    SUBCASE("long candidates only") {
        const auto best = score_and_select("linear regression", index, stump(0, 8.0, 0.2, 0.9));
        REQUIRE(best);
        CHECK(best->kind == ExplanationKind::Extracted);
    }
    SUBCASE("ties go to the extracted sentence") {
        const auto best = score_and_select("overfitting", index, stump(0, 100.0, 0.7, 0.7));
        REQUIRE(best);
        CHECK(best->kind == ExplanationKind::Extracted);
        const auto both = score_and_select("linear regression", index, stump(0, 100.0, 0.7, 0.7));
        REQUIRE(both);
        CHECK(both->kind == ExplanationKind::Extracted);
    }
    SUBCASE("nothing above threshold") {
        CHECK_FALSE(score_and_select("linear regression", index, stump(0, 8.0, 0.5, 0.1)));
    }
    SUBCASE("schema") {
        CHECK_THROWS_AS(score_and_select("overfitting", index, ml::DecisionTree<double>::from_nodes({{}}, 3)), Error);
    }
}

TEST_CASE("training set convention") {
    const auto index = ArticleIndex::from_jsonl(kFixture);
    const auto examples = training_examples(index);
    std::size_t positives = 0;
    for (const auto& e : examples) {
        if (e.label == 1) {
            ++positives;
            CHECK(e.candidate.kind == ExplanationKind::Extracted);
            const auto* article = index.lookup(e.candidate.article).front();
            CHECK(e.candidate.text == article->sentences.front());
        } else {
            CHECK(e.candidate.kind == ExplanationKind::Generated);
            CHECK(e.candidate.first_sentence >= 1);
        }
        CHECK(e.candidate.features.size() == 5);
    }
    CHECK(positives == index.articles().size());
    CHECK(examples.size() == 5);
    const auto model = train_quality_model(index, 1);
    CHECK(model.dims() == 5);
    CHECK(train_quality_model(index, 1) == model);
}
