#include <doctest.h>

#include <chrono>
#include <fstream>

#include "tutor/error.hpp"
#include "tutor/hint_generation.hpp"

using namespace tutor;
using namespace tutor::hints;

namespace {

Exercise underfit_exercise() {
    Exercise ex;
    ex.id = "ml-underfit";
    ex.question = "What is the difference between overfitting and underfitting?";
    ex.expectations = {"A model is underfitting when it has a high bias."};
    return ex;
}

std::vector<std::string> keyword_texts(const text::KeywordSet& set) {
    std::vector<std::string> out;
    for (const auto& k : set.keywords) out.push_back(k.text);
    return out;
}

}  // namespace

TEST_CASE("question keywords") {
    CHECK(keyword_texts(extract_question_keywords(underfit_exercise().question)) ==
          std::vector<std::string>{"difference", "overfitting", "underfitting"});
    CHECK(extract_question_keywords("Why?").empty());
    CHECK(keyword_texts(extract_question_keywords("Define gradient descent.")) ==
          std::vector<std::string>{"gradient descent"});
}

TEST_CASE("hint span selection") {
    const auto keywords = extract_question_keywords(underfit_exercise().question);
    SUBCASE("underfitting") {
        const auto spans = select_hint_spans(underfit_exercise().expectations[0], keywords);
        REQUIRE(spans.size() == 1);
        CHECK(spans[0].text == "when it has a high bias");
    }
    SUBCASE("keyword-only expectation") { CHECK(select_hint_spans("Overfitting and underfitting.", keywords).empty()); }
    SUBCASE("two keyword-free subordinate clauses in order") {
        const auto spans = select_hint_spans(
            "Underfitting occurs when the model is too simple, because it cannot capture the trend.", keywords);
        REQUIRE(spans.size() == 2);
        CHECK(spans[0].text == "when the model is too simple");
        CHECK(spans[1].text == "because it cannot capture the trend");
    }
}

TEST_CASE("hint assembly") {
    text::ClauseSpan span;
    span.text = "when it has a high bias";
    span.introducer = "when";
    const std::vector<DiscourseCue> cues = {{"case-when", "Think about the case {span}", "when"},
                                            {"generic", "Consider that {span}.", std::nullopt}};
    CHECK(assemble_hint(span, cues).text == "Think about the case when it has a high bias.");

    text::ClauseSpan because;
    because.text = "because it converges";
    because.introducer = "because";
    const auto generic = assemble_hint(because, cues);
    CHECK(generic.cue_id == "generic");
    CHECK(generic.text == "Consider that because it converges.");

    text::ClauseSpan edges;
    edges.text = "and The loss can diverge so";
    CHECK(assemble_hint(edges, cues).text == "Consider that the loss can diverge.");
    edges.text = "SGD needs a schedule";
    CHECK(assemble_hint(edges, cues).text == "Consider that SGD needs a schedule.");
    const std::vector<DiscourseCue> leading = {{"bare", "{span}", std::nullopt}};
    edges.text = "or the weights shrink";
    CHECK(assemble_hint(edges, leading).text == "The weights shrink.");

    CHECK_THROWS_AS(assemble_hint(span, std::vector<DiscourseCue>{}), Error);
}

TEST_CASE("underfitting hint end to end") {
    const auto start = std::chrono::steady_clock::now();
    const auto hints = generate_candidates(underfit_exercise());
    const auto elapsed = std::chrono::steady_clock::now() - start;
    REQUIRE(hints.size() == 1);
    CHECK(hints[0].text == "Think about the case when it has a high bias.");
    CHECK(hints[0].cue_id == "case-when");
    CHECK(std::chrono::duration<double>(elapsed).count() < 1.0);
}

TEST_CASE("candidate generation over several expectations") {
    Exercise ex;
    ex.id = "reg";
    ex.question = "Why is regularization useful?";
    ex.expectations = {"Regularization helps when the training set is small.",
                       "Regularization is useful because it penalizes large weights.",
                       "Regularization helps when the training set is small."};
    const auto hints = generate_candidates(ex);
    REQUIRE(hints.size() == 2);
    CHECK(hints[0].text == "Think about the case when the training set is small.");
    CHECK(hints[0].expectation_id == 0);
    CHECK(hints[1].text == "Remember that this holds because it penalizes large weights.");
    CHECK(hints[1].expectation_id == 1);

    const auto keywords = extract_question_keywords(ex.question);
    for (const auto& h : hints) {
        CHECK_FALSE(keywords.contains(h.text));
        CHECK(h.keyword_free);
        CHECK(ex.expectations[h.expectation_id].find(h.span.text) != std::string::npos);
    }
    CHECK(generate_candidates(ex).size() == hints.size());
}

TEST_CASE("exercise with only keyword-bearing clauses yields nothing") {
    Exercise ex;
    ex.id = "kw";
    ex.question = "What is overfitting?";
    ex.expectations = {"Overfitting."};
    CHECK(generate_candidates(ex).empty());
}

TEST_CASE("cue inventory file") {
    const auto cues = load_cues(std::string(TUTOR_DATA_DIR) + "/cues.json");
    CHECK(cues == default_cues());
    CHECK_THROWS_AS(parse_cues(R"([{"cue_id":"x","template":"no slot"}])"), Error);
    CHECK_THROWS_AS(parse_cues("not json"), Error);
}
