#include "tutor/hint_generation.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tutor/error.hpp"

namespace tutor::hints {

namespace {

constexpr std::string_view kSlot = "{span}";

bool is_interrogative(std::string_view w) {
    return w == "what" || w == "which" || w == "who" || w == "whom" || w == "whose" || w == "how" ||
           w == "why" || w == "where" || w == "when";
}

std::size_t word_count(std::span<const text::Token> tokens, std::size_t b, std::size_t e) {
    std::size_t n = 0;
    for (std::size_t i = b; i < e; ++i)
        if (tokens[i].tag != text::Tag::Punct) ++n;
    return n;
}

}  // namespace

const std::vector<DiscourseCue>& default_cues() {
    static const std::vector<DiscourseCue> cues = {
        {"case-when", "Think about the case {span}", "when"},
        {"case-if", "Think about what happens {span}", "if"},
        {"reason-because", "Remember that this holds {span}", "because"},
        {"recall-that", "Recall {span}", "that"},
        {"contrast-while", "Notice that this holds {span}", "while"},
        {"limit-until", "Keep in mind that this continues {span}", "until"},
        {"generic", "Consider that {span}.", std::nullopt},
    };
    return cues;
}

std::vector<DiscourseCue> parse_cues(std::string_view json) {
    std::vector<DiscourseCue> cues;
    try {
        for (const auto& item : nlohmann::json::parse(json)) {
            DiscourseCue cue;
            cue.cue_id = item.at("cue_id").get<std::string>();
            cue.templ = item.at("template").get<std::string>();
            if (item.contains("required_introducer") && !item["required_introducer"].is_null())
                cue.required_introducer = item["required_introducer"].get<std::string>();
            const auto first = cue.templ.find(kSlot);
            if (first == std::string::npos || cue.templ.find(kSlot, first + 1) != std::string::npos)
                throw Error("hints.cues", "cue '" + cue.cue_id + "' must contain exactly one {span} slot");
            cues.push_back(std::move(cue));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("hints.cues", std::string("malformed cue inventory: ") + e.what());
    }
    return cues;
}

std::vector<DiscourseCue> load_cues(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("hints.io", "cannot open cue inventory " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_cues(buffer.str());
}

text::KeywordSet extract_question_keywords(std::string_view question) {
    text::KeywordSet set;
    const auto tokens = text::tokenize(question);
    std::set<std::string> seen;
    for (const auto& np : text::extract_noun_phrases(tokens)) {
        if (is_interrogative(tokens[np.head].normalized)) continue;
        auto form = text::keyword_form(np, tokens);
        if (form.empty() || !seen.insert(form).second) continue;
        set.keywords.push_back({std::move(form), tokens[np.head].normalized});
    }
    return set;
}

std::vector<text::ClauseSpan> select_hint_spans(std::string_view expectation, const text::KeywordSet& keywords) {
    std::vector<text::ClauseSpan> out;
    for (auto [b, e] : text::split_sentences(expectation)) {
        const auto sentence = expectation.substr(b, e - b);
        const auto tokens = text::tokenize(sentence);
        if (tokens.empty()) continue;
        for (auto& span : text::segment_clauses(tokens, keywords, sentence)) {
            if (span.contains_keyword) continue;
            if (word_count(tokens, span.begin, span.end) < kMinSpanTokens) continue;
            out.push_back(std::move(span));
        }
    }
    return out;
}

HintCandidate assemble_hint(const text::ClauseSpan& span, std::span<const DiscourseCue> cues) {
    if (cues.empty()) throw Error("hints.no_cues", "cue list is empty");
    if (span.contains_keyword) throw Error("hints.keyword_span", "span contains a question keyword");
    const DiscourseCue* chosen = nullptr;
    for (const auto& cue : cues)
        if (cue.required_introducer && span.introducer && *cue.required_introducer == *span.introducer) {
            chosen = &cue;
            break;
        }
    if (!chosen)
        for (const auto& cue : cues)
            if (!cue.required_introducer) {
                chosen = &cue;
                break;
            }
    if (!chosen) throw Error("hints.no_cues", "no cue applies to the span and no generic cue is available");

    // Coordinators left at either edge by clause splitting read badly inside a cue.
    std::string body = span.text;
    for (std::string_view c : {"and ", "but ", "or ", "so "})
        if (text::to_lower(body.substr(0, c.size())) == c) {
            body.erase(0, c.size());
            break;
        }
    for (std::string_view c : {" and", " but", " or", " so"})
        if (body.size() > c.size() && text::to_lower(body.substr(body.size() - c.size())) == c) {
            body.erase(body.size() - c.size());
            break;
        }
    std::string text = chosen->templ;
    const auto slot = text.find(kSlot);
    // Mid-sentence slot: "The updates" -> "the updates", but acronyms keep their case.
    if (slot > 0 && body.size() > 1 && std::isupper(static_cast<unsigned char>(body[0])) &&
        std::islower(static_cast<unsigned char>(body[1])))
        body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
    text.replace(slot, kSlot.size(), body);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    if (!text.empty()) text.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(text.front())));
    if (text.empty() || (text.back() != '.' && text.back() != '!' && text.back() != '?')) text += '.';

    HintCandidate hint;
    hint.text = std::move(text);
    hint.span = span;
    hint.cue_id = chosen->cue_id;
    hint.keyword_free = true;
    return hint;
}

std::vector<HintCandidate> generate_candidates(const Exercise& exercise, std::span<const DiscourseCue> cues) {
    const auto keywords = extract_question_keywords(exercise.question);
    std::vector<HintCandidate> out;
    std::set<std::string> seen;
    for (std::size_t e = 0; e < exercise.expectations.size(); ++e) {
        for (const auto& span : select_hint_spans(exercise.expectations[e], keywords)) {
            auto hint = assemble_hint(span, cues);
            // The cue wording itself must not reintroduce a keyword.
            if (keywords.contains(hint.text)) continue;
            if (!seen.insert(text::to_lower(hint.text)).second) continue;
            hint.exercise_id = exercise.id;
            hint.expectation_id = e;
            out.push_back(std::move(hint));
        }
    }
    return out;
}

}  // namespace tutor::hints
