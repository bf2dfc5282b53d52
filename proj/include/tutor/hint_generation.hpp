#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tutor/domain.hpp"
#include "tutor/text_analysis.hpp"

namespace tutor::hints {

/// A discourse prefix wrapped around a keyword-free span. The template holds exactly
/// one "{span}" slot.
struct DiscourseCue {
    std::string cue_id;
    std::string templ;
    std::optional<std::string> required_introducer;

    friend bool operator==(const DiscourseCue&, const DiscourseCue&) = default;
};

/// The shipped inventory, keyed on introducers when/if/because/that plus a generic cue.
const std::vector<DiscourseCue>& default_cues();

/// JSON list of {cue_id, template, required_introducer}.
std::vector<DiscourseCue> parse_cues(std::string_view json);
std::vector<DiscourseCue> load_cues(const std::string& path);

struct HintCandidate {
    std::string text;
    std::string exercise_id;
    std::size_t expectation_id = 0;
    text::ClauseSpan span;
    std::string cue_id;
    bool keyword_free = true;
};

/// Minimum number of non-punctuation tokens for a span to be used as a hint.
inline constexpr std::size_t kMinSpanTokens = 3;

text::KeywordSet extract_question_keywords(std::string_view question);

/// Keyword-free clause spans of the expectation, in order of appearance.
std::vector<text::ClauseSpan> select_hint_spans(std::string_view expectation, const text::KeywordSet& keywords);

HintCandidate assemble_hint(const text::ClauseSpan& span, std::span<const DiscourseCue> cues);

std::vector<HintCandidate> generate_candidates(const Exercise& exercise,
                                               std::span<const DiscourseCue> cues = default_cues());

}  // namespace tutor::hints
