#include "tutor/domain.hpp"

#include "tutor/error.hpp"

namespace tutor {

namespace {

template <typename E, std::size_t N>
E parse_name(std::string_view name, const std::pair<E, std::string_view> (&table)[N], const char* what) {
    for (const auto& [e, n] : table)
        if (n == name) return e;
    throw Error("core.parse", std::string("unknown ") + what + " '" + std::string(name) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::pair<E, std::string_view> (&table)[N]) {
    for (const auto& [v, n] : table)
        if (v == e) return n;
    return "?";
}

constexpr std::pair<ModelTier, std::string_view> kTiers[] = {
    {ModelTier::Baseline, "baseline"}, {ModelTier::Shallow, "shallow"}, {ModelTier::Deep, "deep"}};

constexpr std::pair<EventKind, std::string_view> kEvents[] = {
    {EventKind::Attempt, "Attempt"}, {EventKind::Help, "Help"}, {EventKind::Skip, "Skip"}};

constexpr std::pair<Grade, std::string_view> kGrades[] = {{Grade::Correct, "Correct"},
                                                           {Grade::Incorrect, "Incorrect"}};

constexpr std::pair<InterventionType, std::string_view> kInterventions[] = {
    {InterventionType::TextHint, "TextHint"},
    {InterventionType::WikiExplanation, "WikiExplanation"},
    {InterventionType::MathGapHint, "MathGapHint"},
    {InterventionType::MathDiffHint, "MathDiffHint"},
    {InterventionType::Elaboration, "Elaboration"},
    {InterventionType::ConceptTree, "ConceptTree"},
    {InterventionType::MultipleChoice, "MultipleChoice"},
};

}  // namespace

std::string_view tier_name(ModelTier tier) { return name_of(tier, kTiers); }
ModelTier parse_tier(std::string_view name) { return parse_name(name, kTiers, "tier"); }
std::string_view event_name(EventKind kind) { return name_of(kind, kEvents); }
EventKind parse_event(std::string_view name) { return parse_name(name, kEvents, "event"); }
std::string_view grade_name(Grade grade) { return name_of(grade, kGrades); }
Grade parse_grade(std::string_view name) { return parse_name(name, kGrades, "grade"); }
std::string_view intervention_name(InterventionType type) { return name_of(type, kInterventions); }
InterventionType parse_intervention(std::string_view name) {
    return parse_name(name, kInterventions, "intervention type");
}

bool is_implemented(InterventionType type) {
    switch (type) {
        case InterventionType::TextHint:
        case InterventionType::WikiExplanation:
        case InterventionType::MathGapHint:
        case InterventionType::MathDiffHint:
            return true;
        default:
            return false;
    }
}

}  // namespace tutor
