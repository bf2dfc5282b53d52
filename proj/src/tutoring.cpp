#include "tutor/tutoring.hpp"

#include <algorithm>
#include <set>

#include "tutor/error.hpp"
#include "tutor/rng.hpp"

namespace tutor::core {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace

math::ParseContext math_context(const MathExpectation& expectation) {
    math::ParseContext ctx;
    ctx.declared_functions.insert(expectation.functions.begin(), expectation.functions.end());
    const auto tree = math::parse_expression(expectation.latex, ctx);
    for (const auto& s : math::free_symbols(tree))
        if (!ctx.declared_functions.count(s)) ctx.variables.insert(s);
    return ctx;
}

GradeResult grade_attempt(std::string_view attempt, const Exercise& exercise, bool latex,
                          const text::CorpusStats& stats, double threshold, std::uint64_t seed) {
    if (blank(attempt)) throw Error("core.empty_attempt", "attempt on '" + exercise.id + "' is empty");
    GradeResult result;
    if (latex) {
        if (!exercise.math) throw Error("core.no_math", "exercise '" + exercise.id + "' has no math expectation");
        const auto ctx = math_context(*exercise.math);
        const auto expected = math::parse_expression(exercise.math->latex, ctx);
        try {
            const auto found = math::parse_expression(attempt, ctx);
            math::SamplingOptions options;
            options.seed = seed;
            result.verdict = math::check_equivalence(found, expected, options);
            if (result.verdict->verdict == math::Verdict::Equivalent) result.grade = Grade::Correct;
        } catch (const Error& e) {
            result.parse_error = e.what();
        }
        return result;
    }
    if (exercise.expectations.empty())
        throw Error("core.no_text", "exercise '" + exercise.id + "' only accepts LaTeX attempts");
    for (const auto& e : exercise.expectations) {
        if (e == attempt) {
            result.similarity = 1.0;
            result.grade = Grade::Correct;
            return result;
        }
    }
    const auto a = text::tfidf_vector(attempt, stats);
    for (const auto& e : exercise.expectations)
        result.similarity = std::max(result.similarity, text::cosine_similarity(a, text::tfidf_vector(e, stats)));
    if (result.similarity >= threshold) result.grade = Grade::Correct;
    return result;
}

std::string_view phase_name(Phase phase) {
    switch (phase) {
        case Phase::AwaitingAttempt: return "AwaitingAttempt";
        case Phase::InterventionShown: return "InterventionShown";
        case Phase::Solved: return "Solved";
        case Phase::Skipped: return "Skipped";
    }
    return "?";
}

Phase parse_phase(std::string_view name) {
    for (auto p : {Phase::AwaitingAttempt, Phase::InterventionShown, Phase::Solved, Phase::Skipped})
        if (phase_name(p) == name) return p;
    throw Error("core.phase", "unknown session phase '" + std::string(name) + "'");
}

SessionState advance_session(const SessionState& state, EventKind event, std::optional<Grade> grade) {
    if (state.terminal())
        throw Error("core.transition", "cannot apply " + std::string(event_name(event)) + " in state " +
                                           std::string(phase_name(state.phase)));
    SessionState next = state;
    switch (event) {
        case EventKind::Attempt:
            if (!grade) throw Error("core.transition", "Attempt in state " + std::string(phase_name(state.phase)) +
                                                           " has no grade");
            if (*grade == Grade::Correct) {
                next.phase = Phase::Solved;
            } else {
                next.phase = Phase::InterventionShown;
                ++next.attempt_index;
            }
            break;
        case EventKind::Help: next.phase = Phase::InterventionShown; break;
        case EventKind::Skip: next.phase = Phase::Skipped; break;
    }
    return next;
}

StudentProfile update_profile(StudentProfile profile, const InteractionTurn& turn, const Exercise* exercise) {
    switch (turn.event) {
        case EventKind::Attempt: {
            if (!turn.grade) throw Error("core.profile", "attempt turn " + std::to_string(turn.sequence) + " has no grade");
            const bool ok = *turn.grade == Grade::Correct;
            ++profile.attempted;
            ++(ok ? profile.correct : profile.incorrect);
            profile.skill = 0.9 * profile.skill + 0.1 * (ok ? 1.0 : 0.0);
            if (turn.attempt_index == 1) ++profile.exercises_seen;
            if (exercise) {
                for (const auto& tag : exercise->tags) {
                    auto& rec = profile.topics[tag];
                    ++rec.attempted;
                    if (ok) ++rec.correct;
                }
            }
            break;
        }
        case EventKind::Skip:
            ++profile.skips;
            if (turn.attempt_index == 1) ++profile.exercises_seen;
            break;
        case EventKind::Help: break;
    }
    return profile;
}

std::string_view mode_name(Mode mode) { return mode == Mode::Experiment ? "experiment" : "production"; }

Mode parse_mode(std::string_view name) {
    if (name == "experiment") return Mode::Experiment;
    if (name == "production") return Mode::Production;
    throw Error("core.mode", "unknown mode '" + std::string(name) + "'");
}

std::pair<double, double> zpd_band(double skill) {
    return {std::clamp(skill - kZpdHalfWidth, 0.0, 1.0), std::clamp(skill + kZpdHalfWidth, 0.0, 1.0)};
}

Intervention select_intervention(const SelectionInput& input, const std::map<ModelTier, feedback::FeedbackModel>& models,
                                 const feedback::FeatureContext& features, Mode mode, std::uint64_t seed) {
    if (!input.exercise || !input.material) throw Error("core.selection", "selection needs an exercise");
    const auto& ex = *input.exercise;
    const auto& mat = *input.material;

    std::vector<ModelTier> tiers;
    for (auto t : kAllTiers)
        if (models.empty() || models.count(t)) tiers.push_back(t);

    // Math hints carry no model score and are shared by every tier.
    std::optional<Intervention> math_item;
    if (mat.math_expectation) {
        if (input.diff) {
            math_item = Intervention{InterventionType::MathDiffHint, std::nullopt,
                                     "math-diff:" + std::string(math::diff_kind_name(input.diff->kind)),
                                     input.diff->message(), kNeutralScore};
        } else {
            try {
                const auto gap = math::make_gap_hint(*mat.math_expectation, math::BlankPolicy::BlankOneLeaf, seed);
                math_item = Intervention{InterventionType::MathGapHint, std::nullopt,
                                         "math-gap:" + std::to_string(seed), gap.rendered, kNeutralScore};
            } catch (const Error&) {
            }
        }
    }

    std::vector<std::string> hint_texts;
    for (const auto& h : mat.hints) hint_texts.push_back(h.text);
    auto hint_id = [&](std::size_t i) {
        const auto& h = mat.hints[i];
        return "hint:" + ex.id + ":" + std::to_string(h.expectation_id) + ":" + std::to_string(h.span.begin) + ":" +
               h.cue_id;
    };

    const auto skill = input.student.profile ? input.student.profile->skill : 0.5;
    const auto [lo, hi] = zpd_band(skill);

    std::vector<std::vector<Intervention>> pools;
    for (auto tier : tiers) {
        const auto found = models.find(tier);
        const feedback::FeedbackModel* model = found == models.end() ? nullptr : &found->second;
        std::vector<Intervention> pool;
        if (!hint_texts.empty()) {
            std::size_t index = 0;
            double score = kNeutralScore;
            if (model) {
                const auto ranked = feedback::rank_candidates(hint_texts, ex, input.student, *model, features);
                index = ranked.front().index;
                score = ranked.front().score;
            }
            pool.push_back({InterventionType::TextHint, tier, hint_id(index), hint_texts[index], score});
        }
        if (mat.explanation) {
            const auto& e = *mat.explanation;
            const double score =
                model ? model->score(feedback::extract_features(e.text, ex, input.student, tier, features)) : kNeutralScore;
            pool.push_back({InterventionType::WikiExplanation, tier,
                            "wiki:" + e.article + ":" + std::to_string(e.first_sentence) + "-" +
                                std::to_string(e.last_sentence),
                            e.text, score});
        }
        if (math_item) {
            auto m = *math_item;
            m.tier = tier;
            pool.push_back(std::move(m));
        }
        std::vector<Intervention> in_band;
        for (const auto& c : pool)
            if (c.score >= lo && c.score <= hi) in_band.push_back(c);
        pools.push_back(in_band.empty() ? std::move(pool) : std::move(in_band));
    }

    auto best_of = [](const std::vector<Intervention>& pool) {
        const Intervention* best = nullptr;
        for (const auto& c : pool)
            if (!best || c.score > best->score) best = &c;
        return best;
    };

    const Intervention* chosen = nullptr;
    if (mode == Mode::Experiment) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < pools.size(); ++i)
            if (!pools[i].empty()) open.push_back(i);
        if (!open.empty()) {
            Rng rng(seed);
            chosen = best_of(pools[open[uniform_index(rng, open.size())]]);
        }
    } else {
        for (const auto& pool : pools) {
            const auto* b = best_of(pool);
            if (b && (!chosen || b->score > chosen->score)) chosen = b;
        }
    }
    if (!chosen) return {InterventionType::TextHint, std::nullopt, "stock", std::string(kStockHint), 0.0};
    return *chosen;
}

std::vector<std::string> explanation_keywords(const Exercise& exercise) {
    std::vector<std::string> out;
    auto add = [&](const std::string& k) {
        if (!k.empty() && std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    };
    const auto keys = hints::extract_question_keywords(exercise.question);
    for (const auto& k : keys.keywords) add(k.text);
    for (const auto& k : keys.keywords) add(k.head);
    for (const auto& t : exercise.tags) add(t);
    return out;
}

TutorEngine::TutorEngine(std::shared_ptr<const TutorResources> resources) : resources_(std::move(resources)) {
    if (!resources_) throw Error("core.engine", "engine needs resources");
    const auto& r = *resources_;
    for (std::size_t i = 0; i < r.bank.size(); ++i) {
        const auto& ex = r.bank[i];
        if (!by_id_.emplace(ex.id, i).second) throw Error("core.bank", "duplicate exercise id '" + ex.id + "'");
        ExerciseMaterial m;
        m.hints = hints::generate_candidates(ex);
        if (r.wiki && r.wiki_model) {
            for (const auto& k : explanation_keywords(ex)) {
                m.explanation = wiki::score_and_select(k, *r.wiki, *r.wiki_model);
                if (m.explanation) break;
            }
        }
        if (ex.math) {
            math::ParseContext ctx;
            ctx.declared_functions.insert(ex.math->functions.begin(), ex.math->functions.end());
            m.math_expectation = math::parse_expression(ex.math->latex, ctx);
        }
        materials_.push_back(std::move(m));
    }
}

const Exercise& TutorEngine::exercise(std::string_view id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw Error("core.unknown_exercise", "unknown exercise '" + std::string(id) + "'");
    return resources_->bank[it->second];
}

const ExerciseMaterial& TutorEngine::material(std::string_view exercise_id) const {
    const auto it = by_id_.find(exercise_id);
    if (it == by_id_.end())
        throw Error("core.unknown_exercise", "unknown exercise '" + std::string(exercise_id) + "'");
    return materials_[it->second];
}

Session TutorEngine::open_session(std::string session_id, std::string student_id, std::string exercise_id) const {
    exercise(exercise_id);
    Session s;
    s.id = std::move(session_id);
    s.student_id = std::move(student_id);
    s.state.exercise_id = std::move(exercise_id);
    return s;
}

std::uint64_t TutorEngine::turn_seed(std::string_view session_id, std::uint64_t sequence) const {
    return derive_seed(derive_seed(resources_->master_seed, fnv1a(session_id)), sequence);
}

InteractionTurn TutorEngine::begin_turn(const Session& session, EventKind event) const {
    if (session.state.terminal())
        throw Error("core.transition", "cannot apply " + std::string(event_name(event)) + " in state " +
                                           std::string(phase_name(session.state.phase)));
    InteractionTurn t;
    t.student_id = session.student_id;
    t.session_id = session.id;
    t.sequence = session.next_sequence;
    t.exercise_id = session.state.exercise_id;
    t.attempt_index = session.state.attempt_index;
    t.event = event;
    return t;
}

StepResult TutorEngine::finish(Session& session, StudentRecord& student, InteractionTurn turn,
                               std::optional<GradeResult> grade) const {
    const auto& ex = exercise(turn.exercise_id);
    const auto next = advance_session(session.state, turn.event, turn.grade);
    student.profile = update_profile(std::move(student.profile), turn, &ex);
    if (next.phase == Phase::InterventionShown) {
        SelectionInput in;
        in.exercise = &ex;
        in.material = &material(ex.id);
        in.last_turn = &turn;
        if (grade && grade->verdict && grade->verdict->diff) in.diff = grade->verdict->diff;
        // The student state includes the turn being answered.
        student.history.push_back(turn);
        in.student = {&student.profile, student.history};
        const auto chosen = select_intervention(in, resources_->models, resources_->features, resources_->mode,
                                                turn_seed(session.id, turn.sequence));
        turn.intervention = chosen.record();
        student.history.back() = turn;
    } else {
        student.history.push_back(turn);
    }
    session.state = next;
    ++session.next_sequence;
    return {std::move(turn), next, std::move(grade)};
}

StepResult TutorEngine::attempt(Session& session, StudentRecord& student, std::string content, bool latex) const {
    auto turn = begin_turn(session, EventKind::Attempt);
    const auto& ex = exercise(turn.exercise_id);
    auto g = grade_attempt(content, ex, latex, resources_->features.stats, resources_->grade_threshold,
                           turn_seed(session.id, turn.sequence));
    turn.content = std::move(content);
    turn.latex = latex;
    turn.grade = g.grade;
    return finish(session, student, std::move(turn), std::move(g));
}

StepResult TutorEngine::help(Session& session, StudentRecord& student) const {
    return finish(session, student, begin_turn(session, EventKind::Help), std::nullopt);
}

StepResult TutorEngine::skip(Session& session, StudentRecord& student) const {
    return finish(session, student, begin_turn(session, EventKind::Skip), std::nullopt);
}

ReplayResult replay_log(const TutorEngine& engine, std::span<const InteractionTurn> log) {
    ReplayResult out;
    std::map<std::string, Session> sessions;
    std::map<std::string, StudentRecord> students;
    for (const auto& logged : log) {
        auto it = sessions.find(logged.session_id);
        if (it == sessions.end())
            it = sessions.emplace(logged.session_id,
                                  engine.open_session(logged.session_id, logged.student_id, logged.exercise_id))
                     .first;
        auto& student = students[logged.student_id];
        student.profile.id = logged.student_id;
        StepResult step;
        switch (logged.event) {
            case EventKind::Attempt: step = engine.attempt(it->second, student, logged.content, logged.latex); break;
            case EventKind::Help: step = engine.help(it->second, student); break;
            case EventKind::Skip: step = engine.skip(it->second, student); break;
        }
        step.turn.helpful_rating = logged.helpful_rating;
        student.history.back().helpful_rating = logged.helpful_rating;
        if (!(step.turn == logged)) {
            if (!out.first_mismatch)
                out.first_mismatch = "session " + logged.session_id + " turn " + std::to_string(logged.sequence);
            ++out.mismatches;
        }
        out.turns.push_back(std::move(step.turn));
    }
    for (const auto& [id, s] : sessions) out.states.emplace(id, s.state);
    return out;
}

std::vector<feedback::TrainingExample> examples_from_log(const TutorEngine& engine, std::span<const InteractionTurn> log,
                                                         ModelTier tier) {
    // Position of the next attempt by the same student on the same exercise.
    std::vector<std::optional<std::size_t>> next(log.size());
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> waiting;
    for (std::size_t i = 0; i < log.size(); ++i) {
        auto& open = waiting[{log[i].student_id, log[i].exercise_id}];
        if (log[i].event == EventKind::Attempt) {
            for (auto j : open) next[j] = i;
            open.clear();
        }
        open.push_back(i);
    }
    std::vector<feedback::TrainingExample> out;
    std::map<std::string, StudentRecord> students;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& turn = log[i];
        const auto& ex = engine.exercise(turn.exercise_id);
        auto& s = students[turn.student_id];
        s.profile = update_profile(std::move(s.profile), turn, &ex);
        s.history.push_back(turn);
        if (!turn.intervention || !next[i]) continue;
        // Selection saw this turn before its intervention was attached.
        s.history.back().intervention.reset();
        struct Restore {
            InteractionTurn& t;
            const InteractionTurn& src;
            ~Restore() { t.intervention = src.intervention; }
        } restore{s.history.back(), turn};
        const auto type = turn.intervention->type;
        if (type != InterventionType::TextHint && type != InterventionType::WikiExplanation) continue;
        if (turn.intervention->content_id == "stock") continue;
        const auto& after = log[*next[i]];
        feedback::TrainingExample e;
        e.features = feedback::extract_features(turn.intervention->text, ex, {&s.profile, s.history}, tier,
                                                engine.resources().features);
        e.label = after.grade == Grade::Correct ? 1 : 0;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace tutor::core
