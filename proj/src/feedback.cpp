#include "tutor/feedback.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "tutor/error.hpp"
#include "tutor/hint_generation.hpp"
#include "tutor/rng.hpp"

namespace tutor::feedback {

namespace {

std::vector<std::string> build_names(ModelTier tier) {
    std::vector<std::string> names = {"token_length",  "char_length", "keyword_overlap",
                                      "topic_overlap", "lm_score",    "tfidf_cosine_question"};
    if (tier == ModelTier::Baseline) return names;
    for (const char* n : {"attempted", "proportion_correct", "proportion_incorrect", "skips", "mean_attempts_per_exercise"})
        names.emplace_back(n);
    if (tier == ModelTier::Shallow) return names;
    for (std::size_t t = 1; t <= kHistoryTurns; ++t)
        for (const char* n : {"attempt_tokens", "attempt_cosine", "graded_correct", "intervention_shown"})
            names.push_back("turn" + std::to_string(t) + "_" + n);
    return names;
}

std::set<std::string> head_stems(std::span<const text::Token> tokens) {
    std::set<std::string> out;
    for (const auto& np : text::extract_noun_phrases(tokens)) out.insert(text::stem(tokens[np.head].normalized));
    return out;
}

std::size_t word_count(std::span<const text::Token> tokens) {
    return static_cast<std::size_t>(
        std::count_if(tokens.begin(), tokens.end(), [](const text::Token& t) { return t.tag != text::Tag::Punct; }));
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double best_expectation_cosine(std::string_view attempt, const Exercise& exercise, const text::CorpusStats& stats) {
    const auto v = text::tfidf_vector(attempt, stats);
    double best = 0.0;
    for (const auto& e : exercise.expectations)
        best = std::max(best, text::cosine_similarity(v, text::tfidf_vector(e, stats)));
    return best;
}

}  // namespace

const std::vector<std::string>& feature_names(ModelTier tier) {
    static const std::vector<std::string> baseline = build_names(ModelTier::Baseline);
    static const std::vector<std::string> shallow = build_names(ModelTier::Shallow);
    static const std::vector<std::string> deep = build_names(ModelTier::Deep);
    switch (tier) {
        case ModelTier::Baseline: return baseline;
        case ModelTier::Shallow: return shallow;
        case ModelTier::Deep: return deep;
    }
    return deep;
}

std::size_t feature_count(ModelTier tier) { return feature_names(tier).size(); }

std::string schema_hash(ModelTier tier) { return schema_hash(tier_name(tier), feature_names(tier)); }

std::string schema_hash(std::string_view tier, std::span<const std::string> names) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    };
    mix(tier);
    for (const auto& n : names) mix(n);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

FeatureContext FeatureContext::from_bank(std::span<const Exercise> bank, std::span<const std::string> extra_sentences) {
    FeatureContext ctx;
    std::vector<std::string> documents;
    std::vector<std::string> lm_sentences;
    for (const auto& ex : bank) {
        documents.push_back(ex.question);
        for (const auto& e : ex.expectations) {
            documents.push_back(e);
            for (auto& s : text::sentences(e)) lm_sentences.push_back(std::move(s));
        }
    }
    for (const auto& s : extra_sentences) lm_sentences.push_back(s);
    if (documents.empty()) documents.emplace_back();
    ctx.stats = text::CorpusStats::from_documents(documents);
    ctx.lm = text::NGramModel::train(lm_sentences, 2, 0.5);
    return ctx;
}

FeatureVector extract_features(std::string_view candidate, const Exercise& exercise, const StudentState& student,
                               ModelTier tier, const FeatureContext& context) {
    FeatureVector fv;
    fv.tier = tier;
    fv.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_count(tier)));
    Eigen::Index k = 0;

    const auto tokens = text::tokenize(candidate);
    const auto question_tokens = text::tokenize(exercise.question);
    const std::size_t words = word_count(tokens);
    fv.values(k++) = static_cast<double>(words);
    fv.values(k++) = static_cast<double>(candidate.size());

    const auto keywords = hints::extract_question_keywords(exercise.question);
    std::set<std::string> candidate_stems;
    for (const auto& t : tokens)
        if (t.tag != text::Tag::Punct) candidate_stems.insert(text::stem(t.normalized));
    std::size_t hit = 0;
    for (const auto& kw : keywords.keywords) hit += candidate_stems.count(text::stem(kw.head));
    fv.values(k++) = ratio(static_cast<double>(hit), static_cast<double>(keywords.keywords.size()));

    auto topics = head_stems(question_tokens);
    for (const auto& e : exercise.expectations) {
        const auto et = text::tokenize(e);
        for (auto& h : head_stems(et)) topics.insert(std::move(h));
    }
    const auto candidate_heads = head_stems(tokens);
    std::size_t shared = 0;
    for (const auto& h : candidate_heads) shared += topics.count(h);
    fv.values(k++) = ratio(static_cast<double>(shared), static_cast<double>(candidate_heads.size()));

    fv.values(k++) = words == 0 ? 0.0 : text::lm_score(tokens, context.lm);
    fv.values(k++) = text::cosine_similarity(text::tfidf_vector(candidate, context.stats),
                                             text::tfidf_vector(exercise.question, context.stats));
    if (tier == ModelTier::Baseline) return fv;

    const StudentProfile fresh;
    const StudentProfile& p = student.profile ? *student.profile : fresh;
    const auto attempted = static_cast<double>(p.attempted);
    fv.values(k++) = attempted;
    fv.values(k++) = ratio(static_cast<double>(p.correct), attempted);
    fv.values(k++) = ratio(static_cast<double>(p.incorrect), attempted);
    fv.values(k++) = static_cast<double>(p.skips);
    fv.values(k++) = ratio(attempted, static_cast<double>(p.exercises_seen));
    if (tier == ModelTier::Shallow) return fv;

    const auto& history = student.history;
    for (std::size_t slot = 0; slot < kHistoryTurns; ++slot) {
        if (slot >= history.size()) {
            k += 4;
            continue;
        }
        const auto& turn = history[history.size() - 1 - slot];
        const bool attempt = turn.event == EventKind::Attempt;
        fv.values(k++) = attempt ? static_cast<double>(word_count(text::tokenize(turn.content))) : 0.0;
        fv.values(k++) = attempt && !turn.latex ? best_expectation_cosine(turn.content, exercise, context.stats) : 0.0;
        fv.values(k++) = turn.grade == Grade::Correct ? 1.0 : 0.0;
        fv.values(k++) = turn.intervention ? 1.0 : 0.0;
    }
    return fv;
}

ml::Dataset<double> to_dataset(std::span<const TrainingExample> examples) {
    ml::Dataset<double> data;
    if (examples.empty()) return data;
    const auto dims = examples.front().features.values.size();
    data.features.resize(static_cast<Eigen::Index>(examples.size()), dims);
    data.labels.resize(static_cast<Eigen::Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& fv = examples[i].features;
        if (fv.values.size() != dims || fv.tier != examples.front().features.tier)
            throw Error("feedback.schema", "training examples mix feature schemas");
        data.features.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
        data.labels(static_cast<Eigen::Index>(i)) = examples[i].label;
    }
    return data;
}

double FeedbackModel::score(const FeatureVector& features) const {
    if (features.tier != tier || features.values.size() != forest.dims())
        throw Error("feedback.schema", "feature schema mismatch: model expects " + std::to_string(forest.dims()) +
                                           " " + std::string(tier_name(tier)) + " features, got " +
                                           std::to_string(features.values.size()));
    return forest.predict_proba(features.values.transpose());
}

FeedbackModel train_feedback_model(std::span<const TrainingExample> examples, ModelTier tier,
                                   const ml::ForestParams& params, std::uint64_t seed) {
    for (const auto& e : examples)
        if (e.features.tier != tier) throw Error("feedback.schema", "training example tier does not match");
    FeedbackModel model;
    model.tier = tier;
    model.forest = ml::train_random_forest(to_dataset(examples), params, seed);
    model.meta.seed = seed;
    model.meta.examples = examples.size();
    return model;
}

ml::CvReport cross_validate_model(std::span<const TrainingExample> examples, int k_folds,
                                  const ml::ForestParams& params, std::uint64_t seed) {
    ml::Trainer<double> trainer = [&](const ml::Dataset<double>& train) {
        auto forest = ml::train_random_forest(train, params, seed);
        return ml::Predictor<double>([forest](const ml::Dataset<double>& test) { return forest.predict(test.features); });
    };
    return ml::cross_validate(to_dataset(examples), k_folds, trainer, seed);
}

std::vector<RankedCandidate> rank_candidates(std::span<const std::string> candidates, const Exercise& exercise,
                                             const StudentState& student, const FeedbackModel& model,
                                             const FeatureContext& context) {
    if (static_cast<std::size_t>(model.forest.dims()) != feature_count(model.tier))
        throw Error("feedback.schema", "model feature count does not match its tier schema");
    std::vector<RankedCandidate> out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        out.push_back({i, candidates[i],
                       model.score(extract_features(candidates[i], exercise, student, model.tier, context))});
    std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.text.size() != b.text.size()) return a.text.size() < b.text.size();
        return a.text < b.text;
    });
    return out;
}

std::vector<TrainingExample> synthetic_examples(std::size_t n, ModelTier tier, std::uint64_t seed) {
    Rng rng(seed);
    const auto dims = static_cast<Eigen::Index>(feature_count(tier));
    std::vector<TrainingExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TrainingExample ex;
        ex.features.tier = tier;
        ex.features.values.resize(dims);
        for (Eigen::Index d = 0; d < dims; ++d) ex.features.values(d) = uniform_unit(rng);
        // Two informative features (topic overlap and TF-IDF cosine) plus 10% label noise.
        const double signal = ex.features.values(3) + ex.features.values(5);
        ex.label = signal > 1.0 ? 1 : 0;
        if (bernoulli(rng, 0.1)) ex.label = 1 - ex.label;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace tutor::feedback
