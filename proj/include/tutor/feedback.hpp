#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tutor/domain.hpp"
#include "tutor/ml/cross_validation.hpp"
#include "tutor/ml/random_forest.hpp"
#include "tutor/text_analysis.hpp"

namespace tutor::feedback {

/// Turns of history summarized by the deep tier, most recent first.
inline constexpr std::size_t kHistoryTurns = 4;

/// Feature names in schema order. Each tier's list is a prefix of the next one.
const std::vector<std::string>& feature_names(ModelTier tier);
std::size_t feature_count(ModelTier tier);

/// FNV-1a over the tier name and its feature names, as 16 hex digits.
std::string schema_hash(ModelTier tier);
std::string schema_hash(std::string_view tier, std::span<const std::string> names);

struct FeatureVector {
    ModelTier tier = ModelTier::Baseline;
    Eigen::VectorXd values;

    const std::vector<std::string>& names() const { return feature_names(tier); }
};

/// Corpus-level resources shared by all feature computations.
struct FeatureContext {
    text::CorpusStats stats;
    text::NGramModel lm{2, 0.5};

    /// TF-IDF statistics over every question and expectation; the language model over
    /// expectation sentences plus any extra sentences given.
    static FeatureContext from_bank(std::span<const Exercise> bank, std::span<const std::string> extra_sentences = {});
};

/// What the model sees about the student when a candidate is scored.
struct StudentState {
    const StudentProfile* profile = nullptr;
    std::span<const InteractionTurn> history;  // this student's turns, oldest first
};

FeatureVector extract_features(std::string_view candidate, const Exercise& exercise, const StudentState& student,
                               ModelTier tier, const FeatureContext& context);

struct TrainingExample {
    FeatureVector features;
    int label = 0;
};

ml::Dataset<double> to_dataset(std::span<const TrainingExample> examples);

struct TrainingMetadata {
    std::uint64_t seed = 0;
    std::string data_hash;
    std::string date;
    std::size_t examples = 0;
};

/// A forest bound to the feature schema it was trained on.
struct FeedbackModel {
    ModelTier tier = ModelTier::Baseline;
    ml::RandomForest<double> forest;
    TrainingMetadata meta;

    double score(const FeatureVector& features) const;
};

FeedbackModel train_feedback_model(std::span<const TrainingExample> examples, ModelTier tier,
                                   const ml::ForestParams& params, std::uint64_t seed);

/// k-fold cross-validation of a forest with the given parameters; every fold's forest
/// uses the same seed.
ml::CvReport cross_validate_model(std::span<const TrainingExample> examples, int k_folds,
                                  const ml::ForestParams& params, std::uint64_t seed);

struct RankedCandidate {
    std::size_t index = 0;  // position in the input list
    std::string text;
    double score = 0.0;
};

/// Descending probability; ties by shorter text, then lexicographic.
std::vector<RankedCandidate> rank_candidates(std::span<const std::string> candidates, const Exercise& exercise,
                                             const StudentState& student, const FeedbackModel& model,
                                             const FeatureContext& context);

/// Labelled examples with a known generating rule, for exercising training and
/// cross-validation without recorded data. The label depends on a handful of features
/// through a noisy threshold.
std::vector<TrainingExample> synthetic_examples(std::size_t n, ModelTier tier, std::uint64_t seed);

}  // namespace tutor::feedback
