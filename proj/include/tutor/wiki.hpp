#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tutor/ml/decision_tree.hpp"
#include "tutor/text_analysis.hpp"

namespace tutor::wiki {

struct WikiArticle {
    std::string title;
    std::vector<std::string> sentences;
    std::string first_paragraph;
    std::vector<std::string> links;
    std::vector<std::string> tags;
};

enum class ExplanationKind { Extracted, Generated };

std::string_view kind_name(ExplanationKind kind);

struct ExplanationCandidate {
    std::string text;
    ExplanationKind kind = ExplanationKind::Extracted;
    std::string article;
    std::size_t first_sentence = 0;  // inclusive sentence range in the article
    std::size_t last_sentence = 0;
    Eigen::VectorXd features;
    std::optional<double> quality;
};

/// Keys are lowercased words joined by single spaces, each word stemmed.
std::string index_key(std::string_view phrase);

class ArticleIndex {
public:
    /// One article per line: {"title", "text", "links", "tags"}. Articles whose text has
    /// no sentence are skipped and counted.
    static ArticleIndex from_jsonl(std::string_view contents);
    static ArticleIndex load(const std::string& path);

    /// Term -> synonyms, consulted when a keyword has no direct entry.
    void set_synonyms(std::map<std::string, std::vector<std::string>> synonyms);
    static std::map<std::string, std::vector<std::string>> load_synonyms(const std::string& path);

    /// Articles indexed under the keyword (or, failing that, under a synonym), in corpus order.
    std::vector<const WikiArticle*> lookup(std::string_view keyword) const;

    const std::vector<WikiArticle>& articles() const { return articles_; }
    const std::map<std::string, std::vector<std::size_t>>& entries() const { return entries_; }
    std::size_t skipped() const { return skipped_; }
    const text::CorpusStats& stats() const { return stats_; }
    const text::NGramModel& lm() const { return lm_; }

private:
    std::vector<WikiArticle> articles_;
    std::map<std::string, std::vector<std::size_t>> entries_;
    std::map<std::string, std::vector<std::string>> synonyms_;
    std::size_t skipped_ = 0;
    text::CorpusStats stats_;
    text::NGramModel lm_{2, 0.5};
};

/// The first sentence, verbatim.
ExplanationCandidate extract_explanation(const WikiArticle& article);

/// Replaces a leading It/This/They used as a subject with the keyword (capitalized).
/// Returns the sentence unchanged when there is no such pronoun.
std::string substitute_leading_pronoun(std::string_view sentence, std::string_view keyword);

/// Body sentences that mention the keyword or open with a subject pronoun, after
/// substitution. A following sentence that opens with a pronoun extends the window to two.
std::vector<ExplanationCandidate> generate_candidates(const WikiArticle& article, std::string_view keyword);

inline constexpr std::size_t kExplanationFeatures = 5;
inline constexpr double kQualityThreshold = 0.5;

/// {token length, TF-IDF cosine to the keyword, LM score, capitalized-word density
/// after the first word, relative position of the first keyword token (1 if absent)}.
Eigen::VectorXd explanation_features(std::string_view text, std::string_view keyword, const ArticleIndex& index);

/// Highest-quality candidate over all indexed articles with probability above the
/// threshold. Extracted candidates win ties.
std::optional<ExplanationCandidate> score_and_select(std::string_view keyword, const ArticleIndex& index,
                                                     const ml::DecisionTree<double>& model);

struct LabelledExplanation {
    ExplanationCandidate candidate;
    int label = 0;
};

/// First sentences are positives; pronoun-substituted body sentences generated for the
/// article title are negatives.
std::vector<LabelledExplanation> training_examples(const ArticleIndex& index);

/// Trains the quality tree on `training_examples`, oversampling the minority class
/// to balance when it has at least two members.
ml::DecisionTree<double> train_quality_model(const ArticleIndex& index, std::uint64_t seed, int max_depth = 4);

}  // namespace tutor::wiki
