#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tutor::text {

enum class Tag { Noun, Verb, Adj, Adv, Det, Pron, Prep, Conj, Num, Punct, Other };

std::string_view tag_name(Tag tag);
std::optional<Tag> parse_tag(std::string_view name);

struct Token {
    std::string surface;
    std::string normalized;
    Tag tag = Tag::Other;
    std::size_t start = 0;  // inclusive byte offset
    std::size_t end = 0;    // exclusive byte offset
};

/// Closed-class words and known open-class words with a fixed tag. Anything not
/// listed is tagged by suffix heuristics.
class Lexicon {
public:
    /// The built-in English lexicon covering the tutoring domain vocabulary.
    static const Lexicon& builtin();

    /// Reads `word<TAB>TAG` lines; blank lines and lines starting with '#' are ignored.
    static Lexicon load(const std::string& path);
    static Lexicon parse(std::string_view contents);

    void add(std::string word, Tag tag) { entries_[std::move(word)] = tag; }
    std::optional<Tag> find(std::string_view word) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, Tag> entries_;
};

std::vector<Token> tokenize(std::string_view text, const Lexicon& lexicon = Lexicon::builtin());

/// Byte ranges [first, second) of sentences in `text`, trimmed of surrounding whitespace.
std::vector<std::pair<std::size_t, std::size_t>> split_sentences(std::string_view text);
std::vector<std::string> sentences(std::string_view text);

std::string to_lower(std::string_view s);

/// Suffix stripping (s/es/ing/ed) used for keyword matching.
std::string stem(std::string_view word);

struct NounPhrase {
    std::size_t begin = 0;  // token range [begin, end)
    std::size_t end = 0;
    std::size_t head = 0;
    std::string text;
};

/// Maximal DET? ADJ* NOUN+ chunks plus bare gerunds.
std::vector<NounPhrase> extract_noun_phrases(std::span<const Token> tokens);

/// Lowercased phrase text without leading determiners ("the difference" -> "difference").
std::string keyword_form(const NounPhrase& phrase, std::span<const Token> tokens);

struct Keyword {
    std::string text;  // normalized phrase
    std::string head;  // normalized head noun
};

struct KeywordSet {
    std::vector<Keyword> keywords;
    std::string source;

    bool empty() const { return keywords.empty(); }
    /// True when the token's stem equals the stem of some keyword head.
    bool matches(const Token& token) const;
    bool contains(std::string_view text) const;
};

struct ClauseSpan {
    std::size_t begin = 0;  // token range [begin, end)
    std::size_t end = 0;
    std::optional<std::string> introducer;
    bool contains_keyword = false;
    /// Verbatim source text from the first token to the last non-punctuation token.
    std::string text;
};

/// Splits a sentence at subordinating introducers, and at coordinating conjunctions
/// when both sides carry a verb. The spans partition the token list.
std::vector<ClauseSpan> segment_clauses(std::span<const Token> sentence_tokens, const KeywordSet& keywords,
                                        std::string_view sentence_text);

bool is_subordinator(std::string_view normalized);

using SparseVector = std::map<std::string, double>;

class CorpusStats {
public:
    CorpusStats() = default;
    static CorpusStats from_documents(std::span<const std::string> documents);

    std::size_t document_count() const { return document_count_; }
    std::size_t document_frequency(const std::string& term) const;
    const std::map<std::string, std::size_t>& frequencies() const { return df_; }

private:
    std::size_t document_count_ = 0;
    std::map<std::string, std::size_t> df_;
};

/// Non-punctuation normalized tokens; the vocabulary of TF-IDF and the n-gram model.
std::vector<std::string> terms(std::string_view text);

SparseVector tfidf_vector(std::string_view text, const CorpusStats& stats);
double cosine_similarity(const SparseVector& u, const SparseVector& v);

class NGramModel {
public:
    NGramModel(int order, double smoothing);

    static NGramModel train(std::span<const std::string> sentences, int order = 2, double smoothing = 0.5);

    void add_sentence(std::span<const std::string> words);

    int order() const { return order_; }
    double smoothing() const { return smoothing_; }
    const std::map<std::string, std::size_t>& counts() const { return counts_; }

    /// Smoothed log P(word | context); context holds exactly order-1 words.
    double log_prob(std::span<const std::string> context, const std::string& word) const;

    std::string to_json() const;
    static NGramModel from_json(std::string_view json);

    friend bool operator==(const NGramModel&, const NGramModel&) = default;

private:
    void add_count(const std::string& key, std::size_t n);

    int order_;
    double smoothing_;
    std::map<std::string, std::size_t> counts_;
    std::map<std::string, std::size_t> context_counts_;
    std::set<std::string> vocabulary_;
};

/// Mean log-probability per event (each word plus the end-of-sentence marker).
double lm_score(std::span<const Token> tokens, const NGramModel& model);

}  // namespace tutor::text
