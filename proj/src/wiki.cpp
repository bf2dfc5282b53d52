#include "tutor/wiki.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tutor/error.hpp"
#include "tutor/ml/smote.hpp"

namespace tutor::wiki {

namespace {

bool is_subject_pronoun(const std::vector<text::Token>& tokens) {
    if (tokens.size() < 2) return false;
    const auto& first = tokens[0].normalized;
    if (first != "it" && first != "this" && first != "they") return false;
    const auto next = tokens[1].tag;
    return next != text::Tag::Noun && next != text::Tag::Adj && next != text::Tag::Num;
}

std::set<std::string> stems_of(std::span<const text::Token> tokens) {
    std::set<std::string> out;
    for (const auto& t : tokens)
        if (t.tag != text::Tag::Punct) out.insert(text::stem(t.normalized));
    return out;
}

bool mentions(std::span<const text::Token> tokens, std::string_view keyword) {
    const auto sentence = stems_of(tokens);
    const auto words = text::terms(keyword);
    if (words.empty()) return false;
    return std::all_of(words.begin(), words.end(), [&](const std::string& w) { return sentence.count(text::stem(w)) > 0; });
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("wiki.io", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string_view kind_name(ExplanationKind kind) {
    return kind == ExplanationKind::Extracted ? "Extracted" : "Generated";
}

std::string index_key(std::string_view phrase) {
    std::string out;
    for (const auto& w : text::terms(phrase)) {
        if (!out.empty()) out += ' ';
        out += text::stem(w);
    }
    return out;
}

ArticleIndex ArticleIndex::from_jsonl(std::string_view contents) {
    ArticleIndex index;
    std::vector<std::string> documents;
    std::vector<std::string> lm_sentences;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= contents.size()) {
        const auto nl = contents.find('\n', pos);
        const auto line = contents.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? contents.size() + 1 : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        WikiArticle article;
        std::string body;
        try {
            const auto j = nlohmann::json::parse(line);
            article.title = j.at("title").get<std::string>();
            body = j.at("text").get<std::string>();
            if (j.contains("links")) article.links = j.at("links").get<std::vector<std::string>>();
            if (j.contains("tags")) article.tags = j.at("tags").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw Error("wiki.corpus", "line " + std::to_string(line_no) + ": " + e.what());
        }
        article.sentences = text::sentences(body);
        if (article.sentences.empty()) {
            ++index.skipped_;
            continue;
        }
        const auto para_end = body.find("\n\n");
        article.first_paragraph = body.substr(0, para_end);

        const std::size_t id = index.articles_.size();
        std::set<std::string> keys{index_key(article.title)};
        for (const auto& w : text::terms(article.title)) keys.insert(text::stem(w));
        const auto tokens = text::tokenize(article.first_paragraph);
        for (const auto& np : text::extract_noun_phrases(tokens)) {
            keys.insert(index_key(text::keyword_form(np, tokens)));
            keys.insert(text::stem(tokens[np.head].normalized));
        }
        keys.erase("");
        for (const auto& k : keys) index.entries_[k].push_back(id);

        documents.push_back(body);
        for (const auto& s : article.sentences) lm_sentences.push_back(s);
        index.articles_.push_back(std::move(article));
    }
    if (documents.empty()) documents.emplace_back();
    index.stats_ = text::CorpusStats::from_documents(documents);
    index.lm_ = text::NGramModel::train(lm_sentences, 2, 0.5);
    return index;
}

ArticleIndex ArticleIndex::load(const std::string& path) { return from_jsonl(read_file(path)); }

void ArticleIndex::set_synonyms(std::map<std::string, std::vector<std::string>> synonyms) {
    synonyms_ = std::move(synonyms);
}

std::map<std::string, std::vector<std::string>> ArticleIndex::load_synonyms(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path)).get<std::map<std::string, std::vector<std::string>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("wiki.synonyms", path + ": " + e.what());
    }
}

std::vector<const WikiArticle*> ArticleIndex::lookup(std::string_view keyword) const {
    std::vector<const WikiArticle*> out;
    auto take = [&](std::string_view phrase) {
        const auto it = entries_.find(index_key(phrase));
        if (it == entries_.end()) return false;
        for (auto id : it->second) out.push_back(&articles_[id]);
        return true;
    };
    if (take(keyword)) return out;
    const auto syn = synonyms_.find(text::to_lower(keyword));
    if (syn != synonyms_.end())
        for (const auto& s : syn->second)
            if (take(s)) break;
    return out;
}

ExplanationCandidate extract_explanation(const WikiArticle& article) {
    if (article.sentences.empty()) throw Error("wiki.empty_article", "article '" + article.title + "' has no sentences");
    ExplanationCandidate c;
    c.text = article.sentences.front();
    c.kind = ExplanationKind::Extracted;
    c.article = article.title;
    return c;
}

std::string substitute_leading_pronoun(std::string_view sentence, std::string_view keyword) {
    const auto tokens = text::tokenize(sentence);
    if (!is_subject_pronoun(tokens) || keyword.empty()) return std::string(sentence);
    std::string out(keyword);
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return std::string(sentence.substr(0, tokens[0].start)) + out + std::string(sentence.substr(tokens[0].end));
}

std::vector<ExplanationCandidate> generate_candidates(const WikiArticle& article, std::string_view keyword) {
    std::vector<ExplanationCandidate> out;
    const auto& s = article.sentences;
    auto opens_with_pronoun = [&](std::size_t i) { return is_subject_pronoun(text::tokenize(s[i])); };
    for (std::size_t i = 1; i < s.size(); ++i) {
        const auto tokens = text::tokenize(s[i]);
        if (!mentions(tokens, keyword) && !is_subject_pronoun(tokens)) continue;
        ExplanationCandidate c;
        c.kind = ExplanationKind::Generated;
        c.article = article.title;
        c.first_sentence = c.last_sentence = i;
        c.text = substitute_leading_pronoun(s[i], keyword);
        out.push_back(c);
        if (i + 1 < s.size() && opens_with_pronoun(i + 1)) {
            c.last_sentence = i + 1;
            c.text += " " + substitute_leading_pronoun(s[i + 1], keyword);
            out.push_back(std::move(c));
        }
    }
    return out;
}

Eigen::VectorXd explanation_features(std::string_view text, std::string_view keyword, const ArticleIndex& index) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(kExplanationFeatures);
    const auto tokens = text::tokenize(text);
    std::vector<const text::Token*> words;
    for (const auto& t : tokens)
        if (t.tag != text::Tag::Punct) words.push_back(&t);
    f(0) = static_cast<double>(words.size());
    f(1) = text::cosine_similarity(text::tfidf_vector(text, index.stats()), text::tfidf_vector(keyword, index.stats()));
    f(2) = words.empty() ? 0.0 : text::lm_score(tokens, index.lm());
    if (words.size() > 1) {
        std::size_t caps = 0;
        for (std::size_t i = 1; i < words.size(); ++i)
            caps += std::isupper(static_cast<unsigned char>(words[i]->surface[0])) ? 1 : 0;
        f(3) = static_cast<double>(caps) / static_cast<double>(words.size() - 1);
    }
    f(4) = 1.0;
    std::set<std::string> key_stems;
    for (const auto& w : text::terms(keyword)) key_stems.insert(text::stem(w));
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (key_stems.count(text::stem(words[i]->normalized))) {
            f(4) = static_cast<double>(i) / static_cast<double>(words.size());
            break;
        }
    }
    return f;
}

std::optional<ExplanationCandidate> score_and_select(std::string_view keyword, const ArticleIndex& index,
                                                     const ml::DecisionTree<double>& model) {
    if (model.dims() != static_cast<Eigen::Index>(kExplanationFeatures))
        throw Error("wiki.schema", "quality model expects " + std::to_string(model.dims()) + " features, not " +
                                       std::to_string(kExplanationFeatures));
    std::optional<ExplanationCandidate> best;
    auto consider = [&](ExplanationCandidate c) {
        c.features = explanation_features(c.text, keyword, index);
        c.quality = model.predict_proba(c.features.transpose());
        if (!(*c.quality > kQualityThreshold)) return;
        if (!best || *c.quality > *best->quality ||
            (*c.quality == *best->quality && c.kind == ExplanationKind::Extracted &&
             best->kind == ExplanationKind::Generated))
            best = std::move(c);
    };
    for (const auto* article : index.lookup(keyword)) {
        consider(extract_explanation(*article));
        for (auto& c : generate_candidates(*article, keyword)) consider(std::move(c));
    }
    return best;
}

std::vector<LabelledExplanation> training_examples(const ArticleIndex& index) {
    std::vector<LabelledExplanation> out;
    for (const auto& article : index.articles()) {
        auto positive = extract_explanation(article);
        positive.features = explanation_features(positive.text, article.title, index);
        out.push_back({std::move(positive), 1});
        for (auto& c : generate_candidates(article, article.title)) {
            if (c.text == article.sentences[c.first_sentence] && c.first_sentence == c.last_sentence) continue;
            c.features = explanation_features(c.text, article.title, index);
            out.push_back({std::move(c), 0});
        }
    }
    return out;
}

ml::DecisionTree<double> train_quality_model(const ArticleIndex& index, std::uint64_t seed, int max_depth) {
    const auto examples = training_examples(index);
    ml::Dataset<double> data;
    data.features.resize(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(kExplanationFeatures));
    data.labels.resize(static_cast<Eigen::Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        data.features.row(static_cast<Eigen::Index>(i)) = examples[i].candidate.features.transpose();
        data.labels(static_cast<Eigen::Index>(i)) = examples[i].label;
    }
    if (std::min(data.count(0), data.count(1)) >= 2) data = ml::smote_oversample(data, 5, 1.0, seed);
    ml::TreeParams params;
    params.max_depth = max_depth;
    return ml::DecisionTree<double>::fit(data, params, seed);
}

}  // namespace tutor::wiki
