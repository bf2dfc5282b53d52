#include "tutor/text_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tutor/error.hpp"

namespace tutor::text {

namespace {

constexpr std::pair<std::string_view, Tag> kTagNames[] = {
    {"NOUN", Tag::Noun}, {"VERB", Tag::Verb}, {"ADJ", Tag::Adj},   {"ADV", Tag::Adv},
    {"DET", Tag::Det},   {"PRON", Tag::Pron}, {"PREP", Tag::Prep}, {"CONJ", Tag::Conj},
    {"NUM", Tag::Num},   {"PUNCT", Tag::Punct}, {"OTHER", Tag::Other},
};

constexpr std::string_view kBuiltinLexicon[][2] = {
    // determiners
    {"a", "DET"}, {"an", "DET"}, {"the", "DET"}, {"this", "DET"}, {"these", "DET"}, {"those", "DET"},
    {"each", "DET"}, {"every", "DET"}, {"some", "DET"}, {"any", "DET"}, {"no", "DET"}, {"all", "DET"},
    {"both", "DET"}, {"its", "DET"}, {"their", "DET"}, {"his", "DET"}, {"her", "DET"}, {"our", "DET"},
    {"your", "DET"}, {"my", "DET"}, {"another", "DET"},
    // pronouns
    {"i", "PRON"}, {"you", "PRON"}, {"he", "PRON"}, {"she", "PRON"}, {"it", "PRON"}, {"we", "PRON"},
    {"they", "PRON"}, {"me", "PRON"}, {"him", "PRON"}, {"us", "PRON"}, {"them", "PRON"},
    {"what", "PRON"}, {"who", "PRON"}, {"whom", "PRON"}, {"whose", "PRON"}, {"itself", "PRON"},
    {"themselves", "PRON"}, {"one", "PRON"}, {"how", "ADV"}, {"why", "ADV"},
    // prepositions
    {"of", "PREP"}, {"in", "PREP"}, {"on", "PREP"}, {"at", "PREP"}, {"by", "PREP"}, {"for", "PREP"},
    {"with", "PREP"}, {"from", "PREP"}, {"to", "PREP"}, {"into", "PREP"}, {"about", "PREP"},
    {"between", "PREP"}, {"among", "PREP"}, {"through", "PREP"}, {"over", "PREP"}, {"under", "PREP"},
    {"during", "PREP"}, {"without", "PREP"}, {"within", "PREP"}, {"against", "PREP"}, {"across", "PREP"},
    {"via", "PREP"}, {"per", "PREP"}, {"than", "PREP"}, {"as", "PREP"}, {"like", "PREP"},
    {"onto", "PREP"}, {"towards", "PREP"}, {"toward", "PREP"}, {"after", "PREP"}, {"before", "PREP"},
    // conjunctions and subordinators
    {"and", "CONJ"}, {"or", "CONJ"}, {"but", "CONJ"}, {"nor", "CONJ"}, {"so", "CONJ"}, {"yet", "CONJ"},
    {"when", "CONJ"}, {"whenever", "CONJ"}, {"if", "CONJ"}, {"because", "CONJ"}, {"that", "CONJ"},
    {"which", "CONJ"}, {"where", "CONJ"}, {"while", "CONJ"}, {"although", "CONJ"}, {"though", "CONJ"},
    {"since", "CONJ"}, {"unless", "CONJ"}, {"whereas", "CONJ"}, {"until", "CONJ"},
    // auxiliaries and common verbs
    {"is", "VERB"}, {"are", "VERB"}, {"was", "VERB"}, {"were", "VERB"}, {"be", "VERB"}, {"been", "VERB"},
    {"being", "VERB"}, {"am", "VERB"}, {"has", "VERB"}, {"have", "VERB"}, {"had", "VERB"}, {"do", "VERB"},
    {"does", "VERB"}, {"did", "VERB"}, {"can", "VERB"}, {"could", "VERB"}, {"will", "VERB"},
    {"would", "VERB"}, {"shall", "VERB"}, {"should", "VERB"}, {"may", "VERB"}, {"might", "VERB"},
    {"must", "VERB"}, {"define", "VERB"}, {"explain", "VERB"}, {"describe", "VERB"}, {"compute", "VERB"},
    {"calculate", "VERB"}, {"run", "VERB"}, {"use", "VERB"}, {"uses", "VERB"}, {"make", "VERB"},
    {"makes", "VERB"}, {"take", "VERB"}, {"takes", "VERB"}, {"give", "VERB"}, {"gives", "VERB"},
    {"find", "VERB"}, {"finds", "VERB"}, {"minimize", "VERB"}, {"reduce", "VERB"}, {"reduces", "VERB"},
    {"increase", "VERB"}, {"increases", "VERB"}, {"fit", "VERB"}, {"fits", "VERB"}, {"learn", "VERB"},
    {"learns", "VERB"}, {"converge", "VERB"}, {"mean", "VERB"}, {"means", "VERB"}, {"occur", "VERB"},
    {"occurs", "VERB"}, {"happen", "VERB"}, {"happens", "VERB"}, {"get", "VERB"}, {"gets", "VERB"},
    {"show", "VERB"}, {"shows", "VERB"}, {"lead", "VERB"}, {"leads", "VERB"}, {"need", "VERB"},
    {"needs", "VERB"}, {"predict", "VERB"}, {"predicts", "VERB"}, {"perform", "VERB"},
    {"performs", "VERB"}, {"measure", "VERB"}, {"measures", "VERB"}, {"represent", "VERB"},
    {"represents", "VERB"}, {"apply", "VERB"}, {"applies", "VERB"}, {"help", "VERB"}, {"helps", "VERB"},
    {"try", "VERB"}, {"solve", "VERB"}, {"write", "VERB"}, {"consider", "VERB"}, {"think", "VERB"},
    {"compare", "VERB"}, {"become", "VERB"}, {"becomes", "VERB"}, {"refers", "VERB"}, {"refer", "VERB"},
    {"known", "VERB"}, {"seen", "VERB"}, {"given", "VERB"}, {"captures", "VERB"}, {"capture", "VERB"},
    {"prevents", "VERB"}, {"prevent", "VERB"}, {"contains", "VERB"}, {"contain", "VERB"},
    {"assigns", "VERB"}, {"assign", "VERB"}, {"combines", "VERB"}, {"combine", "VERB"}, {"tends", "VERB"},
    {"tend", "VERB"}, {"depends", "VERB"}, {"depend", "VERB"}, {"remains", "VERB"}, {"allows", "VERB"},
    {"allow", "VERB"}, {"requires", "VERB"}, {"require", "VERB"}, {"produces", "VERB"},
    {"produce", "VERB"}, {"divides", "VERB"}, {"moves", "VERB"}, {"updates", "VERB"}, {"adds", "VERB"},
    {"add", "VERB"}, {"chooses", "VERB"}, {"picks", "VERB"}, {"stops", "VERB"}, {"generalizes", "VERB"},
    {"generalize", "VERB"}, {"memorizes", "VERB"}, {"means", "VERB"}, {"let", "VERB"}, {"go", "VERB"},
    {"goes", "VERB"}, {"see", "VERB"}, {"say", "VERB"}, {"says", "VERB"}, {"know", "VERB"},
    // adjectives
    {"high", "ADJ"}, {"low", "ADJ"}, {"large", "ADJ"}, {"small", "ADJ"}, {"big", "ADJ"}, {"good", "ADJ"},
    {"bad", "ADJ"}, {"simple", "ADJ"}, {"complex", "ADJ"}, {"new", "ADJ"}, {"old", "ADJ"},
    {"different", "ADJ"}, {"same", "ADJ"}, {"linear", "ADJ"}, {"nonlinear", "ADJ"}, {"random", "ADJ"},
    {"true", "ADJ"}, {"false", "ADJ"}, {"correct", "ADJ"}, {"incorrect", "ADJ"}, {"important", "ADJ"},
    {"main", "ADJ"}, {"many", "ADJ"}, {"much", "ADJ"}, {"more", "ADJ"}, {"most", "ADJ"}, {"less", "ADJ"},
    {"few", "ADJ"}, {"several", "ADJ"}, {"other", "ADJ"}, {"such", "ADJ"}, {"various", "ADJ"},
    {"specific", "ADJ"}, {"common", "ADJ"}, {"similar", "ADJ"}, {"deep", "ADJ"}, {"shallow", "ADJ"},
    {"strong", "ADJ"}, {"weak", "ADJ"}, {"poor", "ADJ"}, {"better", "ADJ"}, {"worse", "ADJ"},
    {"best", "ADJ"}, {"worst", "ADJ"}, {"wide", "ADJ"}, {"narrow", "ADJ"}, {"free", "ADJ"},
    {"whole", "ADJ"}, {"entire", "ADJ"}, {"certain", "ADJ"}, {"squared", "ADJ"}, {"unseen", "ADJ"},
    {"supervised", "ADJ"}, {"unsupervised", "ADJ"}, {"labeled", "ADJ"}, {"unlabeled", "ADJ"},
    {"hidden", "ADJ"}, {"too", "ADV"}, {"sure", "ADJ"}, {"own", "ADJ"}, {"next", "ADJ"}, {"first", "ADJ"},
    {"last", "ADJ"}, {"second", "ADJ"}, {"single", "ADJ"}, {"multiple", "ADJ"}, {"final", "ADJ"},
    // adverbs
    {"not", "ADV"}, {"very", "ADV"}, {"also", "ADV"}, {"only", "ADV"}, {"just", "ADV"}, {"well", "ADV"},
    {"often", "ADV"}, {"always", "ADV"}, {"never", "ADV"}, {"then", "ADV"}, {"there", "ADV"},
    {"here", "ADV"}, {"however", "ADV"}, {"therefore", "ADV"}, {"thus", "ADV"}, {"rather", "ADV"},
    {"quite", "ADV"}, {"even", "ADV"}, {"still", "ADV"}, {"already", "ADV"}, {"again", "ADV"},
    {"almost", "ADV"}, {"instead", "ADV"}, {"too", "ADV"}, {"away", "ADV"},
    // open-class exceptions to the suffix rules
    {"interval", "NOUN"}, {"signal", "NOUN"}, {"model", "NOUN"}, {"set", "NOUN"}, {"data", "NOUN"},
    {"training", "NOUN"}, {"learning", "NOUN"}, {"bias", "NOUN"}, {"case", "NOUN"}, {"question", "NOUN"},
    {"error", "NOUN"}, {"errors", "NOUN"}, {"label", "NOUN"}, {"labels", "NOUN"}, {"series", "NOUN"},
    {"analysis", "NOUN"}, {"basis", "NOUN"}, {"axis", "NOUN"}, {"class", "NOUN"}, {"loss", "NOUN"},
    {"process", "NOUN"}, {"mathematics", "NOUN"}, {"statistics", "NOUN"}, {"physics", "NOUN"},
    {"thing", "NOUN"}, {"things", "NOUN"}, {"something", "NOUN"}, {"nothing", "NOUN"},
    {"one", "NUM"}, {"two", "NUM"}, {"three", "NUM"}, {"four", "NUM"}, {"five", "NUM"}, {"ten", "NUM"},
    {"zero", "NUM"},
};

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Tag an out-of-lexicon word from its suffix and the previous token's tag.
Tag suffix_tag(std::string_view w, std::optional<Tag> prev) {
    if (!w.empty() && std::isdigit(static_cast<unsigned char>(w.front()))) return Tag::Num;
    const bool noun_context = !prev || *prev == Tag::Det || *prev == Tag::Adj || *prev == Tag::Prep ||
                              *prev == Tag::Conj || *prev == Tag::Punct;
    if (w.size() > 4 && ends_with(w, "ly")) return Tag::Adv;
    if (w.size() > 4 && ends_with(w, "ing")) return noun_context ? Tag::Noun : Tag::Verb;
    if (w.size() > 4 && ends_with(w, "ed"))
        return prev && (*prev == Tag::Det || *prev == Tag::Adj) ? Tag::Adj : Tag::Verb;
    for (auto s : {"izes", "ises", "ifies", "izing"})
        if (ends_with(w, s)) return Tag::Verb;
    for (auto s : {"tion", "sion", "ment", "ness", "ity", "ence", "ance", "ism", "ist", "ure", "ship",
                   "dom", "ogy", "er", "or", "ers", "ors", "ions", "ments"})
        if (ends_with(w, s)) return Tag::Noun;
    for (auto s : {"ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ary"})
        if (w.size() > 4 && ends_with(w, s)) return Tag::Adj;
    if (ends_with(w, "s") && !ends_with(w, "ss") && prev == Tag::Pron) return Tag::Verb;
    return Tag::Noun;
}

bool is_abbreviation(std::string_view word) {
    static const std::set<std::string, std::less<>> abbreviations = {"e.g", "i.e", "etc", "vs", "dr",
                                                                      "mr", "mrs", "al", "cf", "approx"};
    return abbreviations.contains(to_lower(word));
}

}  // namespace

std::string_view tag_name(Tag tag) {
    for (const auto& [name, t] : kTagNames)
        if (t == tag) return name;
    return "OTHER";
}

std::optional<Tag> parse_tag(std::string_view name) {
    for (const auto& [n, t] : kTagNames)
        if (n == name) return t;
    return std::nullopt;
}

const Lexicon& Lexicon::builtin() {
    static const Lexicon lexicon = [] {
        Lexicon lex;
        for (const auto& entry : kBuiltinLexicon) lex.add(std::string(entry[0]), *parse_tag(entry[1]));
        return lex;
    }();
    return lexicon;
}

Lexicon Lexicon::parse(std::string_view contents) {
    Lexicon lex;
    std::istringstream in{std::string(contents)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error("text.lexicon", "lexicon line " + std::to_string(line_no) + ": expected word<TAB>TAG");
        auto tag = parse_tag(line.substr(tab + 1));
        if (!tag)
            throw Error("text.lexicon", "lexicon line " + std::to_string(line_no) + ": unknown tag '" +
                                            line.substr(tab + 1) + "'");
        lex.add(to_lower(line.substr(0, tab)), *tag);
    }
    return lex;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("text.io", "cannot open lexicon " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

std::optional<Tag> Lexicon::find(std::string_view word) const {
    auto it = entries_.find(std::string(word));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string stem(std::string_view word) {
    std::string w = to_lower(word);
    if (ends_with(w, "ing") && w.size() >= 6) return w.substr(0, w.size() - 3);
    if (ends_with(w, "ed") && w.size() >= 5) return w.substr(0, w.size() - 2);
    if (ends_with(w, "es") && w.size() >= 5 &&
        (ends_with(w, "ses") || ends_with(w, "xes") || ends_with(w, "zes") || ends_with(w, "ches") ||
         ends_with(w, "shes")))
        return w.substr(0, w.size() - 2);
    if (ends_with(w, "s") && !ends_with(w, "ss") && w.size() >= 4) return w.substr(0, w.size() - 1);
    return w;
}

std::vector<Token> tokenize(std::string_view text, const Lexicon& lexicon) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    const auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
    while (i < text.size()) {
        if (std::isspace(at(i))) {
            ++i;
            continue;
        }
        Token token;
        token.start = i;
        if (is_word_byte(at(i))) {
            std::size_t j = i + 1;
            while (j < text.size()) {
                if (is_word_byte(at(j))) {
                    ++j;
                } else if ((text[j] == '-' || text[j] == '\'' || text[j] == '.') && j + 1 < text.size() &&
                           is_word_byte(at(j + 1)) && is_word_byte(at(j - 1))) {
                    // '.' only joins digits (2.5); hyphens and apostrophes join words.
                    if (text[j] == '.' && !(std::isdigit(at(j - 1)) && std::isdigit(at(j + 1)))) break;
                    j += 2;
                } else {
                    break;
                }
            }
            token.end = j;
            token.surface = std::string(text.substr(i, j - i));
            token.normalized = to_lower(token.surface);
            std::optional<Tag> prev;
            if (!tokens.empty()) prev = tokens.back().tag;
            if (auto known = lexicon.find(token.normalized))
                token.tag = *known;
            else
                token.tag = suffix_tag(token.normalized, prev);
        } else {
            token.end = i + 1;
            token.surface = std::string(1, text[i]);
            token.normalized = token.surface;
            token.tag = Tag::Punct;
        }
        i = token.end;
        tokens.push_back(std::move(token));
    }
    return tokens;
}

std::vector<std::pair<std::size_t, std::size_t>> split_sentences(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const auto push = [&](std::size_t b, std::size_t e) {
        while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
        if (b < e) out.emplace_back(b, e);
    };
    std::size_t begin = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
            push(begin, i);
            begin = i + 2;
            i += 2;
            continue;
        }
        if (c == '.' || c == '!' || c == '?') {
            std::size_t end = i + 1;
            while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?' ||
                                         text[end] == '"' || text[end] == '\'' || text[end] == ')'))
                ++end;
            std::size_t next = end;
            while (next < text.size() && std::isspace(static_cast<unsigned char>(text[next]))) ++next;
            bool boundary = next == text.size();
            if (!boundary && next > end) {
                const auto n = static_cast<unsigned char>(text[next]);
                boundary = std::isupper(n) || std::isdigit(n) || n == '"' || n == '(';
            }
            if (boundary && c == '.') {
                std::size_t w = i;
                while (w > begin && !std::isspace(static_cast<unsigned char>(text[w - 1]))) --w;
                if (is_abbreviation(text.substr(w, i - w))) boundary = false;
            }
            if (boundary) {
                push(begin, end);
                begin = end;
            }
            i = end;
            continue;
        }
        ++i;
    }
    push(begin, text.size());
    return out;
}

std::vector<std::string> sentences(std::string_view text) {
    std::vector<std::string> out;
    for (auto [b, e] : split_sentences(text)) out.emplace_back(text.substr(b, e - b));
    return out;
}

std::vector<NounPhrase> extract_noun_phrases(std::span<const Token> tokens) {
    std::vector<NounPhrase> phrases;
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::size_t j = i;
        if (tokens[j].tag == Tag::Det) ++j;
        while (j < tokens.size() && (tokens[j].tag == Tag::Adj || tokens[j].tag == Tag::Num)) ++j;
        std::size_t k = j;
        while (k < tokens.size() && tokens[k].tag == Tag::Noun) ++k;
        if (k == j) {
            ++i;
            continue;
        }
        NounPhrase np;
        np.begin = i;
        np.end = k;
        np.head = k - 1;
        for (std::size_t t = i; t < k; ++t) {
            if (t > i) np.text += ' ';
            np.text += tokens[t].surface;
        }
        phrases.push_back(std::move(np));
        i = k;
    }
    return phrases;
}

std::string keyword_form(const NounPhrase& phrase, std::span<const Token> tokens) {
    std::string out;
    for (std::size_t t = phrase.begin; t < phrase.end; ++t) {
        if (tokens[t].tag == Tag::Det && out.empty()) continue;
        if (!out.empty()) out += ' ';
        out += tokens[t].normalized;
    }
    return out;
}

bool KeywordSet::matches(const Token& token) const {
    if (token.tag == Tag::Punct) return false;
    const std::string s = stem(token.normalized);
    return std::any_of(keywords.begin(), keywords.end(), [&](const Keyword& k) { return stem(k.head) == s; });
}

bool KeywordSet::contains(std::string_view text) const {
    for (const auto& token : tokenize(text))
        if (matches(token)) return true;
    return false;
}

bool is_subordinator(std::string_view w) {
    static const std::set<std::string, std::less<>> subordinators = {
        "when", "whenever", "if",     "because", "that",   "which", "where",
        "while", "although", "though", "since",  "unless", "whereas", "until"};
    return subordinators.contains(w);
}

namespace {

bool is_coordinator(std::string_view w) { return w == "and" || w == "but" || w == "or" || w == "yet" || w == "so"; }

bool has_verb(std::span<const Token> tokens, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
        if (tokens[i].tag == Tag::Verb) return true;
    return false;
}

}  // namespace

std::vector<ClauseSpan> segment_clauses(std::span<const Token> tokens, const KeywordSet& keywords,
                                        std::string_view sentence_text) {
    std::vector<std::size_t> cuts{0};
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto& w = tokens[i].normalized;
        if (!is_subordinator(w)) continue;
        // "that" followed by a noun or adjective is a determiner.
        if (w == "that" && i + 1 < tokens.size() &&
            (tokens[i + 1].tag == Tag::Noun || tokens[i + 1].tag == Tag::Adj))
            continue;
        cuts.push_back(i);
    }
    cuts.push_back(tokens.size());

    // Coordinating conjunctions split only between two verb-bearing sides.
    std::vector<std::size_t> refined{0};
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        std::size_t seg_begin = cuts[c];
        const std::size_t seg_end = cuts[c + 1];
        for (std::size_t i = seg_begin + 1; i < seg_end; ++i) {
            if (!is_coordinator(tokens[i].normalized)) continue;
            if (has_verb(tokens, seg_begin, i) && has_verb(tokens, i + 1, seg_end)) {
                refined.push_back(i);
                seg_begin = i;
            }
        }
        refined.push_back(seg_end);
    }

    std::vector<ClauseSpan> spans;
    for (std::size_t c = 0; c + 1 < refined.size(); ++c) {
        ClauseSpan span;
        span.begin = refined[c];
        span.end = refined[c + 1];
        if (span.begin == span.end) continue;
        const auto& first = tokens[span.begin].normalized;
        if (span.begin > 0 && (is_subordinator(first) || is_coordinator(first))) span.introducer = first;
        std::optional<std::size_t> last;
        for (std::size_t i = span.begin; i < span.end; ++i) {
            if (keywords.matches(tokens[i])) span.contains_keyword = true;
            if (tokens[i].tag != Tag::Punct) last = i;
        }
        if (last) {
            const std::size_t b = tokens[span.begin].start;
            span.text = std::string(sentence_text.substr(b, tokens[*last].end - b));
        }
        spans.push_back(std::move(span));
    }
    return spans;
}

std::vector<std::string> terms(std::string_view text) {
    std::vector<std::string> out;
    for (auto& token : tokenize(text))
        if (token.tag != Tag::Punct) out.push_back(std::move(token.normalized));
    return out;
}

CorpusStats CorpusStats::from_documents(std::span<const std::string> documents) {
    CorpusStats stats;
    stats.document_count_ = documents.size();
    for (const auto& doc : documents) {
        auto t = terms(doc);
        std::set<std::string> unique(t.begin(), t.end());
        for (const auto& term : unique) ++stats.df_[term];
    }
    return stats;
}

std::size_t CorpusStats::document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

SparseVector tfidf_vector(std::string_view text, const CorpusStats& stats) {
    if (stats.document_count() == 0) throw Error("text.corpus", "corpus statistics need at least one document");
    std::map<std::string, std::size_t> tf;
    for (auto& term : terms(text)) ++tf[term];
    SparseVector v;
    const double n = static_cast<double>(stats.document_count());
    for (const auto& [term, count] : tf) {
        const double df = static_cast<double>(std::max<std::size_t>(1, stats.document_frequency(term)));
        v[term] = static_cast<double>(count) * std::log(n / df);
    }
    return v;
}

double cosine_similarity(const SparseVector& u, const SparseVector& v) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (const auto& [term, w] : u) {
        nu += w * w;
        if (auto it = v.find(term); it != v.end()) dot += w * it->second;
    }
    for (const auto& [term, w] : v) nv += w * w;
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(nu * nv), 0.0, 1.0);
}

namespace {

const std::string kBegin = "<s>";
const std::string kEnd = "</s>";

std::string join(std::span<const std::string> words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> split_words(const std::string& key) {
    std::vector<std::string> out;
    std::istringstream in(key);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

NGramModel::NGramModel(int order, double smoothing) : order_(order), smoothing_(smoothing) {
    if (order < 1) throw Error("text.ngram", "n-gram order must be at least 1");
    if (!(smoothing > 0.0)) throw Error("text.ngram", "smoothing constant must be positive");
}

NGramModel NGramModel::train(std::span<const std::string> sentences, int order, double smoothing) {
    NGramModel model(order, smoothing);
    for (const auto& s : sentences) {
        auto words = terms(s);
        if (!words.empty()) model.add_sentence(words);
    }
    return model;
}

void NGramModel::add_count(const std::string& key, std::size_t n) {
    counts_[key] += n;
    auto words = split_words(key);
    vocabulary_.insert(words.back());
    std::span<const std::string> ctx(words.data(), words.size() - 1);
    context_counts_[join(ctx)] += n;
}

void NGramModel::add_sentence(std::span<const std::string> words) {
    std::vector<std::string> padded(static_cast<std::size_t>(order_ - 1), kBegin);
    padded.insert(padded.end(), words.begin(), words.end());
    padded.push_back(kEnd);
    const auto n = static_cast<std::size_t>(order_);
    for (std::size_t i = 0; i + n <= padded.size(); ++i)
        add_count(join(std::span<const std::string>(padded.data() + i, n)), 1);
}

double NGramModel::log_prob(std::span<const std::string> context, const std::string& word) const {
    std::vector<std::string> key(context.begin(), context.end());
    key.push_back(word);
    const auto joined = join(key);
    const auto it = counts_.find(joined);
    const double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
    const auto ct = context_counts_.find(join(context));
    const double cc = ct == context_counts_.end() ? 0.0 : static_cast<double>(ct->second);
    const double v = static_cast<double>(vocabulary_.size() + 1);  // +1 reserves mass for unknown words
    return std::log((c + smoothing_) / (cc + smoothing_ * v));
}

std::string NGramModel::to_json() const {
    nlohmann::ordered_json j;
    j["order"] = order_;
    j["smoothing"] = smoothing_;
    j["counts"] = counts_;
    return j.dump();
}

NGramModel NGramModel::from_json(std::string_view json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw Error("text.ngram", std::string("malformed n-gram model: ") + e.what());
    }
    NGramModel model(j.at("order").get<int>(), j.at("smoothing").get<double>());
    for (const auto& [key, count] : j.at("counts").items()) {
        const auto n = count.get<std::size_t>();
        if (n < 1) throw Error("text.ngram", "n-gram counts must be positive");
        if (split_words(key).size() != static_cast<std::size_t>(model.order_))
            throw Error("text.ngram", "n-gram '" + key + "' does not match the model order");
        model.add_count(key, n);
    }
    return model;
}

double lm_score(std::span<const Token> tokens, const NGramModel& model) {
    std::vector<std::string> words(static_cast<std::size_t>(model.order() - 1), kBegin);
    for (const auto& t : tokens)
        if (t.tag != Tag::Punct) words.push_back(t.normalized);
    const auto ctx_len = static_cast<std::size_t>(model.order() - 1);
    if (words.size() == ctx_len) throw Error("text.empty_input", "empty input");
    words.push_back(kEnd);
    double total = 0.0;
    std::size_t events = 0;
    for (std::size_t i = ctx_len; i < words.size(); ++i) {
        std::span<const std::string> ctx(words.data() + i - ctx_len, ctx_len);
        total += model.log_prob(ctx, words[i]);
        ++events;
    }
    return total / static_cast<double>(events);
}

}  // namespace tutor::text
