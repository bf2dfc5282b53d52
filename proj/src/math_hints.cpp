#include "tutor/math_hints.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>

#include "tutor/error.hpp"
#include "tutor/rng.hpp"

namespace tutor::math {

namespace {

const std::set<std::string, std::less<>> kStructuralCommands = {"frac", "sqrt", "cdot", "times"};
const std::set<std::string, std::less<>> kFunctionCommands = {"sin", "cos", "tan", "log", "ln", "exp"};
const std::set<std::string, std::less<>> kStandardFunctions = {"sin", "cos", "log", "f", "g"};

[[noreturn]] void syntax_error(const std::string& what, std::size_t pos) {
    throw Error("math.syntax", what + " at position " + std::to_string(pos));
}

bool is_operator_char(char c) { return c == '+' || c == '-' || c == '*' || c == '/' || c == '^' || c == '='; }

}  // namespace

std::string_view token_kind_name(TokenKind kind) {
    switch (kind) {
        case TokenKind::Number: return "NUMBER";
        case TokenKind::Ident: return "IDENT";
        case TokenKind::Command: return "COMMAND";
        case TokenKind::Operator: return "OPERATOR";
        case TokenKind::LParen: return "LPAREN";
        case TokenKind::RParen: return "RPAREN";
        case TokenKind::LBrace: return "LBRACE";
        case TokenKind::RBrace: return "RBRACE";
        case TokenKind::Underscore: return "UNDERSCORE";
        case TokenKind::Comma: return "COMMA";
    }
    return "?";
}

std::vector<MathToken> lex_latex(std::string_view in) {
    std::vector<MathToken> out;
    std::vector<std::size_t> open_braces;
    std::size_t i = 0;
    auto push = [&](TokenKind kind, std::string lexeme, std::size_t start, std::size_t end) {
        out.push_back({kind, std::move(lexeme), start, end});
    };
    while (i < in.size()) {
        const char c = in[i];
        const auto uc = static_cast<unsigned char>(c);
        if (std::isspace(uc)) {
            ++i;
        } else if (std::isdigit(uc) || (c == '.' && i + 1 < in.size() && std::isdigit(static_cast<unsigned char>(in[i + 1])))) {
            const std::size_t start = i;
            while (i < in.size() && std::isdigit(static_cast<unsigned char>(in[i]))) ++i;
            if (i + 1 < in.size() && in[i] == '.' && std::isdigit(static_cast<unsigned char>(in[i + 1]))) {
                ++i;
                while (i < in.size() && std::isdigit(static_cast<unsigned char>(in[i]))) ++i;
            }
            push(TokenKind::Number, std::string(in.substr(start, i - start)), start, i);
        } else if (std::isalpha(uc)) {
            push(TokenKind::Ident, std::string(1, c), i, i + 1);
            ++i;
        } else if (c == '\\') {
            const std::size_t start = i++;
            if (i < in.size() && std::isalpha(static_cast<unsigned char>(in[i]))) {
                const std::size_t name_start = i;
                while (i < in.size() && std::isalpha(static_cast<unsigned char>(in[i]))) ++i;
                std::string name(in.substr(name_start, i - name_start));
                if (name == "left" || name == "right") continue;
                if (kStructuralCommands.count(name) || kFunctionCommands.count(name))
                    push(TokenKind::Command, std::move(name), start, i);
                else
                    push(TokenKind::Ident, std::move(name), start, i);
            } else if (i < in.size() && (in[i] == ',' || in[i] == ';' || in[i] == ':' || in[i] == '!' || in[i] == ' ')) {
                ++i;
            } else {
                syntax_error("unsupported command", start);
            }
        } else if (is_operator_char(c)) {
            push(TokenKind::Operator, std::string(1, c), i, i + 1);
            ++i;
        } else if (c == '(') {
            push(TokenKind::LParen, "(", i, i + 1), ++i;
        } else if (c == ')') {
            push(TokenKind::RParen, ")", i, i + 1), ++i;
        } else if (c == '{') {
            open_braces.push_back(i);
            push(TokenKind::LBrace, "{", i, i + 1), ++i;
        } else if (c == '}') {
            if (open_braces.empty()) syntax_error("unbalanced '}'", i);
            open_braces.pop_back();
            push(TokenKind::RBrace, "}", i, i + 1), ++i;
        } else if (c == '_') {
            push(TokenKind::Underscore, "_", i, i + 1), ++i;
        } else if (c == ',') {
            push(TokenKind::Comma, ",", i, i + 1), ++i;
        } else {
            syntax_error(std::string("unsupported character '") + c + "'", i);
        }
    }
    if (!open_braces.empty()) syntax_error("unbalanced '{'", open_braces.front());
    return out;
}

// ---------------------------------------------------------------------------
// Rationals

std::optional<Rational> Rational::make(__int128 num, __int128 den) {
    if (den == 0) return std::nullopt;
    if (den < 0) num = -num, den = -den;
    __int128 a = num < 0 ? -num : num, b = den;
    while (b != 0) {
        const __int128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) num /= a, den /= a;
    constexpr __int128 lo = std::numeric_limits<std::int64_t>::min() + 1;
    constexpr __int128 hi = std::numeric_limits<std::int64_t>::max();
    if (num < lo || num > hi || den > hi) return std::nullopt;
    return Rational{static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)};
}

std::optional<Rational> operator+(Rational a, Rational b) {
    return Rational::make(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                          static_cast<__int128>(a.den) * b.den);
}

std::optional<Rational> operator*(Rational a, Rational b) {
    return Rational::make(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
}

std::optional<Rational> rational_pow(Rational base, std::int64_t exponent) {
    if (exponent < 0) {
        if (base.num == 0) return std::nullopt;
        base = *Rational::make(base.den, base.num);
        exponent = -exponent;
    }
    std::optional<Rational> acc = Rational{1, 1};
    for (std::int64_t k = 0; k < exponent && acc; ++k) acc = *acc * base;
    return acc;
}

int compare(Rational a, Rational b) {
    const __int128 l = static_cast<__int128>(a.num) * b.den;
    const __int128 r = static_cast<__int128>(b.num) * a.den;
    return l < r ? -1 : (l > r ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Trees

std::string_view node_kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::Number: return "Number";
        case NodeKind::Symbol: return "Symbol";
        case NodeKind::Subscript: return "Subscript";
        case NodeKind::Apply: return "Apply";
        case NodeKind::Pow: return "Pow";
        case NodeKind::Mul: return "Mul";
        case NodeKind::Div: return "Div";
        case NodeKind::Neg: return "Neg";
        case NodeKind::Add: return "Add";
        case NodeKind::Sub: return "Sub";
        case NodeKind::Equals: return "Equals";
    }
    return "?";
}

Expr Expr::number(std::int64_t n, std::int64_t d) {
    const auto r = Rational::make(n, d);
    if (!r) throw Error("math.number", "invalid rational");
    return number(*r);
}

Expr Expr::number(Rational r) {
    Expr e;
    e.kind = NodeKind::Number;
    e.value = r;
    return e;
}

Expr Expr::symbol(std::string name) {
    Expr e;
    e.kind = NodeKind::Symbol;
    e.name = std::move(name);
    return e;
}

Expr Expr::node(NodeKind kind, std::vector<Expr> children) {
    Expr e;
    e.kind = kind;
    e.children = std::move(children);
    return e;
}

Expr Expr::apply(std::string name, std::vector<Expr> args) {
    Expr e = node(NodeKind::Apply, std::move(args));
    e.name = std::move(name);
    return e;
}

bool is_builtin_function(std::string_view name) {
    return kFunctionCommands.count(name) > 0 || name == "sqrt";
}

namespace {

void collect_symbols(const Expr& e, std::set<std::string>& out) {
    if (e.kind == NodeKind::Symbol) out.insert(e.name);
    if (e.kind == NodeKind::Subscript) {
        out.insert(render_latex(e));
        return;
    }
    for (const auto& c : e.children) collect_symbols(c, out);
}

std::string number_text(Rational r) {
    if (r.is_integer()) return std::to_string(r.num);
    std::int64_t d = r.den;
    int twos = 0, fives = 0;
    while (d % 2 == 0) d /= 2, ++twos;
    while (d % 5 == 0) d /= 5, ++fives;
    const int digits = std::max(twos, fives);
    if (d != 1 || digits > 18) return "";
    __int128 scale = 1;
    for (int k = 0; k < digits; ++k) scale *= 10;
    __int128 scaled = static_cast<__int128>(r.num) * (scale / r.den);
    const bool neg = scaled < 0;
    if (neg) scaled = -scaled;
    auto to_str = [](__int128 v) {
        std::string s;
        do {
            s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
            v /= 10;
        } while (v > 0);
        return s;
    };
    std::string whole = to_str(scaled / scale);
    std::string frac = to_str(scaled % scale);
    frac.insert(frac.begin(), static_cast<std::size_t>(digits) - frac.size(), '0');
    return (neg ? "-" : "") + whole + "." + frac;
}

}  // namespace

std::set<std::string> free_symbols(const Expr& e) {
    std::set<std::string> out;
    collect_symbols(e, out);
    return out;
}

std::string describe(const Expr& e) {
    switch (e.kind) {
        case NodeKind::Number: {
            const auto s = number_text(e.value);
            return s.empty() ? std::to_string(e.value.num) + "/" + std::to_string(e.value.den) : s;
        }
        case NodeKind::Symbol: return e.name;
        default: break;
    }
    std::string out(e.kind == NodeKind::Apply ? "Apply[" + e.name + "]" : std::string(node_kind_name(e.kind)));
    out += "(";
    for (std::size_t i = 0; i < e.children.size(); ++i) out += (i ? ", " : "") + describe(e.children[i]);
    return out + ")";
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

class Renderer {
public:
    explicit Renderer(std::function<bool(const Expr*)> blank = {}) : blank_(std::move(blank)) {}

    std::string render(const Expr& e) const {
        if (blank_ && blank_(&e)) return std::string(kBlankSlot);
        switch (e.kind) {
            case NodeKind::Number: {
                const auto s = number_text(e.value);
                if (!s.empty()) return s;
                return "\\frac{" + std::to_string(e.value.num) + "}{" + std::to_string(e.value.den) + "}";
            }
            case NodeKind::Symbol: return e.name.size() == 1 ? e.name : "\\" + e.name;
            case NodeKind::Subscript:
                return render(e.children[0]) + "_{" + render(e.children[1]) + "}";
            case NodeKind::Add: {
                std::string out;
                for (std::size_t i = 0; i < e.children.size(); ++i) {
                    const auto& c = e.children[i];
                    const bool paren = c.kind == NodeKind::Add || c.kind == NodeKind::Equals ||
                                       (i > 0 && c.kind == NodeKind::Sub);
                    out += (i ? " + " : "") + wrap(c, paren);
                }
                return out;
            }
            case NodeKind::Sub: {
                const auto& r = e.children[1];
                const bool paren = r.kind == NodeKind::Add || r.kind == NodeKind::Sub || r.kind == NodeKind::Equals;
                return wrap(e.children[0], e.children[0].kind == NodeKind::Equals) + " - " + wrap(r, paren);
            }
            case NodeKind::Mul: {
                std::string out;
                for (std::size_t i = 0; i < e.children.size(); ++i) {
                    const auto k = e.children[i].kind;
                    const bool paren = k == NodeKind::Add || k == NodeKind::Sub || k == NodeKind::Equals ||
                                       k == NodeKind::Mul;
                    out += (i ? " \\cdot " : "") + wrap(e.children[i], paren);
                }
                return out;
            }
            case NodeKind::Div:
                return "\\frac{" + render(e.children[0]) + "}{" + render(e.children[1]) + "}";
            case NodeKind::Neg: {
                const auto k = e.children[0].kind;
                const bool paren = k == NodeKind::Add || k == NodeKind::Sub || k == NodeKind::Mul ||
                                   k == NodeKind::Equals ||
                                   (k == NodeKind::Number && e.children[0].value.num < 0);
                return "-" + wrap(e.children[0], paren);
            }
            case NodeKind::Pow: {
                const auto& b = e.children[0];
                const bool paren = b.kind == NodeKind::Add || b.kind == NodeKind::Sub || b.kind == NodeKind::Mul ||
                                   b.kind == NodeKind::Neg || b.kind == NodeKind::Pow || b.kind == NodeKind::Equals ||
                                   (b.kind == NodeKind::Number && (b.value.num < 0 || !b.value.is_integer()));
                return wrap(b, paren) + "^{" + render(e.children[1]) + "}";
            }
            case NodeKind::Apply: {
                if (e.name == "sqrt") return "\\sqrt{" + render(e.children[0]) + "}";
                std::string out = e.name.size() == 1 ? e.name : "\\" + e.name;
                out += "(";
                for (std::size_t i = 0; i < e.children.size(); ++i) out += (i ? ", " : "") + render(e.children[i]);
                return out + ")";
            }
            case NodeKind::Equals: return render(e.children[0]) + " = " + render(e.children[1]);
        }
        return "";
    }

private:
    std::string wrap(const Expr& e, bool paren) const {
        return paren ? "(" + render(e) + ")" : render(e);
    }

    std::function<bool(const Expr*)> blank_;
};

}  // namespace

std::string render_latex(const Expr& e) { return Renderer().render(e); }

// ---------------------------------------------------------------------------
// Parsing

std::string Reading::note() const {
    return identifier + (as_function ? " read as a function" : " read as multiplication");
}

namespace {

struct ParseFailure {
    std::string message;
    std::size_t position;
};

class Parser {
public:
    Parser(std::span<const MathToken> tokens, std::span<const bool> as_function, std::size_t input_end)
        : tokens_(tokens), as_function_(as_function), input_end_(input_end) {}

    Expr parse() {
        Expr lhs = expression();
        if (peek_op("=")) {
            ++pos_;
            Expr rhs = expression();
            lhs = Expr::node(NodeKind::Equals, {std::move(lhs), std::move(rhs)});
        }
        if (pos_ < tokens_.size()) fail("unexpected '" + tokens_[pos_].lexeme + "'");
        return lhs;
    }

    const std::vector<Reading>& readings() const { return readings_; }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseFailure{what, pos_ < tokens_.size() ? tokens_[pos_].start : input_end_};
    }

    const MathToken* peek(std::size_t ahead = 0) const {
        return pos_ + ahead < tokens_.size() ? &tokens_[pos_ + ahead] : nullptr;
    }

    bool peek_kind(TokenKind kind) const { return peek() && peek()->kind == kind; }
    bool peek_op(std::string_view op) const { return peek_kind(TokenKind::Operator) && peek()->lexeme == op; }
    bool peek_command(std::string_view name) const {
        return peek_kind(TokenKind::Command) && peek()->lexeme == name;
    }

    void expect(TokenKind kind) {
        if (!peek_kind(kind)) fail(std::string("expected ") + std::string(token_kind_name(kind)));
        ++pos_;
    }

    bool starts_primary() const {
        const auto* t = peek();
        if (!t) return false;
        switch (t->kind) {
            case TokenKind::Number:
            case TokenKind::Ident:
            case TokenKind::LParen:
            case TokenKind::LBrace: return true;
            case TokenKind::Command: return t->lexeme != "cdot" && t->lexeme != "times";
            default: return false;
        }
    }

    // Appends to an n-ary node built at this level, otherwise starts a new one.
    static void extend(Expr& current, bool& owned, NodeKind kind, Expr next) {
        if (owned) {
            current.children.push_back(std::move(next));
        } else {
            current = Expr::node(kind, {std::move(current), std::move(next)});
            owned = true;
        }
    }

    Expr expression() {
        Expr current = term();
        bool owned = false;
        while (true) {
            if (peek_op("+")) {
                ++pos_;
                extend(current, owned, NodeKind::Add, term());
            } else if (peek_op("-")) {
                ++pos_;
                current = Expr::node(NodeKind::Sub, {std::move(current), term()});
                owned = false;
            } else {
                return current;
            }
        }
    }

    Expr term() {
        Expr current = unary();
        bool owned = false;
        while (true) {
            if (peek_op("*") || peek_command("cdot") || peek_command("times")) {
                ++pos_;
                extend(current, owned, NodeKind::Mul, unary());
            } else if (peek_op("/")) {
                ++pos_;
                current = Expr::node(NodeKind::Div, {std::move(current), unary()});
                owned = false;
            } else if (starts_primary()) {
                extend(current, owned, NodeKind::Mul, power());
            } else {
                return current;
            }
        }
    }

    Expr unary() {
        if (peek_op("-")) {
            ++pos_;
            return Expr::node(NodeKind::Neg, {unary()});
        }
        if (peek_op("+")) {
            ++pos_;
            return unary();
        }
        return power();
    }

    Expr power() { return with_exponent(atom()); }

    Expr with_exponent(Expr base) {
        if (!peek_op("^")) return base;
        ++pos_;
        Expr exponent = with_exponent(group_or_atom());
        return Expr::node(NodeKind::Pow, {std::move(base), std::move(exponent)});
    }

    Expr group_or_atom() {
        if (peek_kind(TokenKind::LBrace)) {
            ++pos_;
            Expr inner = expression();
            expect(TokenKind::RBrace);
            return inner;
        }
        if (peek_op("-")) {
            ++pos_;
            return Expr::node(NodeKind::Neg, {group_or_atom()});
        }
        return atom();
    }

    Expr number_from(const MathToken& t) {
        const auto dot = t.lexeme.find('.');
        const std::string digits = dot == std::string::npos ? t.lexeme : t.lexeme.substr(0, dot) + t.lexeme.substr(dot + 1);
        if (digits.size() > 18) fail("number too long");
        __int128 den = 1;
        if (dot != std::string::npos)
            for (std::size_t k = dot + 1; k < t.lexeme.size(); ++k) den *= 10;
        return Expr::number(*Rational::make(std::stoll(digits), den));
    }

    bool numeric_only(const std::vector<Expr>& args) const {
        std::function<bool(const Expr&)> arithmetic = [&](const Expr& e) {
            if (e.kind == NodeKind::Symbol || e.kind == NodeKind::Subscript || e.kind == NodeKind::Apply) return false;
            return std::all_of(e.children.begin(), e.children.end(), arithmetic);
        };
        return std::all_of(args.begin(), args.end(), arithmetic);
    }

    Expr atom() {
        const auto* t = peek();
        if (!t) fail("unexpected end of input");
        switch (t->kind) {
            case TokenKind::Number: ++pos_; return number_from(*t);
            case TokenKind::Ident: {
                ++pos_;
                Expr sym = Expr::symbol(t->lexeme);
                if (peek_kind(TokenKind::Underscore)) {
                    ++pos_;
                    return Expr::node(NodeKind::Subscript, {std::move(sym), group_or_atom()});
                }
                if (!peek_kind(TokenKind::LParen)) return sym;
                const std::size_t site = readings_.size();
                const bool function = site < as_function_.size() && as_function_[site];
                readings_.push_back({t->lexeme, function, false});
                if (!function) return sym;
                ++pos_;
                std::vector<Expr> args{expression()};
                while (peek_kind(TokenKind::Comma)) {
                    ++pos_;
                    args.push_back(expression());
                }
                expect(TokenKind::RParen);
                readings_[site].numeric_argument = numeric_only(args);
                return Expr::apply(t->lexeme, std::move(args));
            }
            case TokenKind::LParen: {
                ++pos_;
                Expr inner = expression();
                expect(TokenKind::RParen);
                return inner;
            }
            case TokenKind::LBrace: return group_or_atom();
            case TokenKind::Command: {
                ++pos_;
                if (t->lexeme == "frac") {
                    Expr num = group_or_atom();
                    Expr den = group_or_atom();
                    return Expr::node(NodeKind::Div, {std::move(num), std::move(den)});
                }
                if (t->lexeme == "sqrt") return Expr::apply("sqrt", {group_or_atom()});
                if (kFunctionCommands.count(t->lexeme)) {
                    if (peek_kind(TokenKind::LParen)) {
                        ++pos_;
                        Expr inner = expression();
                        expect(TokenKind::RParen);
                        return Expr::apply(t->lexeme, {std::move(inner)});
                    }
                    return Expr::apply(t->lexeme, {power()});
                }
                --pos_;
                fail("unexpected '\\" + t->lexeme + "'");
            }
            default: fail("unexpected '" + t->lexeme + "'");
        }
    }

    std::span<const MathToken> tokens_;
    std::span<const bool> as_function_;
    std::size_t input_end_;
    std::size_t pos_ = 0;
    std::vector<Reading> readings_;
};

}  // namespace

ParseForest parse_forest(std::span<const MathToken> tokens) {
    if (tokens.empty()) throw Error("math.syntax", "empty expression");
    std::size_t sites = 0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
        if (tokens[i].kind == TokenKind::Ident && tokens[i + 1].kind == TokenKind::LParen) ++sites;
    if (sites > 20) throw Error("math.ambiguity", "ambiguity cap exceeded");
    const std::size_t input_end = tokens.back().end;

    ParseForest forest;
    std::optional<ParseFailure> first_failure;
    const std::uint64_t combos = std::uint64_t{1} << sites;
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
        // Site 0 is the most significant bit; a set bit selects multiplication.
        std::array<bool, 21> choice{};
        for (std::size_t s = 0; s < sites; ++s) choice[s] = ((mask >> (sites - 1 - s)) & 1U) == 0;
        Parser parser(tokens, std::span<const bool>(choice.data(), sites), input_end);
        try {
            Expr tree = parser.parse();
            if (forest.trees.size() == kForestCap) throw Error("math.ambiguity", "ambiguity cap exceeded");
            forest.trees.push_back(std::move(tree));
            forest.readings.push_back(parser.readings());
        } catch (const ParseFailure& f) {
            if (!first_failure) first_failure = f;
        }
    }
    if (forest.trees.empty())
        syntax_error(first_failure ? first_failure->message : "no valid reading", first_failure ? first_failure->position : 0);
    return forest;
}

ParseForest parse_forest(std::string_view latex) {
    const auto tokens = lex_latex(latex);
    return parse_forest(std::span<const MathToken>(tokens));
}

int parse_score(std::span<const Reading> readings, const ParseContext& context) {
    int score = 0;
    for (const auto& r : readings) {
        if (!r.as_function) continue;
        if (context.declared_functions.count(r.identifier)) score += 2;
        if (kStandardFunctions.count(r.identifier)) score += 1;
        if (context.variables.count(r.identifier)) score -= 2;
        if (r.identifier.size() == 1 && r.numeric_argument) score -= 1;
    }
    return score;
}

std::size_t select_parse_index(const ParseForest& forest, const ParseContext& context) {
    if (forest.trees.empty()) throw Error("math.syntax", "empty parse forest");
    std::size_t best = 0;
    int best_score = 0, best_muls = 0;
    for (std::size_t i = 0; i < forest.trees.size(); ++i) {
        const int score = parse_score(forest.readings[i], context);
        const int muls = static_cast<int>(std::count_if(forest.readings[i].begin(), forest.readings[i].end(),
                                                        [](const Reading& r) { return !r.as_function; }));
        if (i == 0 || score > best_score || (score == best_score && muls > best_muls)) {
            best = i;
            best_score = score;
            best_muls = muls;
        }
    }
    return best;
}

const Expr& select_parse(const ParseForest& forest, const ParseContext& context) {
    return forest.trees[select_parse_index(forest, context)];
}

Expr parse_expression(std::string_view latex, const ParseContext& context) {
    const auto forest = parse_forest(latex);
    return select_parse(forest, context);
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

int kind_rank(NodeKind k) {
    switch (k) {
        case NodeKind::Number: return 0;
        case NodeKind::Symbol: return 1;
        case NodeKind::Subscript: return 2;
        case NodeKind::Pow: return 3;
        case NodeKind::Mul: return 4;
        case NodeKind::Add: return 5;
        case NodeKind::Apply: return 6;
        case NodeKind::Equals: return 7;
        default: return 8;
    }
}

int canonical_compare(const Expr& a, const Expr& b) {
    if (kind_rank(a.kind) != kind_rank(b.kind)) return kind_rank(a.kind) < kind_rank(b.kind) ? -1 : 1;
    if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
    if (a.name != b.name) return a.name < b.name ? -1 : 1;
    if (const int c = compare(a.value, b.value)) return c;
    const std::size_t n = std::min(a.children.size(), b.children.size());
    for (std::size_t i = 0; i < n; ++i)
        if (const int c = canonical_compare(a.children[i], b.children[i])) return c;
    if (a.children.size() != b.children.size()) return a.children.size() < b.children.size() ? -1 : 1;
    return 0;
}

Expr normalize_pow(Expr base, Expr exponent);

Expr normalize_nary(NodeKind kind, std::vector<Expr> items) {
    const bool is_add = kind == NodeKind::Add;
    const Rational identity = is_add ? Rational{0, 1} : Rational{1, 1};
    std::vector<Expr> flat;
    std::vector<Expr> numbers;
    std::function<void(Expr&&)> take = [&](Expr&& e) {
        if (e.kind == kind) {
            for (auto& c : e.children) take(std::move(c));
        } else if (e.kind == NodeKind::Number) {
            numbers.push_back(std::move(e));
        } else {
            flat.push_back(std::move(e));
        }
    };
    for (auto& e : items) take(std::move(e));

    std::optional<Rational> folded = identity;
    for (const auto& n : numbers) {
        if (!folded) break;
        folded = is_add ? *folded + n.value : *folded * n.value;
    }
    std::vector<Expr> children;
    if (folded) {
        if (*folded != identity || flat.empty()) children.push_back(Expr::number(*folded));
    } else {
        children = std::move(numbers);
    }
    for (auto& f : flat) children.push_back(std::move(f));
    std::sort(children.begin(), children.end(),
              [](const Expr& a, const Expr& b) { return canonical_compare(a, b) < 0; });
    if (children.size() == 1) return std::move(children.front());
    return Expr::node(kind, std::move(children));
}

Expr normalize_pow(Expr base, Expr exponent) {
    if (exponent.kind == NodeKind::Number && exponent.value == Rational{1, 1}) return base;
    if (base.kind == NodeKind::Number && exponent.kind == NodeKind::Number && exponent.value.is_integer()) {
        const auto e = exponent.value.num;
        if (base.value.num == 0 && e < 0) throw Error("math.division_by_zero", "division by zero");
        if (e >= -64 && e <= 64)
            if (const auto r = rational_pow(base.value, e)) return Expr::number(*r);
    }
    return Expr::node(NodeKind::Pow, {std::move(base), std::move(exponent)});
}

Expr canon(const Expr& e) {
    switch (e.kind) {
        case NodeKind::Number:
        case NodeKind::Symbol: return e;
        case NodeKind::Subscript: return Expr::node(NodeKind::Subscript, {canon(e.children[0]), canon(e.children[1])});
        case NodeKind::Apply: {
            std::vector<Expr> args;
            for (const auto& c : e.children) args.push_back(canon(c));
            return Expr::apply(e.name, std::move(args));
        }
        case NodeKind::Neg: return normalize_nary(NodeKind::Mul, {Expr::number(-1), canon(e.children[0])});
        case NodeKind::Sub:
            return normalize_nary(NodeKind::Add,
                                  {canon(e.children[0]),
                                   normalize_nary(NodeKind::Mul, {Expr::number(-1), canon(e.children[1])})});
        case NodeKind::Div:
            return normalize_nary(NodeKind::Mul,
                                  {canon(e.children[0]), normalize_pow(canon(e.children[1]), Expr::number(-1))});
        case NodeKind::Add:
        case NodeKind::Mul: {
            std::vector<Expr> items;
            for (const auto& c : e.children) items.push_back(canon(c));
            return normalize_nary(e.kind, std::move(items));
        }
        case NodeKind::Pow: return normalize_pow(canon(e.children[0]), canon(e.children[1]));
        case NodeKind::Equals: return Expr::node(NodeKind::Equals, {canon(e.children[0]), canon(e.children[1])});
    }
    return e;
}

}  // namespace

bool canonical_less(const Expr& a, const Expr& b) { return canonical_compare(a, b) < 0; }

CanonicalForm canonicalize(const Expr& tree) { return {canon(tree)}; }

// ---------------------------------------------------------------------------
// Diffs

std::string_view diff_kind_name(DiffKind kind) {
    switch (kind) {
        case DiffKind::MissingTerm: return "MissingTerm";
        case DiffKind::ExtraTerm: return "ExtraTerm";
        case DiffKind::WrongCoefficient: return "WrongCoefficient";
        case DiffKind::WrongExponent: return "WrongExponent";
        case DiffKind::WrongOperator: return "WrongOperator";
        case DiffKind::StructuralMismatch: return "StructuralMismatch";
    }
    return "?";
}

std::string DiffHint::message() const {
    switch (kind) {
        case DiffKind::MissingTerm: return "Your answer is missing a term: " + expected;
        case DiffKind::ExtraTerm: return "Your answer has an extra term: " + found;
        case DiffKind::WrongCoefficient: return "Check the coefficient: expected " + expected + ", found " + found;
        case DiffKind::WrongExponent: return "Check the exponent: expected " + expected + ", found " + found;
        case DiffKind::WrongOperator: return "Check the operation: expected " + expected + ", found " + found;
        case DiffKind::StructuralMismatch: return "Compare " + found + " with the expected form " + expected;
    }
    return "";
}

namespace {

// Splits a canonical product into its numeric coefficient and the remaining factors.
std::pair<Rational, Expr> split_coefficient(const Expr& e) {
    if (e.kind == NodeKind::Number) return {e.value, Expr::number(1)};
    if (e.kind == NodeKind::Mul && e.children.front().kind == NodeKind::Number) {
        std::vector<Expr> rest(e.children.begin() + 1, e.children.end());
        if (rest.size() == 1) return {e.children.front().value, rest.front()};
        return {e.children.front().value, Expr::node(NodeKind::Mul, std::move(rest))};
    }
    return {Rational{1, 1}, e};
}

Expr rebuild(NodeKind kind, std::vector<Expr> children) {
    if (children.size() == 1) return std::move(children.front());
    return Expr::node(kind, std::move(children));
}

// Greedy multiset difference of two child lists.
void unmatched(const std::vector<Expr>& a, const std::vector<Expr>& b, std::vector<Expr>& only_a,
               std::vector<Expr>& only_b) {
    std::vector<bool> used(b.size(), false);
    for (const auto& x : a) {
        bool hit = false;
        for (std::size_t j = 0; j < b.size() && !hit; ++j)
            if (!used[j] && b[j] == x) used[j] = hit = true;
        if (!hit) only_a.push_back(x);
    }
    for (std::size_t j = 0; j < b.size(); ++j)
        if (!used[j]) only_b.push_back(b[j]);
}

DiffHint hint(DiffKind kind, const Expr& expected, const Expr& found) {
    return {kind, render_latex(expected), render_latex(found)};
}

DiffHint first_difference(const Expr& e, const Expr& f, bool in_exponent);

DiffHint diff_lists(NodeKind kind, const std::vector<Expr>& ec, const std::vector<Expr>& fc, const Expr& e,
                    const Expr& f) {
    std::vector<Expr> missing, extra;
    unmatched(ec, fc, missing, extra);
    if (!missing.empty() && extra.empty())
        return {DiffKind::MissingTerm, render_latex(rebuild(kind, missing)), ""};
    if (missing.empty() && !extra.empty()) return {DiffKind::ExtraTerm, "", render_latex(rebuild(kind, extra))};
    if (!missing.empty()) return first_difference(missing.front(), extra.front(), false);
    return hint(DiffKind::StructuralMismatch, e, f);
}

DiffHint first_difference(const Expr& e, const Expr& f, bool in_exponent) {
    if (e.kind == NodeKind::Number && f.kind == NodeKind::Number)
        return hint(in_exponent ? DiffKind::WrongExponent : DiffKind::WrongCoefficient, e, f);

    // Same non-numeric factors, different numeric coefficient.
    {
        const auto [ce, re] = split_coefficient(e);
        const auto [cf, rf] = split_coefficient(f);
        if (ce != cf && re == rf && !(re.kind == NodeKind::Number))
            return {DiffKind::WrongCoefficient, render_latex(Expr::number(ce)), render_latex(Expr::number(cf))};
    }

    if (e.kind != f.kind) {
        if (e.kind == NodeKind::Add) {
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (e.children[i] != f) continue;
                std::vector<Expr> rest = e.children;
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
                return {DiffKind::MissingTerm, render_latex(rebuild(NodeKind::Add, rest)), ""};
            }
        }
        if (f.kind == NodeKind::Add) {
            for (std::size_t i = 0; i < f.children.size(); ++i) {
                if (f.children[i] != e) continue;
                std::vector<Expr> rest = f.children;
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
                return {DiffKind::ExtraTerm, "", render_latex(rebuild(NodeKind::Add, rest))};
            }
        }
        const auto op = [](NodeKind k) {
            return k == NodeKind::Add || k == NodeKind::Mul || k == NodeKind::Pow || k == NodeKind::Apply;
        };
        if (op(e.kind) && op(f.kind)) return hint(DiffKind::WrongOperator, e, f);
        return hint(DiffKind::StructuralMismatch, e, f);
    }

    switch (e.kind) {
        case NodeKind::Equals:
            if (e.children[0] != f.children[0]) return first_difference(e.children[0], f.children[0], false);
            return first_difference(e.children[1], f.children[1], false);
        case NodeKind::Add:
        case NodeKind::Mul: return diff_lists(e.kind, e.children, f.children, e, f);
        case NodeKind::Pow:
            if (e.children[0] != f.children[0]) return first_difference(e.children[0], f.children[0], false);
            if (e.children[1].kind == NodeKind::Number || f.children[1].kind == NodeKind::Number)
                return hint(DiffKind::WrongExponent, e.children[1], f.children[1]);
            return first_difference(e.children[1], f.children[1], true);
        case NodeKind::Apply:
            if (e.name != f.name) return hint(DiffKind::WrongOperator, e, f);
            if (e.children.size() != f.children.size()) return hint(DiffKind::StructuralMismatch, e, f);
            for (std::size_t i = 0; i < e.children.size(); ++i)
                if (e.children[i] != f.children[i]) return first_difference(e.children[i], f.children[i], false);
            break;
        case NodeKind::Subscript:
            for (std::size_t i = 0; i < 2; ++i)
                if (e.children[i] != f.children[i]) return first_difference(e.children[i], f.children[i], false);
            break;
        default: break;
    }
    return hint(DiffKind::StructuralMismatch, e, f);
}

}  // namespace

DiffHint diff_trees(const Expr& expected, const Expr& found) {
    return first_difference(canonicalize(expected).tree, canonicalize(found).tree, false);
}

// ---------------------------------------------------------------------------
// Equivalence

std::string_view verdict_name(Verdict verdict) {
    switch (verdict) {
        case Verdict::Equivalent: return "Equivalent";
        case Verdict::Different: return "Different";
        case Verdict::Ambiguous: return "Ambiguous";
    }
    return "?";
}

std::optional<double> evaluate(const Expr& e, const std::map<std::string, double>& values) {
    auto child = [&](std::size_t i) { return evaluate(e.children[i], values); };
    switch (e.kind) {
        case NodeKind::Number: return e.value.to_double();
        case NodeKind::Symbol:
        case NodeKind::Subscript: {
            const auto key = e.kind == NodeKind::Symbol ? e.name : render_latex(e);
            const auto it = values.find(key);
            if (it == values.end()) throw Error("math.unbound", "no value for symbol " + key);
            return it->second;
        }
        case NodeKind::Apply: {
            if (!is_builtin_function(e.name) || e.children.size() != 1) return std::nullopt;
            const auto x = child(0);
            if (!x) return std::nullopt;
            if (e.name == "sin") return std::sin(*x);
            if (e.name == "cos") return std::cos(*x);
            if (e.name == "tan") return std::tan(*x);
            if (e.name == "log" || e.name == "ln") return std::log(*x);
            if (e.name == "exp") return std::exp(*x);
            return std::sqrt(*x);
        }
        case NodeKind::Neg: {
            const auto x = child(0);
            if (!x) return std::nullopt;
            return -*x;
        }
        case NodeKind::Add:
        case NodeKind::Mul: {
            double acc = e.kind == NodeKind::Add ? 0.0 : 1.0;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                const auto x = child(i);
                if (!x) return std::nullopt;
                acc = e.kind == NodeKind::Add ? acc + *x : acc * *x;
            }
            return acc;
        }
        default: break;
    }
    const auto a = child(0);
    const auto b = child(1);
    if (!a || !b) return std::nullopt;
    switch (e.kind) {
        case NodeKind::Sub:
        case NodeKind::Equals: return *a - *b;
        case NodeKind::Div: return *a / *b;
        case NodeKind::Pow: return std::pow(*a, *b);
        default: return std::nullopt;
    }
}

namespace {

bool has_unknown_function(const Expr& e) {
    if (e.kind == NodeKind::Apply && (!is_builtin_function(e.name) || e.children.size() != 1)) return true;
    return std::any_of(e.children.begin(), e.children.end(), has_unknown_function);
}

bool close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

Verdict sample_equivalence(const Expr& a, const Expr& b, const SamplingOptions& options) {
    if (has_unknown_function(a) || has_unknown_function(b)) return Verdict::Ambiguous;
    if ((a.kind == NodeKind::Equals) != (b.kind == NodeKind::Equals)) return Verdict::Different;
    const bool equation = a.kind == NodeKind::Equals;
    auto symbols = free_symbols(a);
    for (const auto& s : free_symbols(b)) symbols.insert(s);

    Rng rng(options.seed);
    int compared = 0;
    bool same = true, flipped = equation;
    for (int s = 0; s < options.n_samples; ++s) {
        for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
            std::map<std::string, double> values;
            for (const auto& name : symbols) {
                const double magnitude = 0.1 + 2.9 * uniform_unit(rng);
                values[name] = bernoulli(rng, 0.5) ? -magnitude : magnitude;
            }
            const auto va = evaluate(a, values);
            const auto vb = evaluate(b, values);
            if (!va || !vb || !std::isfinite(*va) || !std::isfinite(*vb)) continue;
            ++compared;
            same = same && close(*va, *vb, options.tolerance);
            flipped = flipped && close(*va, -*vb, options.tolerance);
            break;
        }
        if (!same && !flipped) return Verdict::Different;
    }
    if (compared == 0) return Verdict::Ambiguous;
    return Verdict::Equivalent;
}

EquivalenceVerdict check_equivalence(const Expr& attempt, const Expr& expectation, const SamplingOptions& options) {
    EquivalenceVerdict out;
    const auto ca = canonicalize(attempt);
    const auto ce = canonicalize(expectation);
    if (ca == ce) {
        out.verdict = Verdict::Equivalent;
        out.canonical_match = true;
        return out;
    }
    out.verdict = sample_equivalence(ca.tree, ce.tree, options);
    out.samples_compared = options.n_samples;
    if (out.verdict == Verdict::Different) out.diff = first_difference(ce.tree, ca.tree, false);
    return out;
}

// ---------------------------------------------------------------------------
// Gap hints

std::string_view blank_policy_name(BlankPolicy policy) {
    return policy == BlankPolicy::BlankOneLeaf ? "BlankOneLeaf" : "BlankCoefficients";
}

BlankPolicy parse_blank_policy(std::string_view name) {
    if (name == "BlankOneLeaf" || name == "one-leaf") return BlankPolicy::BlankOneLeaf;
    if (name == "BlankCoefficients" || name == "coefficients") return BlankPolicy::BlankCoefficients;
    throw Error("math.policy", "unknown blank policy: " + std::string(name));
}

std::string GapHint::fill(std::span<const std::string> values) const {
    if (values.size() != answers.size())
        throw Error("math.gap", "expected " + std::to_string(answers.size()) + " answers, got " +
                                    std::to_string(values.size()));
    std::string out;
    std::size_t from = 0;
    for (const auto& v : values) {
        const auto at = rendered.find(kBlankSlot, from);
        out += rendered.substr(from, at - from) + "{" + v + "}";
        from = at + kBlankSlot.size();
    }
    return out + rendered.substr(from);
}

namespace {

void collect_leaves(const Expr& e, std::vector<const Expr*>& out) {
    if (e.is_leaf() || e.kind == NodeKind::Subscript) {
        out.push_back(&e);
        return;
    }
    for (const auto& c : e.children) collect_leaves(c, out);
}

void collect_coefficients(const Expr& e, std::vector<const Expr*>& out) {
    for (const auto& c : e.children) {
        if (e.kind == NodeKind::Mul && c.kind == NodeKind::Number)
            out.push_back(&c);
        else
            collect_coefficients(c, out);
    }
}

}  // namespace

std::vector<const Expr*> blankable_leaves(const Expr& expectation) {
    std::vector<const Expr*> out;
    collect_leaves(expectation.kind == NodeKind::Equals ? expectation.children[1] : expectation, out);
    return out;
}

GapHint make_gap_hint(const Expr& expectation, BlankPolicy policy, std::uint64_t seed) {
    if (expectation.is_leaf() || expectation.kind == NodeKind::Subscript)
        throw Error("math.gap", "no blankable leaf");
    std::vector<const Expr*> blanks;
    if (policy == BlankPolicy::BlankOneLeaf) {
        const auto leaves = blankable_leaves(expectation);
        if (leaves.empty()) throw Error("math.gap", "no blankable leaf");
        Rng rng(seed);
        blanks.push_back(leaves[rng() % leaves.size()]);
    } else {
        collect_coefficients(expectation.kind == NodeKind::Equals ? expectation.children[1] : expectation, blanks);
        if (blanks.empty()) throw Error("math.gap", "no coefficient to blank");
    }
    GapHint gap;
    gap.policy = policy;
    gap.seed = seed;
    // Answers in rendering order, which is pre-order.
    std::vector<const Expr*> order;
    collect_leaves(expectation, order);
    for (const auto* leaf : order)
        if (std::find(blanks.begin(), blanks.end(), leaf) != blanks.end()) gap.answers.push_back(render_latex(*leaf));
    gap.rendered = Renderer([&](const Expr* node) {
                       return std::find(blanks.begin(), blanks.end(), node) != blanks.end();
                   }).render(expectation);
    return gap;
}

}  // namespace tutor::math
