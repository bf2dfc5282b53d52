#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tutor::math {

// ---------------------------------------------------------------------------
// Lexing

enum class TokenKind { Number, Ident, Command, Operator, LParen, RParen, LBrace, RBrace, Underscore, Comma };

std::string_view token_kind_name(TokenKind kind);

struct MathToken {
    TokenKind kind;
    std::string lexeme;  // command names without the backslash
    std::size_t start = 0;
    std::size_t end = 0;

    friend bool operator==(const MathToken&, const MathToken&) = default;
};

/// Longest-match lexer for the supported LaTeX subset. Letters lex one at a time
/// (xy is x times y); unknown commands such as \alpha become identifiers;
/// \left, \right and spacing commands are dropped.
std::vector<MathToken> lex_latex(std::string_view input);

// ---------------------------------------------------------------------------
// Expression trees

/// Exact rational with int64 parts; den > 0 and gcd(num, den) = 1.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static std::optional<Rational> make(__int128 num, __int128 den);
    bool is_integer() const { return den == 1; }
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Rational&, const Rational&) = default;
};

std::optional<Rational> operator+(Rational a, Rational b);
std::optional<Rational> operator*(Rational a, Rational b);
std::optional<Rational> rational_pow(Rational base, std::int64_t exponent);
int compare(Rational a, Rational b);

enum class NodeKind { Number, Symbol, Subscript, Apply, Pow, Mul, Div, Neg, Add, Sub, Equals };

std::string_view node_kind_name(NodeKind kind);

/// Parse tree node. Add and Mul hold two or more children; Sub, Div, Pow, Equals and
/// Subscript exactly two; Neg one; Apply one or more arguments with the function
/// name in `name`.
struct Expr {
    NodeKind kind = NodeKind::Number;
    Rational value;
    std::string name;
    std::vector<Expr> children;

    static Expr number(std::int64_t n, std::int64_t d = 1);
    static Expr number(Rational r);
    static Expr symbol(std::string name);
    static Expr node(NodeKind kind, std::vector<Expr> children);
    static Expr apply(std::string name, std::vector<Expr> args);

    bool is_leaf() const { return kind == NodeKind::Number || kind == NodeKind::Symbol; }
    friend bool operator==(const Expr&, const Expr&) = default;
};

using ParseTree = Expr;

/// Functions with a LaTeX command form and a numeric definition.
bool is_builtin_function(std::string_view name);

std::set<std::string> free_symbols(const Expr& e);

/// Structural dump such as Add(x, Mul(2, y)), for diagnostics and tests.
std::string describe(const Expr& e);

std::string render_latex(const Expr& e);

// ---------------------------------------------------------------------------
// Parsing

inline constexpr std::size_t kForestCap = 16;

/// One identifier-before-parenthesis site and how a tree reads it.
struct Reading {
    std::string identifier;
    bool as_function = false;
    bool numeric_argument = false;

    std::string note() const;
    friend bool operator==(const Reading&, const Reading&) = default;
};

struct ParseForest {
    std::vector<Expr> trees;
    std::vector<std::vector<Reading>> readings;  // per tree, in site order
};

/// Every identifier immediately followed by '(' yields a function-application and a
/// multiplication reading. Trees are enumerated with the application reading first.
ParseForest parse_forest(std::span<const MathToken> tokens);
ParseForest parse_forest(std::string_view latex);

struct ParseContext {
    std::set<std::string> declared_functions;
    std::set<std::string> variables;
};

/// Linear score of a tree's readings: declared function +2, standard function +1,
/// bound variable read as function -2, single-letter function of numbers only -1.
int parse_score(std::span<const Reading> readings, const ParseContext& context);

/// Highest score wins; ties prefer more multiplication readings, then forest order.
std::size_t select_parse_index(const ParseForest& forest, const ParseContext& context);
const Expr& select_parse(const ParseForest& forest, const ParseContext& context);

/// Parses and selects in one step.
Expr parse_expression(std::string_view latex, const ParseContext& context = {});

// ---------------------------------------------------------------------------
// Canonical form and equivalence

/// Sub/Neg become Add/Mul with -1, Div becomes Mul with ^(-1), Add and Mul are
/// flattened with rational constants folded and children sorted by `canonical_less`.
struct CanonicalForm {
    Expr tree;
    friend bool operator==(const CanonicalForm&, const CanonicalForm&) = default;
};

bool canonical_less(const Expr& a, const Expr& b);
CanonicalForm canonicalize(const Expr& tree);

enum class DiffKind { MissingTerm, ExtraTerm, WrongCoefficient, WrongExponent, WrongOperator, StructuralMismatch };

std::string_view diff_kind_name(DiffKind kind);

struct DiffHint {
    DiffKind kind = DiffKind::StructuralMismatch;
    std::string expected;  // LaTeX fragment
    std::string found;

    std::string message() const;
    friend bool operator==(const DiffHint&, const DiffHint&) = default;
};

/// First difference in a top-down walk over canonical forms of the two trees.
DiffHint diff_trees(const Expr& expected, const Expr& found);

enum class Verdict { Equivalent, Different, Ambiguous };

std::string_view verdict_name(Verdict verdict);

struct EquivalenceVerdict {
    Verdict verdict = Verdict::Different;
    std::optional<DiffHint> diff;
    bool canonical_match = false;
    int samples_compared = 0;
};

struct SamplingOptions {
    std::uint64_t seed = 0;
    int n_samples = 32;
    double tolerance = 1e-9;
    int max_retries = 10;
};

/// Evaluates with the given symbol values; nullopt when an unknown function is applied.
/// Subscripted symbols are looked up by their rendering (x_{1}). Equals yields lhs - rhs.
std::optional<double> evaluate(const Expr& e, const std::map<std::string, double>& values);

/// Numeric route only: symbols drawn uniformly from [-3,-0.1] U [0.1,3]; equations are
/// compared as lhs - rhs in either orientation.
Verdict sample_equivalence(const Expr& a, const Expr& b, const SamplingOptions& options = {});

EquivalenceVerdict check_equivalence(const Expr& attempt, const Expr& expectation,
                                     const SamplingOptions& options = {});

// ---------------------------------------------------------------------------
// Gap hints

enum class BlankPolicy { BlankOneLeaf, BlankCoefficients };

std::string_view blank_policy_name(BlankPolicy policy);
BlankPolicy parse_blank_policy(std::string_view name);

inline constexpr std::string_view kBlankSlot = "\\boxed{?}";

struct GapHint {
    std::string rendered;
    std::vector<std::string> answers;
    BlankPolicy policy = BlankPolicy::BlankOneLeaf;
    std::uint64_t seed = 0;

    /// Substitutes the given answers into the slots, each wrapped in braces.
    std::string fill(std::span<const std::string> values) const;
};

/// Leaves that may be blanked, in pre-order: numbers and symbols (a subscripted
/// symbol counts as one leaf) outside the left side of an equation.
std::vector<const Expr*> blankable_leaves(const Expr& expectation);

/// BlankOneLeaf hides the leaf at index (first mt19937_64(seed) output mod count);
/// BlankCoefficients hides every numeric factor of a product.
GapHint make_gap_hint(const Expr& expectation, BlankPolicy policy, std::uint64_t seed);

}  // namespace tutor::math
