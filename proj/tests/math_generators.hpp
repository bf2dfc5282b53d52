#pragma once

// Seeded random expression trees for property tests.

#include <algorithm>
#include <string>
#include <vector>

#include "tutor/math_hints.hpp"
#include "tutor/rng.hpp"

namespace tutor::testing {

struct TreeGenOptions {
    int max_depth = 4;
    bool allow_div = true;
    bool allow_functions = true;
    bool allow_subscripts = true;
};

inline math::Expr random_leaf(Rng& rng, const TreeGenOptions& o) {
    static const char* kNames[] = {"a", "b", "c", "x", "y", "z"};
    const auto pick = uniform_index(rng, o.allow_subscripts ? 3 : 2);
    if (pick == 0) return math::Expr::number(static_cast<std::int64_t>(1 + uniform_index(rng, 9)));
    if (pick == 1) return math::Expr::symbol(kNames[uniform_index(rng, 6)]);
    return math::Expr::node(math::NodeKind::Subscript,
                            {math::Expr::symbol("x"), math::Expr::number(static_cast<std::int64_t>(1 + uniform_index(rng, 3)))});
}

inline math::Expr random_tree(Rng& rng, const TreeGenOptions& o, int depth = 0) {
    using math::Expr;
    using math::NodeKind;
    if (depth >= o.max_depth || (depth > 0 && bernoulli(rng, 0.3))) return random_leaf(rng, o);
    auto sub = [&] { return random_tree(rng, o, depth + 1); };
    switch (uniform_index(rng, 7)) {
        case 0: {
            std::vector<Expr> cs{sub(), sub()};
            if (bernoulli(rng, 0.3)) cs.push_back(sub());
            return Expr::node(NodeKind::Add, std::move(cs));
        }
        case 1: {
            std::vector<Expr> cs{sub(), sub()};
            if (bernoulli(rng, 0.3)) cs.push_back(sub());
            return Expr::node(NodeKind::Mul, std::move(cs));
        }
        case 2: return Expr::node(NodeKind::Sub, {sub(), sub()});
        case 3:
            if (o.allow_div) return Expr::node(NodeKind::Div, {sub(), sub()});
            return Expr::node(NodeKind::Neg, {sub()});
        case 4:
            return Expr::node(NodeKind::Pow,
                              {sub(), Expr::number(static_cast<std::int64_t>(2 + uniform_index(rng, 2)))});
        case 5: return Expr::node(NodeKind::Neg, {sub()});
        default: {
            if (!o.allow_functions) return Expr::node(NodeKind::Add, {sub(), sub()});
            static const char* kFns[] = {"sin", "cos", "exp", "f"};
            return Expr::apply(kFns[uniform_index(rng, 4)], {sub()});
        }
    }
}

/// Semantics-preserving rewrite: shuffles Add/Mul operands and regroups the tail of
/// longer sums and products into a nested node.
inline math::Expr rewrite_assoc_comm(const math::Expr& e, Rng& rng) {
    using math::NodeKind;
    math::Expr out = e;
    for (auto& c : out.children) c = rewrite_assoc_comm(c, rng);
    if (out.kind == NodeKind::Add || out.kind == NodeKind::Mul) {
        for (std::size_t i = out.children.size(); i > 1; --i)
            std::swap(out.children[i - 1], out.children[uniform_index(rng, i)]);
        if (out.children.size() >= 3 && bernoulli(rng, 0.5)) {
            std::vector<math::Expr> tail(out.children.begin() + 1, out.children.end());
            out.children.erase(out.children.begin() + 1, out.children.end());
            out.children.push_back(math::Expr::node(out.kind, std::move(tail)));
        }
    }
    return out;
}

}  // namespace tutor::testing
