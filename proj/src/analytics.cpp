#include "tutor/analytics.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "tutor/error.hpp"
#include "tutor/special_functions.hpp"

namespace tutor::analytics {

std::string_view filter_name(AttemptFilter filter) {
    return filter == AttemptFilter::AllAttempts ? "AllAttempts" : "BeforeSecondAttempt";
}

AttemptFilter parse_filter(std::string_view name) {
    for (auto f : kAllFilters)
        if (filter_name(f) == name) return f;
    throw Error("analytics.filter", "unknown attempt filter '" + std::string(name) + "'");
}

Gain learning_gain(std::span<const InteractionTurn> log, ModelTier tier, AttemptFilter filter) {
    using Key = std::pair<std::string, std::string>;
    // Open trials per (student, exercise), resolved by the next attempt.
    std::map<Key, std::size_t> pending;
    Gain g;
    for (const auto& t : log) {
        const Key key{t.student_id, t.exercise_id};
        if (t.event == EventKind::Attempt) {
            const auto it = pending.find(key);
            if (it != pending.end()) {
                if (t.grade == Grade::Correct) g.successes += it->second;
                pending.erase(it);
            }
        }
        if (!t.intervention || t.intervention->tier != tier) continue;
        if (filter == AttemptFilter::BeforeSecondAttempt && t.attempts_made() > 1) continue;
        ++g.trials;
        ++pending[key];
    }
    if (g.trials == 0)
        throw Error("analytics.no_trials", "no trials for tier " + std::string(tier_name(tier)) + " (" +
                                               std::string(filter_name(filter)) + ")");
    g.proportion = static_cast<double>(g.successes) / static_cast<double>(g.trials);
    return g;
}

Interval clopper_pearson_ci(std::size_t successes, std::size_t trials, double level) {
    if (trials == 0 || successes > trials)
        throw Error("analytics.counts", "invalid counts " + std::to_string(successes) + "/" + std::to_string(trials));
    if (!(level > 0.0 && level < 1.0)) throw Error("analytics.level", "confidence level must lie in (0, 1)");
    const double alpha = 1.0 - level;
    const auto k = static_cast<double>(successes);
    const auto n = static_cast<double>(trials);
    Interval ci;
    ci.lower = successes == 0 ? 0.0 : stats::incomplete_beta_inverse(k, n - k + 1.0, alpha / 2.0);
    ci.upper = successes == trials ? 1.0 : stats::incomplete_beta_inverse(k + 1.0, n - k, 1.0 - alpha / 2.0);
    return ci;
}

ZTestResult two_proportion_ztest(std::size_t s1, std::size_t n1, std::size_t s2, std::size_t n2) {
    if (n1 == 0 || n2 == 0 || s1 > n1 || s2 > n2) throw Error("analytics.counts", "invalid z-test counts");
    const double p1 = static_cast<double>(s1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(s2) / static_cast<double>(n2);
    ZTestResult r;
    r.pooled = static_cast<double>(s1 + s2) / static_cast<double>(n1 + n2);
    const double var = r.pooled * (1.0 - r.pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2));
    if (!(var > 0.0)) throw Error("analytics.zero_variance", "pooled proportion is 0 or 1");
    r.z = (p1 - p2) / std::sqrt(var);
    r.p_one_tailed = 1.0 - stats::normal_cdf(r.z);
    r.p_two_tailed = std::min(1.0, 2.0 * std::min(r.p_one_tailed, 1.0 - r.p_one_tailed));
    return r;
}

double helpfulness_rate(std::span<const InteractionTurn> log) {
    std::map<std::pair<std::string, std::string>, bool> pairs;
    for (const auto& t : log) {
        if (!t.intervention || !t.helpful_rating) continue;
        auto& helpful = pairs[{t.student_id, t.exercise_id}];
        helpful = helpful || *t.helpful_rating;
    }
    if (pairs.empty()) throw Error("analytics.no_ratings", "no rated interventions");
    std::size_t yes = 0;
    for (const auto& [_, h] : pairs) yes += h ? 1 : 0;
    return static_cast<double>(yes) / static_cast<double>(pairs.size());
}

LearningGainReport build_report(std::span<const InteractionTurn> log) {
    LearningGainReport report;
    for (auto filter : kAllFilters) {
        for (auto tier : kAllTiers) {
            std::optional<Cell> cell;
            try {
                const auto g = learning_gain(log, tier, filter);
                cell = Cell{g, clopper_pearson_ci(g.successes, g.trials)};
            } catch (const Error&) {
            }
            report.cells[{tier, filter}] = cell;
        }
        const std::pair<ModelTier, ModelTier> pairs[] = {{ModelTier::Shallow, ModelTier::Baseline},
                                                         {ModelTier::Deep, ModelTier::Baseline},
                                                         {ModelTier::Deep, ModelTier::Shallow}};
        for (auto [a, b] : pairs) {
            PairTest test{a, b, filter, std::nullopt};
            const auto& ca = report.cells[{a, filter}];
            const auto& cb = report.cells[{b, filter}];
            if (ca && cb) {
                try {
                    test.result = two_proportion_ztest(ca->gain.successes, ca->gain.trials, cb->gain.successes,
                                                       cb->gain.trials);
                } catch (const Error&) {
                }
            }
            report.tests.push_back(test);
        }
    }
    try {
        report.helpfulness = helpfulness_rate(log);
    } catch (const Error&) {
    }
    return report;
}

nlohmann::json to_json(const LearningGainReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [key, cell] : report.cells) {
        nlohmann::json c{{"tier", tier_name(key.first)}, {"filter", filter_name(key.second)}};
        if (cell) {
            c["successes"] = cell->gain.successes;
            c["trials"] = cell->gain.trials;
            c["proportion"] = cell->gain.proportion;
            c["ci"] = {{"lower", cell->ci.lower}, {"upper", cell->ci.upper}};
        } else {
            c["trials"] = 0;
        }
        cells.push_back(std::move(c));
    }
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : report.tests) {
        nlohmann::json j{{"first", tier_name(t.first)}, {"second", tier_name(t.second)}, {"filter", filter_name(t.filter)}};
        if (t.result) {
            j["z"] = t.result->z;
            j["p_one_tailed"] = t.result->p_one_tailed;
            j["p_two_tailed"] = t.result->p_two_tailed;
            j["pooled"] = t.result->pooled;
        } else {
            j["z"] = nullptr;
        }
        tests.push_back(std::move(j));
    }
    nlohmann::json out{{"cells", cells}, {"tests", tests}};
    out["helpfulness"] = report.helpfulness ? nlohmann::json(*report.helpfulness) : nlohmann::json(nullptr);
    return out;
}

std::string to_table(const LearningGainReport& report) {
    auto cell_text = [&](ModelTier tier, AttemptFilter filter) {
        const auto& c = report.cells.at({tier, filter});
        if (!c) return std::string("n/a");
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.2f%% [%.2f%%, %.2f%%] (%zu/%zu)", 100.0 * c->gain.proportion,
                      100.0 * c->ci.lower, 100.0 * c->ci.upper, c->gain.successes, c->gain.trials);
        return std::string(buf);
    };
    char line[256];
    std::string out;
    std::snprintf(line, sizeof line, "%-10s  %-38s  %-38s\n", "Model", "All Attempts", "Before Second Attempt");
    out += line;
    for (auto tier : kAllTiers) {
        std::snprintf(line, sizeof line, "%-10s  %-38s  %-38s\n", std::string(tier_name(tier)).c_str(),
                      cell_text(tier, AttemptFilter::AllAttempts).c_str(),
                      cell_text(tier, AttemptFilter::BeforeSecondAttempt).c_str());
        out += line;
    }
    for (const auto& t : report.tests) {
        if (!t.result) continue;
        std::snprintf(line, sizeof line, "z-test %s vs %s (%s): z = %.4f, one-tailed p = %.5f, two-tailed p = %.5f\n",
                      std::string(tier_name(t.first)).c_str(), std::string(tier_name(t.second)).c_str(),
                      std::string(filter_name(t.filter)).c_str(), t.result->z, t.result->p_one_tailed,
                      t.result->p_two_tailed);
        out += line;
    }
    if (report.helpfulness) {
        std::snprintf(line, sizeof line, "rated helpful: %.2f%%\n", 100.0 * *report.helpfulness);
        out += line;
    }
    return out;
}

}  // namespace tutor::analytics
