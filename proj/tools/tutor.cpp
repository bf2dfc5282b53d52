#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tutor/analytics.hpp"
#include "tutor/error.hpp"
#include "tutor/hint_generation.hpp"
#include "tutor/service.hpp"
#include "tutor/simulation.hpp"

using namespace tutor;
using json = nlohmann::ordered_json;

namespace {

// Usage problems found after parsing (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    bool json_out = false;
    std::string data = TUTOR_DATA_DIR;
    std::string bank;
    std::string wiki;
    std::string synonyms;
    std::uint64_t seed = 0;

    std::string bank_path() const { return bank.empty() ? data + "/exercises.jsonl" : bank; }

    service::ServiceConfig config() const {
        service::ServiceConfig c;
        c.bank = bank_path();
        c.wiki = wiki.empty() ? data + "/wiki/articles.jsonl" : wiki;
        c.synonyms = synonyms.empty() ? data + "/wiki/synonyms.json" : synonyms;
        c.log = "./unused.jsonl";
        c.seed = seed;
        return c;
    }
};

void emit(const Common& c, const json& j, const std::string& text) {
    if (c.json_out)
        std::cout << j.dump(2) << '\n';
    else
        std::cout << text;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

const Exercise& find_exercise(const std::vector<Exercise>& bank, const std::string& id) {
    for (const auto& e : bank)
        if (e.id == id) return e;
    throw Error("core.unknown_exercise", "unknown exercise '" + id + "'");
}

ModelTier tier_arg(const std::string& s) {
    try {
        return parse_tier(s);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

// ---------------------------------------------------------------------------

void run_ingest(const Common& c, const std::string& out) {
    const auto cfg = c.config();
    auto index = wiki::ArticleIndex::load(*cfg.wiki);
    index.set_synonyms(wiki::ArticleIndex::load_synonyms(*cfg.synonyms));
    const auto tree = wiki::train_quality_model(index, c.seed);
    if (!out.empty()) storage::save_explanation_model(out, tree);
    json j{{"articles", index.articles().size()},
           {"skipped", index.skipped()},
           {"keywords", index.entries().size()},
           {"training_examples", wiki::training_examples(index).size()}};
    if (!out.empty()) j["model"] = out;
    std::ostringstream s;
    s << "articles: " << index.articles().size() << " (skipped " << index.skipped() << ")\n"
      << "keywords: " << index.entries().size() << '\n';
    if (!out.empty()) s << "explanation model written to " << out << '\n';
    emit(c, j, s.str());
}

void run_train(const Common& c, const std::string& tier_name_arg, const std::string& out, const std::string& log,
               std::size_t examples, int trees) {
    const auto tier = tier_arg(tier_name_arg);
    std::vector<feedback::TrainingExample> data;
    if (log.empty()) {
        data = feedback::synthetic_examples(examples, tier, c.seed);
    } else {
        const core::TutorEngine engine(service::build_resources(c.config()));
        data = core::examples_from_log(engine, storage::load_log(log), tier);
    }
    ml::ForestParams params;
    params.n_trees = trees;
    const auto model = feedback::train_feedback_model(data, tier, params, c.seed);
    storage::save_model(out, model);
    json j{{"tier", tier_name(tier)}, {"examples", data.size()}, {"trees", trees}, {"model", out}};
    emit(c, j, std::string(tier_name(tier)) + " model trained on " + std::to_string(data.size()) +
                   " examples, written to " + out + "\n");
}

void run_cv(const Common& c, int folds, std::size_t examples, const std::string& tier_name_arg, int trees) {
    const auto tier = tier_arg(tier_name_arg);
    if (folds < 2) throw UsageError("--folds must be at least 2");
    if (static_cast<std::size_t>(folds) > examples) throw UsageError("--folds exceeds --examples");
    const auto data = feedback::synthetic_examples(examples, tier, c.seed);
    const auto report = feedback::cross_validate_model(data, folds, {trees, 8, 2, 0}, c.seed);
    std::size_t smallest = SIZE_MAX, largest = 0;
    for (const auto& f : report.folds) {
        smallest = std::min<std::size_t>(smallest, f.size);
        largest = std::max<std::size_t>(largest, f.size);
    }
    std::ostringstream s;
    s << report.k_folds << " folds of " << (smallest == largest ? std::to_string(smallest)
                                                               : std::to_string(smallest) + "-" + std::to_string(largest))
      << " (" << examples << " " << tier_name(tier) << " examples)\n"
      << "accuracy " << fmt("%.4f [%.4f, %.4f]", report.accuracy.mean, report.accuracy.lower, report.accuracy.upper) << '\n'
      << "F1       " << fmt("%.4f [%.4f, %.4f]", report.f1.mean, report.f1.lower, report.f1.upper) << '\n';
    emit(c, report.to_json(), s.str());
}

void run_hint(const Common& c, const std::string& exercise_id) {
    const auto bank = storage::load_exercises(c.bank_path());
    const auto hints = hints::generate_candidates(find_exercise(bank, exercise_id));
    json j = json::array();
    std::ostringstream s;
    for (const auto& h : hints) {
        j.push_back({{"text", h.text}, {"expectation_id", h.expectation_id}, {"cue_id", h.cue_id}});
        s << h.text << '\n';
    }
    if (hints.empty()) s << "no hint: every clause repeats a question keyword\n";
    emit(c, j, s.str());
}

math::ParseContext check_context(const std::string& a, const std::string& b, const std::vector<std::string>& functions) {
    math::ParseContext ctx;
    ctx.declared_functions.insert(functions.begin(), functions.end());
    for (const auto* latex : {&a, &b})
        for (const auto& t : math::lex_latex(*latex))
            if (t.kind == math::TokenKind::Ident && !ctx.declared_functions.count(t.lexeme) &&
                !math::is_builtin_function(t.lexeme))
                ctx.variables.insert(t.lexeme);
    return ctx;
}

void run_math_check(const Common& c, const std::string& attempt, const std::string& expected,
                    const std::vector<std::string>& functions) {
    const auto ctx = check_context(attempt, expected, functions);
    const auto found = math::parse_expression(attempt, ctx);
    const auto want = math::parse_expression(expected, ctx);
    math::SamplingOptions options;
    options.seed = c.seed;
    const auto v = math::check_equivalence(found, want, options);
    json j{{"verdict", math::verdict_name(v.verdict)},
           {"attempt", math::describe(found)},
           {"expected", math::describe(want)}};
    std::string text = std::string(math::verdict_name(v.verdict)) + "\n";
    if (v.diff) {
        j["hint"] = v.diff->message();
        text += v.diff->message() + "\n";
    }
    emit(c, j, text);
}

void run_grade(const Common& c, const std::string& exercise_id, const std::string& text, const std::string& latex,
               double threshold) {
    if (text.empty() == latex.empty()) throw UsageError("give exactly one of --text or --latex");
    const auto bank = storage::load_exercises(c.bank_path());
    const auto ctx = feedback::FeatureContext::from_bank(bank);
    const auto g = core::grade_attempt(latex.empty() ? text : latex, find_exercise(bank, exercise_id), !latex.empty(),
                                       ctx.stats, threshold, c.seed);
    json j{{"grade", grade_name(g.grade)}, {"similarity", g.similarity}};
    std::string out = std::string(grade_name(g.grade));
    if (latex.empty()) out += fmt(" (similarity %.3f)", g.similarity);
    out += "\n";
    if (g.verdict) {
        j["verdict"] = math::verdict_name(g.verdict->verdict);
        if (g.verdict->diff) {
            j["hint"] = g.verdict->diff->message();
            out += g.verdict->diff->message() + "\n";
        }
    }
    if (g.parse_error) {
        j["parse_error"] = *g.parse_error;
        out += "parse error: " + *g.parse_error + "\n";
    }
    emit(c, j, out);
}

void run_simulate(const Common& c, std::size_t students, double responsiveness, const std::string& out) {
    if (students == 0) throw UsageError("--students must be positive");
    const core::TutorEngine engine(service::build_resources(c.config()));
    sim::CohortOptions options;
    options.students = students;
    options.seed = c.seed;
    options.responsiveness = responsiveness;
    const auto run = sim::simulate(engine, options);
    if (!out.empty()) storage::write_file(out, storage::serialize_log(run.records));
    const auto report = analytics::build_report(run.turns());
    json j{{"students", students}, {"turns", run.records.size()}, {"report", analytics::to_json(report)}};
    if (!out.empty()) j["log"] = out;
    std::string text = std::to_string(run.records.size()) + " turns from " + std::to_string(students) + " students\n";
    if (!out.empty()) text += "log written to " + out + "\n";
    emit(c, j, text + analytics::to_table(report));
}

void run_report(const Common& c, const std::string& log) {
    const auto report = analytics::build_report(storage::load_log(log));
    emit(c, analytics::to_json(report), analytics::to_table(report));
}

void run_replay(const Common& c, const std::string& log) {
    const core::TutorEngine engine(service::build_resources(c.config()));
    const auto turns = storage::load_log(log);
    const auto r = core::replay_log(engine, turns);
    const bool same = analytics::to_json(analytics::build_report(r.turns)).dump() ==
                      analytics::to_json(analytics::build_report(turns)).dump();
    json j{{"turns", turns.size()}, {"sessions", r.states.size()}, {"mismatches", r.mismatches}, {"same_report", same}};
    std::string text = std::to_string(turns.size()) + " turns, " + std::to_string(r.states.size()) + " sessions, " +
                       std::to_string(r.mismatches) + " mismatches\n";
    emit(c, j, text);
    if (r.mismatches != 0 || !same) throw Error("core.replay", "replay diverged from the log; check --seed and --bank match the run that wrote it");
}

void run_serve(std::string config_path) {
    if (const char* env = std::getenv("TUTOR_CONFIG"); env && *env) config_path = env;
    if (config_path.empty()) throw UsageError("--config or TUTOR_CONFIG is required");
    const auto config = service::ServiceConfig::load(config_path);
    std::cerr << "serving on " << config.host << ":" << config.port << '\n';
    service::serve(config);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tutoring engine tools"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_flag("--json", common.json_out, "JSON output");
    app.add_option("--data", common.data, "Directory with the bundled bank and corpus");
    app.add_option("--bank", common.bank, "Exercise bank (JSONL)");
    app.add_option("--wiki", common.wiki, "Article corpus (JSONL)");
    app.add_option("--synonyms", common.synonyms, "Synonym map (JSON)");
    app.add_option("--seed", common.seed, "Seed");

    std::string out, log, tier = "deep", exercise_id, text, latex, attempt, expected, config;
    std::vector<std::string> functions;
    std::size_t examples = 450, students = 200;
    int folds = 50, trees = 20;
    double threshold = core::kDefaultGradeThreshold, responsiveness = 0.6;

    auto* ingest = app.add_subcommand("ingest-wiki", "Index the article corpus and train the explanation model");
    ingest->add_option("--out", out, "Write the explanation model here");

    auto* train = app.add_subcommand("train", "Train a feedback model");
    train->add_option("--tier", tier, "baseline, shallow or deep")->required();
    train->add_option("--out", out, "Model file")->required();
    train->add_option("--log", log, "Train from an interaction log instead of synthetic examples");
    train->add_option("--examples", examples, "Synthetic example count")->check(CLI::PositiveNumber);
    train->add_option("--trees", trees, "Forest size")->check(CLI::PositiveNumber);

    auto* cv = app.add_subcommand("cv", "Cross-validate a forest on synthetic examples");
    cv->add_option("--folds", folds, "Fold count");
    cv->add_option("--examples", examples, "Synthetic example count")->check(CLI::PositiveNumber);
    cv->add_option("--tier", tier, "Feature tier");
    cv->add_option("--trees", trees, "Forest size")->check(CLI::PositiveNumber);

    auto* hint = app.add_subcommand("hint", "Generate hints for an exercise");
    hint->add_option("--exercise-id", exercise_id)->required();

    auto* math_cmd = app.add_subcommand("math", "Math tools");
    math_cmd->require_subcommand(1);
    auto* check = math_cmd->add_subcommand("check", "Compare two LaTeX expressions");
    check->add_option("--attempt", attempt)->required();
    check->add_option("--expected", expected)->required();
    check->add_option("--functions", functions, "Declared function symbols")->delimiter(',');

    auto* grade = app.add_subcommand("grade", "Grade one attempt");
    grade->add_option("--exercise-id", exercise_id)->required();
    grade->add_option("--text", text);
    grade->add_option("--latex", latex);
    grade->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));

    auto* simulate = app.add_subcommand("simulate", "Run a simulated cohort");
    simulate->add_option("--students", students, "Cohort size");
    simulate->add_option("--responsiveness", responsiveness)->check(CLI::Range(0.0, 1.0));
    simulate->add_option("--out", out, "Write the interaction log here");

    auto* report = app.add_subcommand("report", "Learning-gain report from a log");
    report->add_option("--log", log)->required();

    auto* replay = app.add_subcommand("replay", "Replay a log and compare states");
    replay->add_option("--log", log)->required();

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config, "Service config (TUTOR_CONFIG overrides)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) run_ingest(common, out);
        else if (*train) run_train(common, tier, out, log, examples, trees);
        else if (*cv) run_cv(common, folds, examples, tier, trees);
        else if (*hint) run_hint(common, exercise_id);
        else if (*check) run_math_check(common, attempt, expected, functions);
        else if (*grade) run_grade(common, exercise_id, text, latex, threshold);
        else if (*simulate) run_simulate(common, students, responsiveness, out);
        else if (*report) run_report(common, log);
        else if (*replay) run_replay(common, log);
        else if (*serve) run_serve(config);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        if (common.json_out)
            std::cout << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump(2) << '\n';
        std::cerr << e.code() << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
