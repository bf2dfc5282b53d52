#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "tutor/ml/dataset.hpp"
#include "tutor/rng.hpp"
#include "tutor/special_functions.hpp"

namespace tutor::ml {

struct FoldResult {
    Index size = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
};

/// Mean with a two-sided 95% t-interval over folds.
struct IntervalEstimate {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    double half_width() const { return (upper - lower) / 2.0; }
};

struct CvReport {
    int k_folds = 0;
    std::vector<FoldResult> folds;
    IntervalEstimate accuracy;
    IntervalEstimate f1;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["k_folds"] = k_folds;
        j["accuracy"] = {{"mean", accuracy.mean}, {"ci95", {accuracy.lower, accuracy.upper}}};
        j["f1"] = {{"mean", f1.mean}, {"ci95", {f1.lower, f1.upper}}};
        auto& folds_json = j["folds"] = nlohmann::ordered_json::array();
        for (const auto& f : folds) folds_json.push_back({{"size", f.size}, {"accuracy", f.accuracy}, {"f1", f.f1}});
        return j;
    }
};

inline IntervalEstimate t_interval(const std::vector<double>& values, double level = 0.95) {
    const auto n = static_cast<double>(values.size());
    IntervalEstimate e;
    e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    const double half = sd == 0.0 ? 0.0 : stats::student_t_quantile(0.5 + level / 2.0, n - 1) * sd / std::sqrt(n);
    e.lower = e.mean - half;
    e.upper = e.mean + half;
    return e;
}

/// Returns predictions for a held-out fold. The fold's labels are visible so that test
/// stubs can cheat on purpose; real predictors ignore them.
template <typename Scalar>
using Predictor = std::function<Labels(const Dataset<Scalar>&)>;

template <typename Scalar>
using Trainer = std::function<Predictor<Scalar>(const Dataset<Scalar>&)>;

/// Fold boundaries: n/k rows per fold, the first n%k folds one larger.
inline std::vector<Index> fold_offsets(Index n, int k) {
    std::vector<Index> offsets{0};
    for (int f = 0; f < k; ++f) offsets.push_back(offsets.back() + n / k + (f < n % k ? 1 : 0));
    return offsets;
}

/// Seeded Fisher-Yates shuffle followed by contiguous folds.
template <typename Scalar>
CvReport cross_validate(const Dataset<Scalar>& data, int k_folds, const Trainer<Scalar>& trainer, std::uint64_t seed) {
    if (k_folds < 2) throw Error("ml.cv", "k_folds must be at least 2");
    if (k_folds > data.size())
        throw Error("ml.cv", "k_folds (" + std::to_string(k_folds) + ") exceeds the number of examples (" +
                                 std::to_string(data.size()) + ")");
    std::vector<Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    const auto offsets = fold_offsets(data.size(), k_folds);
    CvReport report;
    report.k_folds = k_folds;
    std::vector<double> accs, f1s;
    for (int f = 0; f < k_folds; ++f) {
        std::vector<Index> train, test;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto pos = static_cast<Index>(i);
            (pos >= offsets[static_cast<std::size_t>(f)] && pos < offsets[static_cast<std::size_t>(f) + 1] ? test : train)
                .push_back(order[i]);
        }
        const auto test_set = data.subset(test);
        const auto predicted = trainer(data.subset(train))(test_set);
        FoldResult result{test_set.size(), accuracy(predicted, test_set.labels), f1_score(predicted, test_set.labels)};
        accs.push_back(result.accuracy);
        f1s.push_back(result.f1);
        report.folds.push_back(result);
    }
    report.accuracy = t_interval(accs);
    report.f1 = t_interval(f1s);
    return report;
}

}  // namespace tutor::ml
