#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tutor/ml/dataset.hpp"
#include "tutor/rng.hpp"

namespace tutor::ml {

/// Number of synthetic minority samples needed to reach minority/majority = target_ratio.
inline Index smote_deficit(Index minority, Index majority, double target_ratio) {
    const auto target = static_cast<Index>(std::llround(target_ratio * static_cast<double>(majority)));
    return std::max<Index>(0, target - minority);
}

/// Synthetic minority oversampling. Each new point is x + u * (nn - x) for a random
/// minority point x, one of its k nearest minority neighbours nn (Euclidean, ties by
/// row order) and u uniform in [0, 1). Synthetic rows are appended after the input.
template <typename Scalar>
Dataset<Scalar> smote_oversample(const Dataset<Scalar>& data, int k_neighbors, double target_ratio,
                                 std::uint64_t seed) {
    if (k_neighbors < 1) throw Error("ml.smote", "k_neighbors must be at least 1");
    if (!(target_ratio > 0.0)) throw Error("ml.smote", "target_ratio must be positive");
    const Index ones = data.count(1);
    const Index zeros = data.size() - ones;
    const int minority_label = ones <= zeros ? 1 : 0;
    const Index majority = std::max(ones, zeros);

    std::vector<Index> minority;
    for (Index i = 0; i < data.size(); ++i)
        if (data.labels(i) == minority_label) minority.push_back(i);
    const auto m = static_cast<Index>(minority.size());
    if (m < 2) throw Error("ml.smote", "minority class needs at least 2 examples");

    const Index deficit = smote_deficit(m, majority, target_ratio);
    if (deficit == 0) return data;

    const Index k = std::min<Index>(k_neighbors, m - 1);
    std::vector<std::vector<Index>> neighbours(static_cast<std::size_t>(m));
    for (Index a = 0; a < m; ++a) {
        std::vector<std::pair<Scalar, Index>> dist;
        for (Index b = 0; b < m; ++b) {
            if (a == b) continue;
            const Scalar d = (data.features.row(minority[static_cast<std::size_t>(a)]) -
                              data.features.row(minority[static_cast<std::size_t>(b)]))
                                 .squaredNorm();
            dist.emplace_back(d, b);
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (Index i = 0; i < k; ++i) neighbours[static_cast<std::size_t>(a)].push_back(dist[static_cast<std::size_t>(i)].second);
    }

    Dataset<Scalar> out;
    out.features.resize(data.size() + deficit, data.dims());
    out.labels.resize(data.size() + deficit);
    out.features.topRows(data.size()) = data.features;
    out.labels.head(data.size()) = data.labels;

    Rng rng(seed);
    for (Index s = 0; s < deficit; ++s) {
        const auto a = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(m)));
        const auto& nn = neighbours[static_cast<std::size_t>(a)];
        const Index b = nn[uniform_index(rng, nn.size())];
        const auto u = static_cast<Scalar>(uniform_unit(rng));
        const auto x = data.features.row(minority[static_cast<std::size_t>(a)]);
        const auto y = data.features.row(minority[static_cast<std::size_t>(b)]);
        out.features.row(data.size() + s) = x + u * (y - x);
        out.labels(data.size() + s) = minority_label;
    }
    return out;
}

}  // namespace tutor::ml
