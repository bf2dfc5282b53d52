#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tutor/ml/decision_tree.hpp"

namespace tutor::ml {

struct ForestParams {
    int n_trees = 100;
    int max_depth = 8;
    int min_samples_leaf = 2;
    /// 0 selects ceil(sqrt(d)).
    int features_per_split = 0;
};

/// Bagged decision trees. Tree t is trained with seed master + t on a bootstrap
/// sample drawn from that seed; its probability is the mean of the member trees.
template <typename Scalar>
class RandomForest {
public:
    RandomForest() = default;

    static std::vector<Index> bootstrap_sample(Index n, std::uint64_t tree_seed) {
        Rng rng(tree_seed);
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (auto& r : rows) r = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        return rows;
    }

    static int resolve_features_per_split(int requested, Index dims) {
        if (requested > 0) return static_cast<int>(std::min<Index>(requested, dims));
        return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dims))));
    }

    static RandomForest fit(const Dataset<Scalar>& data, const ForestParams& params, std::uint64_t seed) {
        data.validate();
        if (params.n_trees < 1) throw Error("ml.params", "a forest needs at least one tree");
        RandomForest forest;
        forest.master_seed_ = seed;
        forest.features_per_split_ = resolve_features_per_split(params.features_per_split, data.dims());
        forest.dims_ = data.dims();
        const TreeParams tree_params{params.max_depth, params.min_samples_leaf, forest.features_per_split_};
        for (int t = 0; t < params.n_trees; ++t) {
            const std::uint64_t tree_seed = seed + static_cast<std::uint64_t>(t);
            const auto rows = bootstrap_sample(data.size(), tree_seed);
            forest.trees_.push_back(DecisionTree<Scalar>::fit(data.subset(rows), tree_params, tree_seed));
            forest.tree_seeds_.push_back(tree_seed);
        }
        return forest;
    }

    template <typename Derived>
    double predict_proba(const Eigen::MatrixBase<Derived>& x) const {
        if (trees_.empty()) throw Error("ml.untrained", "random forest has no trees");
        double sum = 0.0;
        for (const auto& tree : trees_) sum += tree.predict_proba(x);
        return sum / static_cast<double>(trees_.size());
    }

    template <typename Derived>
    int predict(const Eigen::MatrixBase<Derived>& x) const {
        return predict_proba(x) >= 0.5 ? 1 : 0;
    }

    Labels predict(const Matrix<Scalar>& rows) const {
        Labels out(rows.rows());
        for (Index i = 0; i < rows.rows(); ++i) out(i) = predict(rows.row(i));
        return out;
    }

    /// Accuracy on samples left out of at least one bootstrap; NaN if there are none.
    double oob_accuracy(const Dataset<Scalar>& data) const {
        const Index n = data.size();
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
        Eigen::VectorXi votes = Eigen::VectorXi::Zero(n);
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            std::vector<char> in_bag(static_cast<std::size_t>(n), 0);
            for (Index r : bootstrap_sample(n, tree_seeds_[t])) in_bag[static_cast<std::size_t>(r)] = 1;
            for (Index i = 0; i < n; ++i) {
                if (in_bag[static_cast<std::size_t>(i)]) continue;
                sum(i) += trees_[t].predict_proba(data.features.row(i));
                ++votes(i);
            }
        }
        Index scored = 0, correct = 0;
        for (Index i = 0; i < n; ++i) {
            if (votes(i) == 0) continue;
            ++scored;
            if ((sum(i) / votes(i) >= 0.5 ? 1 : 0) == data.labels(i)) ++correct;
        }
        return scored ? static_cast<double>(correct) / static_cast<double>(scored) : std::nan("");
    }

    const std::vector<DecisionTree<Scalar>>& trees() const { return trees_; }
    const std::vector<std::uint64_t>& tree_seeds() const { return tree_seeds_; }
    std::uint64_t master_seed() const { return master_seed_; }
    int features_per_split() const { return features_per_split_; }
    Index dims() const { return dims_; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["master_seed"] = master_seed_;
        j["features_per_split"] = features_per_split_;
        j["dims"] = dims_;
        j["trees"] = nlohmann::ordered_json::array();
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            auto tj = trees_[t].to_json();
            tj["seed"] = tree_seeds_[t];
            j["trees"].push_back(std::move(tj));
        }
        return j;
    }

    static RandomForest from_json(const nlohmann::json& j) {
        RandomForest forest;
        forest.master_seed_ = j.at("master_seed").get<std::uint64_t>();
        forest.features_per_split_ = j.at("features_per_split").get<int>();
        forest.dims_ = j.at("dims").get<Index>();
        for (const auto& tj : j.at("trees")) {
            forest.trees_.push_back(DecisionTree<Scalar>::from_json(tj));
            forest.tree_seeds_.push_back(tj.at("seed").get<std::uint64_t>());
        }
        if (forest.trees_.empty()) throw Error("ml.untrained", "random forest has no trees");
        return forest;
    }

    friend bool operator==(const RandomForest&, const RandomForest&) = default;

private:
    std::vector<DecisionTree<Scalar>> trees_;
    std::vector<std::uint64_t> tree_seeds_;
    std::uint64_t master_seed_ = 0;
    int features_per_split_ = 0;
    Index dims_ = 0;
};

template <typename Scalar>
RandomForest<Scalar> train_random_forest(const Dataset<Scalar>& data, const ForestParams& params, std::uint64_t seed) {
    return RandomForest<Scalar>::fit(data, params, seed);
}

}  // namespace tutor::ml
