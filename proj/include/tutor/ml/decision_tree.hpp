#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tutor/ml/dataset.hpp"
#include "tutor/rng.hpp"

namespace tutor::ml {

struct TreeParams {
    int max_depth = 8;
    int min_samples_leaf = 2;
    /// Features examined per split; 0 or >= dims means all of them.
    int features_per_split = 0;
};

inline double gini(double n0, double n1) {
    const double n = n0 + n1;
    if (n == 0.0) return 0.0;
    const double p0 = n0 / n, p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

/// Binary CART classifier with Gini splits at midpoints between sorted unique values.
/// Split ties go to the lowest feature index, then the lowest threshold.
template <typename Scalar>
class DecisionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        Scalar threshold{};
        int left = -1;
        int right = -1;
        int count0 = 0;
        int count1 = 0;
        int label = 0;
        double probability = 0.0;  // fraction of class 1 at this node

        bool is_leaf() const { return feature < 0; }
        friend bool operator==(const Node&, const Node&) = default;
    };

    DecisionTree() = default;

    static DecisionTree fit(const Dataset<Scalar>& data, const TreeParams& params, std::uint64_t seed) {
        data.validate();
        if (params.max_depth < 0) throw Error("ml.params", "max_depth must be non-negative");
        if (params.min_samples_leaf < 1) throw Error("ml.params", "min_samples_leaf must be at least 1");
        DecisionTree tree;
        tree.params_ = params;
        tree.dims_ = data.dims();
        Builder builder{data, params, Rng(seed), tree.nodes_};
        std::vector<Index> rows(static_cast<std::size_t>(data.size()));
        std::iota(rows.begin(), rows.end(), Index{0});
        builder.grow(rows, 0);
        return tree;
    }

    template <typename Derived>
    double predict_proba(const Eigen::MatrixBase<Derived>& x) const {
        return leaf_for(x).probability;
    }

    template <typename Derived>
    int predict(const Eigen::MatrixBase<Derived>& x) const {
        return leaf_for(x).label;
    }

    Eigen::VectorXd predict_proba(const Matrix<Scalar>& rows) const {
        Eigen::VectorXd out(rows.rows());
        for (Index i = 0; i < rows.rows(); ++i) out(i) = predict_proba(rows.row(i));
        return out;
    }

    Labels predict(const Matrix<Scalar>& rows) const {
        Labels out(rows.rows());
        for (Index i = 0; i < rows.rows(); ++i) out(i) = predict(rows.row(i));
        return out;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const TreeParams& params() const { return params_; }
    Index dims() const { return dims_; }

    int depth() const { return nodes_.empty() ? 0 : depth_of(0); }

    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
    }

    /// Nested node records: internal {feature, threshold, counts, left, right}, leaf {counts, label, probability}.
    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["dims"] = dims_;
        j["max_depth"] = params_.max_depth;
        j["min_samples_leaf"] = params_.min_samples_leaf;
        j["features_per_split"] = params_.features_per_split;
        j["root"] = nodes_.empty() ? nlohmann::ordered_json() : node_json(0);
        return j;
    }

    static DecisionTree from_json(const nlohmann::json& j) {
        DecisionTree tree;
        tree.dims_ = j.at("dims").get<Index>();
        tree.params_.max_depth = j.at("max_depth").get<int>();
        tree.params_.min_samples_leaf = j.at("min_samples_leaf").get<int>();
        tree.params_.features_per_split = j.at("features_per_split").get<int>();
        if (!j.at("root").is_null()) tree.read_node(j.at("root"));
        return tree;
    }

    /// Builds a tree from explicit nodes; node 0 is the root.
    static DecisionTree from_nodes(std::vector<Node> nodes, Index dims) {
        DecisionTree tree;
        tree.nodes_ = std::move(nodes);
        tree.dims_ = dims;
        return tree;
    }

    friend bool operator==(const DecisionTree& a, const DecisionTree& b) {
        return a.dims_ == b.dims_ && a.nodes_ == b.nodes_;
    }

private:
    struct Builder {
        const Dataset<Scalar>& data;
        const TreeParams& params;
        Rng rng;
        std::vector<Node>& nodes;

        std::vector<Index> candidate_features() {
            const Index d = data.dims();
            std::vector<Index> all(static_cast<std::size_t>(d));
            std::iota(all.begin(), all.end(), Index{0});
            const Index m = params.features_per_split;
            if (m <= 0 || m >= d) return all;
            for (Index i = 0; i < m; ++i) {
                const auto j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(d - i)));
                std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
            }
            all.resize(static_cast<std::size_t>(m));
            std::sort(all.begin(), all.end());
            return all;
        }

        int grow(std::vector<Index>& rows, int depth) {
            Node node;
            for (Index r : rows) (data.labels(r) == 1 ? node.count1 : node.count0)++;
            const int n = node.count0 + node.count1;
            node.probability = static_cast<double>(node.count1) / n;
            node.label = node.count1 > node.count0 ? 1 : 0;
            const int id = static_cast<int>(nodes.size());
            nodes.push_back(node);

            const bool pure = node.count0 == 0 || node.count1 == 0;
            if (pure || depth >= params.max_depth || n < 2 * params.min_samples_leaf) return id;

            const double parent = gini(node.count0, node.count1);
            Index best_feature = -1;
            Scalar best_threshold{};
            double best_impurity = 0.0;
            std::vector<std::pair<Scalar, int>> column(rows.size());
            for (Index f : candidate_features()) {
                for (std::size_t i = 0; i < rows.size(); ++i)
                    column[i] = {data.features(rows[i], f), data.labels(rows[i])};
                std::sort(column.begin(), column.end());
                double l0 = 0, l1 = 0;
                for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                    (column[i].second == 1 ? l1 : l0) += 1;
                    if (!(column[i].first < column[i + 1].first)) continue;
                    const double nl = static_cast<double>(i + 1);
                    const double nr = n - nl;
                    if (nl < params.min_samples_leaf || nr < params.min_samples_leaf) continue;
                    const double impurity =
                        (nl * gini(l0, l1) + nr * gini(node.count0 - l0, node.count1 - l1)) / n;
                    if (best_feature < 0 || impurity < best_impurity - 1e-12) {
                        best_feature = f;
                        best_threshold = column[i].first + (column[i + 1].first - column[i].first) / Scalar(2);
                        best_impurity = impurity;
                    }
                }
            }
            if (best_feature < 0 || best_impurity > parent + 1e-12) return id;

            std::vector<Index> left, right;
            for (Index r : rows) (data.features(r, best_feature) <= best_threshold ? left : right).push_back(r);
            rows.clear();
            rows.shrink_to_fit();
            const int l = grow(left, depth + 1);
            const int rr = grow(right, depth + 1);
            nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(best_feature);
            nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
            nodes[static_cast<std::size_t>(id)].left = l;
            nodes[static_cast<std::size_t>(id)].right = rr;
            return id;
        }
    };

    template <typename Derived>
    const Node& leaf_for(const Eigen::MatrixBase<Derived>& x) const {
        if (nodes_.empty()) throw Error("ml.untrained", "decision tree has no nodes");
        if (x.size() != dims_)
            throw Error("ml.schema", "feature count " + std::to_string(x.size()) + " does not match model (" +
                                         std::to_string(dims_) + ")");
        const Node* node = &nodes_[0];
        while (!node->is_leaf())
            node = &nodes_[static_cast<std::size_t>(x(node->feature) <= node->threshold ? node->left : node->right)];
        return *node;
    }

    int depth_of(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth_of(n.left), depth_of(n.right));
    }

    nlohmann::ordered_json node_json(int id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        nlohmann::ordered_json j;
        j["counts"] = {n.count0, n.count1};
        if (n.is_leaf()) {
            j["label"] = n.label;
            j["probability"] = n.probability;
        } else {
            j["feature"] = n.feature;
            j["threshold"] = static_cast<double>(n.threshold);
            j["left"] = node_json(n.left);
            j["right"] = node_json(n.right);
        }
        return j;
    }

    int read_node(const nlohmann::json& j) {
        Node n;
        n.count0 = j.at("counts").at(0).get<int>();
        n.count1 = j.at("counts").at(1).get<int>();
        const int total = n.count0 + n.count1;
        n.probability = total ? static_cast<double>(n.count1) / total : 0.0;
        n.label = n.count1 > n.count0 ? 1 : 0;
        if (j.contains("label")) n.label = j["label"].get<int>();
        if (j.contains("probability")) n.probability = j["probability"].get<double>();
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        if (j.contains("feature")) {
            const int feature = j["feature"].get<int>();
            if (feature < 0 || feature >= dims_) throw Error("ml.schema", "tree node refers to an unknown feature");
            const auto threshold = static_cast<Scalar>(j.at("threshold").get<double>());
            const int l = read_node(j.at("left"));
            const int r = read_node(j.at("right"));
            auto& node = nodes_[static_cast<std::size_t>(id)];
            node.feature = feature;
            node.threshold = threshold;
            node.left = l;
            node.right = r;
        }
        return id;
    }

    std::vector<Node> nodes_;
    TreeParams params_;
    Index dims_ = 0;
};

template <typename Scalar>
DecisionTree<Scalar> train_decision_tree(const Dataset<Scalar>& data, const TreeParams& params, std::uint64_t seed) {
    return DecisionTree<Scalar>::fit(data, params, seed);
}

}  // namespace tutor::ml
