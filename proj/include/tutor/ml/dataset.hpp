#pragma once

#include <span>

#include <Eigen/Dense>

#include "tutor/error.hpp"

namespace tutor::ml {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Labels = Eigen::VectorXi;

/// Row-per-sample design matrix with binary labels.
template <typename Scalar>
struct Dataset {
    Matrix<Scalar> features;
    Labels labels;

    Index size() const { return features.rows(); }
    Index dims() const { return features.cols(); }

    Index count(int label) const { return (labels.array() == label).count(); }

    Dataset subset(std::span<const Index> rows) const {
        Dataset out;
        out.features.resize(static_cast<Index>(rows.size()), dims());
        out.labels.resize(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.features.row(static_cast<Index>(i)) = features.row(rows[i]);
            out.labels(static_cast<Index>(i)) = labels(rows[i]);
        }
        return out;
    }

    void validate() const {
        if (size() == 0) throw Error("ml.empty", "training set is empty");
        if (dims() == 0) throw Error("ml.empty", "training set has no features");
        if (labels.size() != size()) throw Error("ml.shape", "label count does not match sample count");
        for (Index i = 0; i < labels.size(); ++i)
            if (labels(i) != 0 && labels(i) != 1) throw Error("ml.label", "labels must be 0 or 1");
        if (!features.allFinite()) throw Error("ml.nonfinite", "feature values must be finite");
    }
};

inline double accuracy(const Labels& predicted, const Labels& truth) {
    if (truth.size() == 0) return 0.0;
    return static_cast<double>((predicted.array() == truth.array()).count()) / static_cast<double>(truth.size());
}

/// F1 of the positive class. A fold with no positives in either vector scores 1.
inline double f1_score(const Labels& predicted, const Labels& truth) {
    const auto tp = ((predicted.array() == 1) && (truth.array() == 1)).count();
    const auto fp = ((predicted.array() == 1) && (truth.array() == 0)).count();
    const auto fn = ((predicted.array() == 0) && (truth.array() == 1)).count();
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace tutor::ml
