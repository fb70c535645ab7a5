#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "safe/dataset.hpp"
#include "safe/gbdt.hpp"
#include "safe/operators.hpp"

namespace safe::eval {

/// Mann-Whitney AUC: chance a random positive outscores a random negative,
/// ties counted half.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Occurrence counts of feature names over T runs, most frequent first
/// (ties by name).
struct FeatureDistribution {
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::size_t runs = 0;               // T
    std::size_t original_features = 0;  // M
};

FeatureDistribution feature_distribution(const std::vector<std::vector<std::string>>& runs,
                                         std::size_t original_features);

/// Jensen-Shannon divergence (natural log) between a distribution and the
/// ideal one that puts count T on its 2M most frequent names. Both are
/// normalized over the observed names.
double stability_jsd(const FeatureDistribution& dist);
double stability_jsd(const std::vector<std::vector<std::string>>& runs, std::size_t original_features);

/// KL divergence with 0 * ln(0 / x) = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double js_divergence(std::span<const double> p, std::span<const double> q);

struct ImportanceRow {
    std::string feature;
    bool generated = false;
    double importance = 0.0;
};

/// Trains the built-in ensemble on the original columns plus up to M derived
/// plan features (plan order) and reports average-gain importance per
/// column.
std::vector<ImportanceRow> importance_report(const Dataset& original, const ops::TransformPlan& plan,
                                             const gbdt::GbdtConfig& cfg);

void write_importance_csv(const std::vector<ImportanceRow>& rows, std::ostream& out);

/// L2-regularized logistic regression on standardized columns, fitted by
/// Newton iterations.
class LinearScorer {
public:
    static LinearScorer fit(const Dataset& train, double l2 = 1.0, std::size_t max_iter = 50);

    /// Margin per row; columns are matched by name.
    std::vector<double> score(const Dataset& d) const;

private:
    std::vector<std::string> names_;
    std::vector<double> mean_, scale_;
    std::vector<double> weights_;  // intercept first
};

/// Trains the built-in ensemble on `train` and returns test AUC.
double holdout_auc(const Dataset& train, const Dataset& test, const gbdt::GbdtConfig& cfg);

}  // namespace safe::eval
