#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "safe/dataset.hpp"

namespace safe::gbdt {

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GbdtConfig {
    std::size_t n_trees = 50;
    std::size_t max_depth = 4;
    double learning_rate = 0.3;
    double reg_lambda = 1.0;
    /// Penalty subtracted from every split gain; a split needs a positive
    /// remainder.
    double min_gain = 0.0;
    std::size_t min_child_rows = 1;
    /// Training is fully deterministic; the seed is carried so configs
    /// round-trip through the CLI and provenance digests unchanged.
    std::uint64_t seed = 0;

    void validate() const;
};

/// Flat tree node. Internal nodes route `value < split_value` left.
struct TreeNode {
    int feature = -1;
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    double weight = 0.0;  // leaf output before learning-rate scaling
    double gain = 0.0;    // recorded split gain, internal nodes only
    std::size_t n_rows = 0;
    std::size_t depth = 0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    const TreeNode& root() const { return nodes.front(); }
    /// Index of the leaf reached by a row whose features are given by
    /// `value_of(feature_id)`.
    template <class ValueOf>
    std::size_t route(ValueOf&& value_of) const {
        std::size_t n = 0;
        while (!nodes[n].is_leaf()) {
            const auto& node = nodes[n];
            n = static_cast<std::size_t>(value_of(static_cast<std::size_t>(node.feature)) < node.split_value
                                             ? node.left
                                             : node.right);
        }
        return n;
    }
};

struct SplitRecord {
    std::size_t tree = 0;
    std::size_t node = 0;
    std::size_t feature = 0;
    double gain = 0.0;
    double split_value = 0.0;
};

struct TreeEnsemble {
    std::vector<Tree> trees;
    double base_score = 0.0;
    double learning_rate = 0.3;
    std::vector<std::string> feature_names;
    std::vector<SplitRecord> splits;
    /// Mean training log-loss before any tree (index 0) and after each round.
    std::vector<double> train_loss;
    /// Same for the validation set, when one was supplied.
    std::vector<double> valid_loss;
};

/// Newton boosting on logistic loss with exact greedy split search.
TreeEnsemble train(const Dataset& train, const Dataset* valid, const GbdtConfig& cfg);

/// Raw additive score: base_score + learning_rate * sum of reached leaf weights.
std::vector<double> predict_margin(const TreeEnsemble& e, const Dataset& d);

/// Margin after only the first `n_trees` trees.
std::vector<double> predict_margin(const TreeEnsemble& e, const Dataset& d, std::size_t n_trees);

/// Mean recorded gain over all splits on each feature, indexed by feature id;
/// unused features get 0.
std::vector<double> feature_importance(const TreeEnsemble& e);

/// Split gain of partitioning (G, H) into (G_L, H_L) and the remainder,
/// before subtracting min_gain.
double split_gain(double g_left, double h_left, double g_total, double h_total, double lambda);

double sigmoid(double margin);
double log_loss(std::span<const double> margins, std::span<const std::uint8_t> labels);

/// Human-readable listing: one line per node with id, feature, threshold,
/// gain and leaf weight. Debug aid only.
void dump(const TreeEnsemble& e, std::ostream& out);

}  // namespace safe::gbdt
