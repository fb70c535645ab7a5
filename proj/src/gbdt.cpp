#include "safe/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "safe/parallel.hpp"

namespace safe::gbdt {

void GbdtConfig::validate() const {
    if (n_trees < 1) throw TrainError("n_trees must be at least 1");
    if (max_depth < 1) throw TrainError("max_depth must be at least 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw TrainError("learning_rate must lie in (0, 1]");
    if (!(reg_lambda >= 0.0)) throw TrainError("reg_lambda must be non-negative");
    if (!(min_gain >= 0.0)) throw TrainError("min_gain must be non-negative");
    if (min_child_rows < 1) throw TrainError("min_child_rows must be at least 1");
}

double sigmoid(double margin) {
    if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
    const double e = std::exp(margin);
    return e / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double leaf_weight(double g, double h, double lambda) {
    const double denom = h + lambda;
    return denom > 0.0 ? -g / denom : 0.0;
}

double score(double g, double h, double lambda) {
    const double denom = h + lambda;
    return denom > 0.0 ? g * g / denom : 0.0;
}

struct Candidate {
    double gain = 0.0;
    double threshold = 0.0;
    bool found = false;
};

struct NodeStats {
    double g = 0.0;
    double h = 0.0;
    std::size_t n = 0;
};

std::vector<std::span<const double>> resolve_columns(const TreeEnsemble& e, const Dataset& d,
                                                     bool only_used) {
    std::vector<char> used(e.feature_names.size(), only_used ? 0 : 1);
    for (const auto& s : e.splits) used[s.feature] = 1;
    std::vector<std::span<const double>> cols(e.feature_names.size());
    for (std::size_t f = 0; f < cols.size(); ++f) {
        if (!used[f]) continue;
        auto idx = d.find(e.feature_names[f]);
        if (!idx) throw DataError("missing feature column '" + e.feature_names[f] + "'");
        cols[f] = d.column(*idx).values;
    }
    return cols;
}

void add_tree_margins(const Tree& tree, double lr, const std::vector<std::span<const double>>& cols,
                      std::vector<double>& margins) {
    for (std::size_t r = 0; r < margins.size(); ++r) {
        const auto leaf = tree.route([&](std::size_t f) { return cols[f][r]; });
        margins[r] += lr * tree.nodes[leaf].weight;
    }
}

}  // namespace

double split_gain(double g_left, double h_left, double g_total, double h_total, double lambda) {
    const double g_right = g_total - g_left;
    const double h_right = h_total - h_left;
    return 0.5 * (score(g_left, h_left, lambda) + score(g_right, h_right, lambda) -
                  score(g_total, h_total, lambda));
}

double log_loss(std::span<const double> margins, std::span<const std::uint8_t> labels) {
    if (margins.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        sum += labels[i] ? softplus(-margins[i]) : softplus(margins[i]);
    }
    return sum / static_cast<double>(margins.size());
}

TreeEnsemble train(const Dataset& train, const Dataset* valid, const GbdtConfig& cfg) {
    cfg.validate();
    const std::size_t n = train.n_rows();
    const std::size_t m = train.n_features();
    if (n == 0) throw TrainError("training set is empty");
    if (!train.has_both_classes()) throw TrainError("training labels contain a single class");

    const auto labels = train.labels();
    const double pos = static_cast<double>(train.count_positive());

    TreeEnsemble e;
    e.feature_names = train.names();
    e.learning_rate = cfg.learning_rate;
    e.base_score = std::log(pos / (static_cast<double>(n) - pos));

    // Rows of each feature in ascending value order, ties by row index, with
    // the values laid out in the same order.
    std::vector<std::vector<std::uint32_t>> order(m);
    std::vector<std::vector<double>> sorted_values(m);
    parallel_for(m, [&](std::size_t f) {
        const auto& col = train.column(f).values;
        auto& o = order[f];
        o.resize(n);
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
        auto& sv = sorted_values[f];
        sv.resize(n);
        for (std::size_t i = 0; i < n; ++i) sv[i] = col[o[i]];
    });

    std::vector<double> margins(n, e.base_score);
    e.train_loss.push_back(log_loss(margins, labels));

    std::vector<std::span<const double>> valid_cols;
    std::vector<double> valid_margins;
    if (valid != nullptr && valid->n_rows() > 0) {
        valid_cols = resolve_columns(e, *valid, false);
        valid_margins.assign(valid->n_rows(), e.base_score);
        e.valid_loss.push_back(log_loss(valid_margins, valid->labels()));
    }

    struct GradHess {
        double g, h;
    };
    std::vector<GradHess> gh(n);
    std::vector<int> node_of(n);
    std::vector<int> row_slot(n);

    for (std::size_t t = 0; t < cfg.n_trees; ++t) {
        NodeStats root;
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(margins[r]);
            gh[r] = GradHess{p - static_cast<double>(labels[r]), p * (1.0 - p)};
            root.g += gh[r].g;
            root.h += gh[r].h;
        }
        root.n = n;
        std::fill(node_of.begin(), node_of.end(), 0);

        Tree tree;
        std::vector<NodeStats> stats{root};
        tree.nodes.push_back(TreeNode{.n_rows = n, .depth = 0});
        std::vector<std::size_t> frontier{0};

        for (std::size_t depth = 0; depth < cfg.max_depth && !frontier.empty(); ++depth) {
            // Nodes that could still yield two children of min_child_rows.
            std::vector<int> slot_of(tree.nodes.size(), -1);
            std::vector<std::size_t> open;
            for (auto nd : frontier) {
                if (stats[nd].n >= 2 * cfg.min_child_rows) {
                    slot_of[nd] = static_cast<int>(open.size());
                    open.push_back(nd);
                }
            }
            if (open.empty()) break;
            const std::size_t slots = open.size();
            for (std::size_t r = 0; r < n; ++r) row_slot[r] = slot_of[static_cast<std::size_t>(node_of[r])];

            std::vector<std::vector<Candidate>> best(m, std::vector<Candidate>(slots));
            parallel_for(m, [&](std::size_t f) {
                const auto& o = order[f];
                const auto& sv = sorted_values[f];
                std::vector<NodeStats> left(slots);
                std::vector<double> prev(slots, 0.0);
                std::vector<char> has_prev(slots, 0);
                // Child score sum of each slot's best split so far. The gain is
                // monotone in it, so weaker candidates are rejected before the
                // full gain is formed.
                std::vector<double> best_children(slots, 0.0);
                auto& out = best[f];
                for (std::size_t i = 0; i < n; ++i) {
                    const auto r = o[i];
                    const int s = row_slot[r];
                    if (s < 0) continue;
                    const auto si = static_cast<std::size_t>(s);
                    const double x = sv[i];
                    if (has_prev[si] && x != prev[si]) {
                        const auto& total = stats[open[si]];
                        const std::size_t n_left = left[si].n;
                        const std::size_t n_right = total.n - n_left;
                        if (n_left >= cfg.min_child_rows && n_right >= cfg.min_child_rows) {
                            const double children = score(left[si].g, left[si].h, cfg.reg_lambda) +
                                                    score(total.g - left[si].g, total.h - left[si].h, cfg.reg_lambda);
                            if (!out[si].found || children >= best_children[si]) {
                                const double gain =
                                    split_gain(left[si].g, left[si].h, total.g, total.h, cfg.reg_lambda) - cfg.min_gain;
                                if (gain > out[si].gain) {
                                    double thr = std::midpoint(prev[si], x);
                                    if (!(thr > prev[si])) thr = x;
                                    out[si] = Candidate{gain, thr, true};
                                    best_children[si] = children;
                                }
                            }
                        }
                    }
                    left[si].g += gh[r].g;
                    left[si].h += gh[r].h;
                    ++left[si].n;
                    prev[si] = x;
                    has_prev[si] = 1;
                }
            });

            std::vector<std::size_t> next;
            std::vector<int> split_slot(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < slots; ++s) {
                int chosen = -1;
                Candidate c;
                for (std::size_t f = 0; f < m; ++f) {
                    if (best[f][s].found && best[f][s].gain > c.gain) {
                        c = best[f][s];
                        chosen = static_cast<int>(f);
                    }
                }
                if (chosen < 0) continue;
                const auto nd = open[s];
                const int left_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(TreeNode{.depth = depth + 1});
                tree.nodes.push_back(TreeNode{.depth = depth + 1});
                stats.resize(tree.nodes.size());
                auto& node = tree.nodes[nd];
                node.feature = chosen;
                node.split_value = c.threshold;
                node.gain = c.gain;
                node.left = left_id;
                node.right = left_id + 1;
                e.splits.push_back(SplitRecord{t, nd, static_cast<std::size_t>(chosen), c.gain, c.threshold});
                split_slot.resize(tree.nodes.size(), -1);
                split_slot[nd] = 1;
                next.push_back(static_cast<std::size_t>(left_id));
                next.push_back(static_cast<std::size_t>(left_id) + 1);
            }
            if (next.empty()) break;

            for (std::size_t r = 0; r < n; ++r) {
                const auto nd = static_cast<std::size_t>(node_of[r]);
                if (nd >= split_slot.size() || split_slot[nd] < 0) continue;
                const auto& node = tree.nodes[nd];
                const int child = train.column(static_cast<std::size_t>(node.feature)).values[r] < node.split_value
                                      ? node.left
                                      : node.right;
                node_of[r] = child;
                auto& st = stats[static_cast<std::size_t>(child)];
                st.g += gh[r].g;
                st.h += gh[r].h;
                ++st.n;
            }
            for (auto c : next) tree.nodes[c].n_rows = stats[c].n;
            frontier = std::move(next);
        }

        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            if (tree.nodes[i].is_leaf()) tree.nodes[i].weight = leaf_weight(stats[i].g, stats[i].h, cfg.reg_lambda);
        }
        for (std::size_t r = 0; r < n; ++r) {
            margins[r] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(node_of[r])].weight;
        }
        e.train_loss.push_back(log_loss(margins, labels));
        if (!valid_margins.empty()) {
            add_tree_margins(tree, cfg.learning_rate, valid_cols, valid_margins);
            e.valid_loss.push_back(log_loss(valid_margins, valid->labels()));
        }
        e.trees.push_back(std::move(tree));
    }
    return e;
}

std::vector<double> predict_margin(const TreeEnsemble& e, const Dataset& d, std::size_t n_trees) {
    const auto cols = resolve_columns(e, d, true);
    std::vector<double> margins(d.n_rows(), e.base_score);
    const std::size_t limit = std::min(n_trees, e.trees.size());
    for (std::size_t t = 0; t < limit; ++t) add_tree_margins(e.trees[t], e.learning_rate, cols, margins);
    return margins;
}

std::vector<double> predict_margin(const TreeEnsemble& e, const Dataset& d) {
    return predict_margin(e, d, e.trees.size());
}

std::vector<double> feature_importance(const TreeEnsemble& e) {
    std::vector<double> sum(e.feature_names.size(), 0.0);
    std::vector<std::size_t> count(e.feature_names.size(), 0);
    for (const auto& s : e.splits) {
        sum[s.feature] += s.gain;
        ++count[s.feature];
    }
    for (std::size_t f = 0; f < sum.size(); ++f) {
        if (count[f] > 0) sum[f] /= static_cast<double>(count[f]);
    }
    return sum;
}

void dump(const TreeEnsemble& e, std::ostream& out) {
    out << "base_score=" << e.base_score << " learning_rate=" << e.learning_rate << '\n';
    for (std::size_t t = 0; t < e.trees.size(); ++t) {
        out << "tree " << t << '\n';
        const auto& nodes = e.trees[t].nodes;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& nd = nodes[i];
            out << "  node " << i << " depth=" << nd.depth << " rows=" << nd.n_rows;
            if (nd.is_leaf()) {
                out << " leaf weight=" << nd.weight << '\n';
            } else {
                out << " feature=" << e.feature_names[static_cast<std::size_t>(nd.feature)]
                    << " threshold=" << nd.split_value << " gain=" << nd.gain << " left=" << nd.left
                    << " right=" << nd.right << '\n';
            }
        }
    }
}

}  // namespace safe::gbdt
