#include "safe/combiner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "safe/parallel.hpp"

namespace safe::combiner {

std::size_t FeatureCombination::cell_count() const {
    std::size_t cells = 1;
    for (const auto& v : split_values) cells *= v.size() + 1;
    return cells;
}

namespace {

using CanonicalPath = std::vector<std::pair<std::size_t, std::vector<double>>>;

CanonicalPath canonical(const Path& p) {
    CanonicalPath c;
    c.reserve(p.size());
    for (const auto& item : p) c.emplace_back(item.feature, item.split_values);
    std::sort(c.begin(), c.end());
    return c;
}

void walk(const gbdt::Tree& tree, std::size_t node, Path& route, std::set<CanonicalPath>& seen, PathSet& out) {
    const auto& nd = tree.nodes[node];
    if (nd.is_leaf()) return;

    const auto feature = static_cast<std::size_t>(nd.feature);
    auto it = std::find_if(route.begin(), route.end(), [&](const PathItem& i) { return i.feature == feature; });
    const bool added_feature = it == route.end();
    bool added_value = false;
    if (added_feature) {
        route.push_back(PathItem{feature, {nd.split_value}});
    } else {
        auto& vals = it->split_values;
        auto pos = std::lower_bound(vals.begin(), vals.end(), nd.split_value);
        if (pos == vals.end() || *pos != nd.split_value) {
            vals.insert(pos, nd.split_value);
            added_value = true;
        }
    }

    const bool leaf_parent = tree.nodes[static_cast<std::size_t>(nd.left)].is_leaf() ||
                             tree.nodes[static_cast<std::size_t>(nd.right)].is_leaf();
    if (leaf_parent && seen.insert(canonical(route)).second) out.paths.push_back(route);

    walk(tree, static_cast<std::size_t>(nd.left), route, seen, out);
    walk(tree, static_cast<std::size_t>(nd.right), route, seen, out);

    if (added_feature) {
        route.pop_back();
    } else if (added_value) {
        auto& vals = std::find_if(route.begin(), route.end(), [&](const PathItem& i) {
                         return i.feature == feature;
                     })->split_values;
        vals.erase(std::find(vals.begin(), vals.end(), nd.split_value));
    }
}

double entropy_bits(double pos, double total) {
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double k : {pos, total - pos}) {
        if (k > 0.0) {
            const double p = k / total;
            h -= p * std::log2(p);
        }
    }
    return h;
}

}  // namespace

PathSet extract_paths(const gbdt::TreeEnsemble& e) {
    PathSet out;
    std::set<CanonicalPath> seen;
    for (const auto& tree : e.trees) {
        if (tree.nodes.empty()) continue;
        Path route;
        walk(tree, 0, route, seen, out);
    }
    return out;
}

std::vector<FeatureCombination> enumerate_combinations(const PathSet& p, std::size_t max_arity) {
    std::map<std::vector<std::size_t>, std::vector<std::set<double>>> merged;
    for (const auto& path : p.paths) {
        const std::size_t k = path.size();
        const std::size_t top = std::min(max_arity, k);
        for (std::size_t q = 1; q <= top; ++q) {
            // Lexicographic walk over q-subsets of item indices.
            std::vector<std::size_t> pick(q);
            for (std::size_t i = 0; i < q; ++i) pick[i] = i;
            for (;;) {
                std::vector<std::pair<std::size_t, const std::vector<double>*>> items;
                for (auto i : pick) items.emplace_back(path[i].feature, &path[i].split_values);
                std::sort(items.begin(), items.end());
                std::vector<std::size_t> key;
                for (const auto& it : items) key.push_back(it.first);
                auto& sets = merged[key];
                sets.resize(q);
                for (std::size_t i = 0; i < q; ++i) sets[i].insert(items[i].second->begin(), items[i].second->end());

                std::size_t i = q;
                while (i > 0 && pick[i - 1] == k - q + (i - 1)) --i;
                if (i == 0) break;
                ++pick[i - 1];
                for (std::size_t j = i; j < q; ++j) pick[j] = pick[j - 1] + 1;
            }
        }
    }

    std::vector<FeatureCombination> out;
    out.reserve(merged.size());
    for (auto& [key, sets] : merged) {
        FeatureCombination c;
        c.features = key;
        for (auto& s : sets) c.split_values.emplace_back(s.begin(), s.end());
        out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FeatureCombination& a, const FeatureCombination& b) { return a.arity() < b.arity(); });
    return out;
}

std::vector<std::uint64_t> partition_cells(std::span<const std::span<const double>> columns,
                                           const FeatureCombination& c) {
    if (c.features.empty()) return {};
    const std::size_t n = columns[c.features.front()].size();
    std::vector<std::uint64_t> cells(n, 0);
    std::uint64_t radix = 1;
    for (std::size_t i = 0; i < c.features.size(); ++i) {
        const auto col = columns[c.features[i]];
        const auto& vals = c.split_values[i];
        for (std::size_t r = 0; r < n; ++r) {
            const auto interval =
                static_cast<std::uint64_t>(std::upper_bound(vals.begin(), vals.end(), col[r]) - vals.begin());
            cells[r] += interval * radix;
        }
        radix *= vals.size() + 1;
    }
    return cells;
}

std::vector<std::uint64_t> partition_cells(const Dataset& d, const FeatureCombination& c) {
    std::vector<std::span<const double>> cols(d.n_features());
    for (auto f : c.features) {
        if (f >= d.n_features()) throw DataError("combination references missing feature " + std::to_string(f));
        cols[f] = d.column(f).values;
    }
    if (c.features.empty()) return std::vector<std::uint64_t>(d.n_rows(), 0);
    return partition_cells(std::span<const std::span<const double>>(cols), c);
}

double information_gain_ratio(std::span<const std::uint64_t> cells, std::span<const std::uint8_t> labels,
                              ComboScore mode) {
    if (cells.size() != labels.size()) throw DataError("cells and labels differ in length");
    if (cells.empty()) return 0.0;

    std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> counts;  // (positives, rows)
    std::size_t pos = 0;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        auto& c = counts[cells[r]];
        c.first += labels[r];
        c.second += 1;
        pos += labels[r];
    }
    if (counts.size() < 2) return 0.0;

    // Sum cells in key order so the result does not depend on hash layout.
    std::vector<std::pair<std::uint64_t, std::pair<std::size_t, std::size_t>>> ordered(counts.begin(), counts.end());
    std::sort(ordered.begin(), ordered.end());

    const auto total = static_cast<double>(cells.size());
    const double h_y = entropy_bits(static_cast<double>(pos), total);
    double h_cond = 0.0;
    double split_info = 0.0;
    for (const auto& [cell, pc] : ordered) {
        const auto rows = static_cast<double>(pc.second);
        const double w = rows / total;
        h_cond += w * entropy_bits(static_cast<double>(pc.first), rows);
        split_info -= w * std::log2(w);
    }
    const double gain = std::max(0.0, h_y - h_cond);
    if (mode == ComboScore::gain) return gain;
    return split_info > 0.0 ? gain / split_info : 0.0;
}

void score_combinations(const Dataset& d, std::vector<FeatureCombination>& combos, ComboScore mode) {
    std::vector<std::span<const double>> cols(d.n_features());
    for (std::size_t f = 0; f < cols.size(); ++f) cols[f] = d.column(f).values;
    const std::span<const std::span<const double>> view(cols);
    parallel_for(combos.size(), [&](std::size_t i) {
        for (auto f : combos[i].features) {
            if (f >= cols.size()) throw DataError("combination references missing feature " + std::to_string(f));
        }
        const auto cells = partition_cells(view, combos[i]);
        combos[i].igr = information_gain_ratio(cells, d.labels(), mode);
    });
}

std::vector<FeatureCombination> top_gamma(std::vector<FeatureCombination> combos, std::size_t gamma) {
    std::sort(combos.begin(), combos.end(), [](const FeatureCombination& a, const FeatureCombination& b) {
        if (a.igr != b.igr) return a.igr > b.igr;
        if (a.arity() != b.arity()) return a.arity() < b.arity();
        return a.features < b.features;
    });
    if (combos.size() > gamma) combos.resize(gamma);
    return combos;
}

void write_combinations_csv(const std::vector<FeatureCombination>& combos,
                            const std::vector<std::string>& feature_names, std::ostream& out) {
    out << "combo,arity,igr\n";
    for (const auto& c : combos) {
        out << '"';
        for (std::size_t i = 0; i < c.features.size(); ++i) {
            if (i) out << '|';
            out << feature_names.at(c.features[i]);
        }
        out << "\"," << c.arity() << ',' << format_real(c.igr) << '\n';
    }
}

}  // namespace safe::combiner
