#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "safe/dataset.hpp"
#include "safe/gbdt.hpp"

namespace safe::combiner {

/// One distinct split feature on a root-to-leaf-parent route, with every
/// threshold it takes on that route (sorted, unique).
struct PathItem {
    std::size_t feature = 0;
    std::vector<double> split_values;

    bool operator==(const PathItem&) const = default;
};

/// Features in order of first appearance from the root.
using Path = std::vector<PathItem>;

struct PathSet {
    std::vector<Path> paths;

    std::size_t size() const { return paths.size(); }
    bool empty() const { return paths.empty(); }
};

struct FeatureCombination {
    std::vector<std::size_t> features;              // sorted ascending
    std::vector<std::vector<double>> split_values;  // parallel to features
    double igr = 0.0;

    std::size_t arity() const { return features.size(); }
    /// Product of (|V_i| + 1).
    std::size_t cell_count() const;
};

/// One path per leaf-parent node per tree; identical paths are kept once.
PathSet extract_paths(const gbdt::TreeEnsemble& e);

/// All subsets of size 1..max_arity of each path's features, merged across
/// paths by feature set (split values unioned). Sorted by arity, then
/// feature ids.
std::vector<FeatureCombination> enumerate_combinations(const PathSet& p, std::size_t max_arity);

/// Cell index per row. Per feature, the interval index is the number of split
/// values <= the row's value; cells combine intervals in mixed radix with the
/// first feature least significant. `columns` is indexed by feature id.
std::vector<std::uint64_t> partition_cells(std::span<const std::span<const double>> columns,
                                           const FeatureCombination& c);

/// Same, resolving feature ids against the dataset's column order.
std::vector<std::uint64_t> partition_cells(const Dataset& d, const FeatureCombination& c);

enum class ComboScore { gain_ratio, gain };

/// Information gain of the partition (bits), divided by its split info for
/// gain_ratio. A partition with a single non-empty cell scores 0.
double information_gain_ratio(std::span<const std::uint64_t> cells, std::span<const std::uint8_t> labels,
                              ComboScore mode = ComboScore::gain_ratio);

/// Fills in `igr` for every combination using the dataset's rows.
void score_combinations(const Dataset& d, std::vector<FeatureCombination>& combos,
                        ComboScore mode = ComboScore::gain_ratio);

/// Highest score first; ties by lower arity, then lexicographic feature ids.
std::vector<FeatureCombination> top_gamma(std::vector<FeatureCombination> combos, std::size_t gamma);

/// Debug listing as CSV: combo,arity,igr.
void write_combinations_csv(const std::vector<FeatureCombination>& combos,
                            const std::vector<std::string>& feature_names, std::ostream& out);

}  // namespace safe::combiner
