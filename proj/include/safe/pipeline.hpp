#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "safe/combiner.hpp"
#include "safe/dataset.hpp"
#include "safe/gbdt.hpp"
#include "safe/operators.hpp"
#include "safe/selector.hpp"

namespace safe::pipeline {

using BigInt = boost::multiprecision::cpp_int;

/// How feature combinations are chosen each iteration. Generation and the
/// selection cascade are shared by all modes.
enum class Mode {
    safe,  // top-gamma combinations from tree paths, ranked by gain ratio
    rand,  // gamma distinct pairs drawn uniformly from all features
    imp,   // gamma distinct pairs drawn from the ensemble's split features
};

const char* to_string(Mode m);
Mode parse_mode(std::string_view s);

struct SafeConfig {
    std::size_t n_iter = 1;
    std::optional<double> time_budget_secs;
    /// Combination budget; unset means 2 x the number of original features.
    std::optional<std::size_t> gamma;
    gbdt::GbdtConfig gbdt;
    select::SelectorConfig selector;
    std::set<std::string> enabled_operators = ops::default_registry().default_enabled();
    std::uint64_t seed = 0;
    Mode mode = Mode::safe;
    std::size_t max_arity = 2;
    combiner::ComboScore combo_score = combiner::ComboScore::gain_ratio;

    void validate(const ops::OperatorRegistry& registry = ops::default_registry()) const;
    /// Stable text form of every field; hashed into the plan provenance.
    std::string describe() const;
    std::string digest() const;
};

struct IterationStats {
    std::size_t iteration = 0;
    std::size_t base_features = 0;
    std::size_t paths = 0;                  // k
    std::size_t combinations = 0;           // enumerated (or drawable pairs)
    std::size_t selected_combinations = 0;  // after top-gamma / sampling
    std::size_t generated = 0;
    std::size_t candidates = 0;
    std::size_t after_iv = 0;
    std::size_t after_redundancy = 0;
    std::size_t after_rank = 0;
    std::optional<double> valid_auc;
    double seconds = 0.0;
};

struct IterationTrace {
    std::vector<IterationStats> iterations;
    bool fallback = false;
    std::string warning;

    /// One `key=value` line per iteration, then a summary line.
    void write(std::ostream& out) const;
};

struct RunResult {
    ops::TransformPlan plan;
    select::SelectionReport report;
    IterationTrace trace;
    /// Final kept columns on the training rows, as computed during the run.
    Dataset train_features;
};

RunResult run(const Dataset& train, const Dataset& valid, const SafeConfig& cfg,
              const ops::OperatorRegistry& registry = ops::default_registry());

/// run() with cfg.mode forced to rand or imp.
RunResult run_baseline(const Dataset& train, const Dataset& valid, const SafeConfig& cfg,
                       const ops::OperatorRegistry& registry = ops::default_registry());

/// Ordered-subset count n! / (n-k)!, zero when k > n.
BigInt ordered_subsets(std::size_t n, std::size_t k);

/// Sum over arities i of A(M, i) * |O_i|.
BigInt count_search_space(std::size_t m, const std::map<std::size_t, std::size_t>& arity_counts);

/// Sum over paths and arities j of A(|p|, j) * |O_j|; duplicates across paths
/// are not subtracted.
BigInt count_reduced_search_space(const combiner::PathSet& paths,
                                  const std::map<std::size_t, std::size_t>& arity_counts);

/// Draws `gamma` distinct unordered pairs from `features` (all pairs when
/// gamma covers them), returned sorted.
std::vector<combiner::FeatureCombination> sample_pairs(const std::vector<std::size_t>& features, std::size_t gamma,
                                                       std::uint64_t seed);

}  // namespace safe::pipeline
