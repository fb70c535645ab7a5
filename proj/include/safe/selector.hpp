#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safe/dataset.hpp"
#include "safe/gbdt.hpp"

namespace safe::select {

enum class IvFormula {
    /// Sum of (p - q) * ln(p / q): the usual weight-of-evidence form.
    standard_log,
    /// Sum of (p - q) * (p / q), no logarithm. Can be negative.
    paper_literal,
};

struct SelectorConfig {
    double alpha = 0.1;  // IV threshold, strict
    std::size_t beta = 10;  // equal-frequency bins
    double theta = 0.8;  // |pearson| threshold
    /// Output cap; unset means 2 x the number of original features.
    std::optional<std::size_t> max_features;
    IvFormula iv_formula = IvFormula::standard_log;
    /// Rows used for correlations; taller inputs are subsampled (seeded).
    std::size_t pearson_row_cap = 100000;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t resolve_max_features(std::size_t original_features) const;
};

/// Quantile edges at ranks ceil(i*N/beta) - 1 of the sorted column, for
/// i = 1..beta-1. Repeated edges collapse and an edge equal to the column
/// maximum is dropped, so every bin is non-empty. A value v falls in bin
/// `number of edges < v` (v <= edge goes to the lower bin).
std::vector<double> equal_frequency_bins(std::span<const double> column, std::size_t beta);

std::size_t bin_index(double v, std::span<const double> edges);

/// Smoothed IV: each bin's class counts get +0.5 before normalizing.
double information_value(std::span<const double> column, std::span<const std::uint8_t> labels,
                         const SelectorConfig& cfg);

enum class PredictivePower { useless, weak, medium, strong, extremely_strong };

/// Rule-of-thumb band; each band includes its upper bound.
PredictivePower classify_iv(double iv);
const char* to_string(PredictivePower p);

struct IvFilterResult {
    std::vector<std::size_t> kept;  // input order
    std::vector<double> iv;         // per input feature
};

/// Keeps features with IV > alpha.
IvFilterResult filter_by_iv(std::span<const std::span<const double>> features,
                            std::span<const std::uint8_t> labels, const SelectorConfig& cfg);

/// Pearson correlation; 0 if either column is constant.
double pearson(std::span<const double> a, std::span<const double> b);

struct PrunePair {
    std::size_t kept = 0;
    std::size_t dropped = 0;
    double correlation = 0.0;
};

struct RedundancyResult {
    std::vector<std::size_t> kept;  // scan order: IV descending, ties by name
    std::vector<PrunePair> pruned;
};

/// Greedy scan by descending IV: a feature survives iff its |pearson| with
/// every already kept feature is <= theta. Each drop names the first kept
/// feature that exceeded theta.
RedundancyResult remove_redundant(std::span<const std::span<const double>> features,
                                  std::span<const std::string> names, std::span<const double> ivs,
                                  const SelectorConfig& cfg);

struct RankResult {
    std::vector<std::size_t> order;  // kept feature indices, best first
    std::vector<double> importance;  // per input feature
    gbdt::TreeEnsemble model;
};

/// Trains the ensemble on `features`, orders columns by average-gain
/// importance (ties by name) and keeps the first `max_features`.
RankResult rank_and_cap(const Dataset& features, const Dataset* valid, const gbdt::GbdtConfig& cfg,
                        std::size_t max_features);

struct SelectionEntry {
    std::string feature;
    double iv = 0.0;
    std::optional<double> importance;
    bool kept = false;
    /// "iv", "redundancy", "cap" or empty when kept.
    std::string stage;
    std::string dropped_by;
    std::optional<double> correlation;
};

struct SelectionReport {
    std::vector<SelectionEntry> entries;  // one per candidate, candidate order
    std::vector<std::string> final_names;

    /// feature,iv,importance,kept,dropped_by,stage
    void write_csv(std::ostream& out) const;
};

}  // namespace safe::select
