#include "safe/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "safe/parallel.hpp"

namespace safe::select {

void SelectorConfig::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    if (beta < 2) throw std::invalid_argument("beta must be at least 2");
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in (0, 1]");
    if (max_features && *max_features < 1) throw std::invalid_argument("max_features must be at least 1");
    if (pearson_row_cap < 2) throw std::invalid_argument("pearson_row_cap must be at least 2");
}

std::size_t SelectorConfig::resolve_max_features(std::size_t original_features) const {
    return max_features.value_or(std::max<std::size_t>(1, 2 * original_features));
}

std::vector<double> equal_frequency_bins(std::span<const double> column, std::size_t beta) {
    if (column.empty()) throw std::invalid_argument("cannot bin an empty column");
    if (beta < 2) return {};
    const std::size_t n = column.size();
    std::vector<double> v(column.begin(), column.end());
    const double max = *std::max_element(v.begin(), v.end());

    std::vector<double> edges;
    std::size_t lo = 0;
    std::size_t last_rank = n;
    for (std::size_t i = 1; i < beta; ++i) {
        const std::size_t rank = (i * n + beta - 1) / beta - 1;  // ceil(i*n/beta) - 1
        if (rank == last_rank) continue;
        if (rank >= lo) {
            std::nth_element(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(rank),
                             v.end());
            lo = rank + 1;
        }
        last_rank = rank;
        const double edge = v[rank];
        if (edge < max && (edges.empty() || edge > edges.back())) edges.push_back(edge);
    }
    return edges;
}

std::size_t bin_index(double v, std::span<const double> edges) {
    return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
}

double information_value(std::span<const double> column, std::span<const std::uint8_t> labels,
                         const SelectorConfig& cfg) {
    if (column.size() != labels.size()) throw std::invalid_argument("column and labels differ in length");
    const auto edges = equal_frequency_bins(column, cfg.beta);
    const std::size_t bins = edges.size() + 1;
    std::vector<double> pos(bins, 0.0), neg(bins, 0.0);
    double n_pos = 0.0, n_neg = 0.0;
    for (std::size_t r = 0; r < column.size(); ++r) {
        const auto b = bin_index(column[r], edges);
        if (labels[r]) {
            pos[b] += 1.0;
            n_pos += 1.0;
        } else {
            neg[b] += 1.0;
            n_neg += 1.0;
        }
    }
    if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("information value needs both label classes");

    const double smooth = 0.5;
    const double p_total = n_pos + smooth * static_cast<double>(bins);
    const double q_total = n_neg + smooth * static_cast<double>(bins);
    double iv = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double p = (pos[b] + smooth) / p_total;
        const double q = (neg[b] + smooth) / q_total;
        iv += cfg.iv_formula == IvFormula::standard_log ? (p - q) * std::log(p / q) : (p - q) * (p / q);
    }
    return iv;
}

PredictivePower classify_iv(double iv) {
    if (iv <= 0.02) return PredictivePower::useless;
    if (iv <= 0.1) return PredictivePower::weak;
    if (iv <= 0.3) return PredictivePower::medium;
    if (iv <= 0.5) return PredictivePower::strong;
    return PredictivePower::extremely_strong;
}

const char* to_string(PredictivePower p) {
    switch (p) {
        case PredictivePower::useless: return "Useless for prediction";
        case PredictivePower::weak: return "Weak predictor";
        case PredictivePower::medium: return "Medium predictor";
        case PredictivePower::strong: return "Strong predictor";
        case PredictivePower::extremely_strong: return "Extremely strong predictor";
    }
    return "";
}

IvFilterResult filter_by_iv(std::span<const std::span<const double>> features,
                            std::span<const std::uint8_t> labels, const SelectorConfig& cfg) {
    IvFilterResult out;
    out.iv.resize(features.size());
    parallel_for(features.size(), [&](std::size_t i) { out.iv[i] = information_value(features[i], labels, cfg); });
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (out.iv[i] > cfg.alpha) out.kept.push_back(i);
    }
    return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: needs at least 2 rows");
    const auto n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

namespace {

// Centered column scaled to unit norm, so correlations are dot products.
std::vector<double> unit_centered(std::span<const double> col, std::span<const std::size_t> rows) {
    std::vector<double> v;
    v.reserve(rows.empty() ? col.size() : rows.size());
    if (rows.empty()) {
        v.assign(col.begin(), col.end());
    } else {
        for (auto r : rows) v.push_back(col[r]);
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (auto& x : v) {
        x -= mean;
        ss += x * x;
    }
    if (ss == 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    const double norm = std::sqrt(ss);
    for (auto& x : v) x /= norm;
    return v;
}

}  // namespace

RedundancyResult remove_redundant(std::span<const std::span<const double>> features,
                                  std::span<const std::string> names, std::span<const double> ivs,
                                  const SelectorConfig& cfg) {
    if (names.size() != features.size() || ivs.size() != features.size()) {
        throw std::invalid_argument("remove_redundant: features, names and ivs differ in length");
    }
    RedundancyResult out;
    if (features.empty()) return out;

    std::vector<std::size_t> scan(features.size());
    std::iota(scan.begin(), scan.end(), 0);
    std::sort(scan.begin(), scan.end(), [&](std::size_t a, std::size_t b) {
        if (ivs[a] != ivs[b]) return ivs[a] > ivs[b];
        return names[a] < names[b];
    });

    const std::size_t n_rows = features.front().size();
    std::vector<std::size_t> rows;
    if (n_rows > cfg.pearson_row_cap) {
        rows = seeded_permutation(n_rows, cfg.seed);
        rows.resize(cfg.pearson_row_cap);
        std::sort(rows.begin(), rows.end());
    }
    std::vector<std::vector<double>> unit(features.size());
    parallel_for(features.size(), [&](std::size_t i) { unit[i] = unit_centered(features[i], rows); });

    std::vector<double> corr;
    for (auto cand : scan) {
        const auto& u = unit[cand];
        corr.assign(out.kept.size(), 0.0);
        auto correlate = [&](std::size_t k) {
            const auto& w = unit[out.kept[k]];
            double dot = 0.0;
            for (std::size_t r = 0; r < u.size(); ++r) dot += u[r] * w[r];
            corr[k] = std::clamp(dot, -1.0, 1.0);
        };
        if (out.kept.size() * u.size() >= (1u << 20)) {
            parallel_for(out.kept.size(), correlate);
        } else {
            for (std::size_t k = 0; k < out.kept.size(); ++k) correlate(k);
        }
        auto hit = std::find_if(corr.begin(), corr.end(), [&](double c) { return std::abs(c) > cfg.theta; });
        if (hit == corr.end()) {
            out.kept.push_back(cand);
        } else {
            out.pruned.push_back(PrunePair{out.kept[static_cast<std::size_t>(hit - corr.begin())], cand, *hit});
        }
    }
    return out;
}

RankResult rank_and_cap(const Dataset& features, const Dataset* valid, const gbdt::GbdtConfig& cfg,
                        std::size_t max_features) {
    if (features.n_features() == 0) throw std::invalid_argument("rank_and_cap needs at least one feature");
    RankResult out;
    out.model = gbdt::train(features, valid, cfg);
    out.importance = gbdt::feature_importance(out.model);
    out.order.resize(features.n_features());
    std::iota(out.order.begin(), out.order.end(), 0);
    std::sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
        if (out.importance[a] != out.importance[b]) return out.importance[a] > out.importance[b];
        return features.column(a).name < features.column(b).name;
    });
    if (out.order.size() > max_features) out.order.resize(max_features);
    return out;
}

void SelectionReport::write_csv(std::ostream& out) const {
    out << "feature,iv,importance,kept,dropped_by,stage\n";
    for (const auto& e : entries) {
        out << csv_field(e.feature) << ',' << format_real(e.iv) << ','
            << (e.importance ? format_real(*e.importance) : std::string()) << ',' << (e.kept ? 1 : 0) << ','
            << (e.dropped_by.empty() ? std::string() : csv_field(e.dropped_by)) << ',' << e.stage << '\n';
    }
}

}  // namespace safe::select
