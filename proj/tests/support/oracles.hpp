#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "safe/dataset.hpp"
#include "safe/gbdt.hpp"
#include "safe/selector.hpp"

/// Slow, definition-level reference computations used to check the library.
namespace safe::testing::oracle {

/// IV from scratch: sort, pick edges at ranks ceil(i*N/beta)-1, drop repeats
/// and the maximum, then place each row with a linear scan over edges.
inline double iv(std::span<const double> x, std::span<const std::uint8_t> y, std::size_t beta,
                 select::IvFormula formula) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    std::vector<double> edges;
    for (std::size_t i = 1; i < beta; ++i) {
        const auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(i * n) / static_cast<double>(beta))) - 1;
        const double e = s[rank];
        if (e == s.back()) continue;
        if (!edges.empty() && edges.back() == e) continue;
        edges.push_back(e);
    }
    const std::size_t bins = edges.size() + 1;
    std::vector<double> pos(bins, 0.0), neg(bins, 0.0);
    double np = 0, nn = 0;
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t b = 0;
        while (b < edges.size() && x[r] > edges[b]) ++b;
        if (y[r]) {
            pos[b] += 1;
            np += 1;
        } else {
            neg[b] += 1;
            nn += 1;
        }
    }
    double total = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double p = (pos[b] + 0.5) / (np + 0.5 * static_cast<double>(bins));
        const double q = (neg[b] + 0.5) / (nn + 0.5 * static_cast<double>(bins));
        total += formula == select::IvFormula::standard_log ? (p - q) * std::log(p / q) : (p - q) * (p / q);
    }
    return total;
}

/// Two-pass Pearson in extended precision.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<long double>(a.size());
    mb /= static_cast<long double>(b.size());
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return static_cast<double>(sab / std::sqrt(saa * sbb));
}

/// Gain ratio (bits) from an explicit cell x label contingency table.
inline double igr(std::span<const std::uint64_t> cells, std::span<const std::uint8_t> y) {
    std::map<std::uint64_t, std::pair<double, double>> table;
    double pos = 0;
    for (std::size_t r = 0; r < y.size(); ++r) {
        auto& c = table[cells[r]];
        (y[r] ? c.second : c.first) += 1;
        pos += y[r];
    }
    const double n = static_cast<double>(y.size());
    auto h2 = [](double a, double b) {
        double h = 0;
        for (double x : {a, b}) {
            const double p = x / (a + b);
            if (p > 0) h -= p * std::log2(p);
        }
        return h;
    };
    const double h = h2(pos, n - pos);
    double cond = 0, si = 0;
    for (const auto& [k, c] : table) {
        const double w = (c.first + c.second) / n;
        cond += w * h2(c.first, c.second);
        si -= w * std::log2(w);
    }
    if (si == 0) return 0;
    return (h - cond) / si;
}

struct RootSplit {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

/// Exhaustive depth-1 scan at the base score: every feature, every midpoint
/// between consecutive distinct values, sums recomputed over all rows.
inline RootSplit root_split(const Dataset& d, double lambda) {
    const auto y = d.labels();
    const double n = static_cast<double>(d.n_rows());
    const double p = static_cast<double>(d.count_positive()) / n;
    RootSplit best;
    for (std::size_t f = 0; f < d.n_features(); ++f) {
        std::vector<double> vals = d.column(f).values;
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 1; i < vals.size(); ++i) {
            double thr = (vals[i - 1] + vals[i]) / 2.0;
            if (!(thr > vals[i - 1])) thr = vals[i];
            double gl = 0, hl = 0, gr = 0, hr = 0;
            for (std::size_t r = 0; r < d.n_rows(); ++r) {
                const double g = p - y[r];
                const double h = p * (1 - p);
                if (d.column(f).values[r] < thr) {
                    gl += g;
                    hl += h;
                } else {
                    gr += g;
                    hr += h;
                }
            }
            const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                                       (gl + gr) * (gl + gr) / (hl + hr + lambda));
            if (gain > best.gain + 1e-12) best = RootSplit{f, thr, gain};
        }
    }
    return best;
}

struct GainCheck {
    std::size_t checked = 0;
    double max_error = 0.0;  // relative to max(1, |gain|)
};

/// Recomputes every recorded split gain from the rows that reach the node,
/// using margins after the preceding trees.
inline GainCheck recorded_gains(const gbdt::TreeEnsemble& e, const Dataset& d, const gbdt::GbdtConfig& cfg) {
    GainCheck out;
    const auto y = d.labels();
    for (std::size_t t = 0; t < e.trees.size(); ++t) {
        const auto margin = gbdt::predict_margin(e, d, t);
        const auto& tree = e.trees[t];
        for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
            const auto& node = tree.nodes[n];
            if (node.is_leaf()) continue;
            double g = 0, h = 0, gl = 0, hl = 0;
            for (std::size_t r = 0; r < d.n_rows(); ++r) {
                std::size_t cur = 0;
                while (cur != n && !tree.nodes[cur].is_leaf()) {
                    const auto& c = tree.nodes[cur];
                    cur = static_cast<std::size_t>(
                        d.column(static_cast<std::size_t>(c.feature)).values[r] < c.split_value ? c.left : c.right);
                }
                if (cur != n) continue;
                const double p = 1.0 / (1.0 + std::exp(-margin[r]));
                g += p - y[r];
                h += p * (1 - p);
                if (d.column(static_cast<std::size_t>(node.feature)).values[r] < node.split_value) {
                    gl += p - y[r];
                    hl += p * (1 - p);
                }
            }
            const double gr = g - gl, hr = h - hl;
            const double lam = cfg.reg_lambda;
            const double expected =
                0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)) - cfg.min_gain;
            out.max_error =
                std::max(out.max_error, std::abs(node.gain - expected) / std::max(1.0, std::abs(expected)));
            ++out.checked;
        }
    }
    return out;
}

}  // namespace safe::testing::oracle
