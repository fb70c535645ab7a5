#include "safe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

namespace safe::eval {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of midranks of the positives.
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]]) {
                rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc needs both label classes");
    const auto p = static_cast<double>(n_pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

FeatureDistribution feature_distribution(const std::vector<std::vector<std::string>>& runs,
                                         std::size_t original_features) {
    FeatureDistribution d;
    d.runs = runs.size();
    d.original_features = original_features;
    std::map<std::string, std::size_t> counts;
    for (const auto& run : runs) {
        for (const auto& name : run) ++counts[name];
    }
    d.counts.assign(counts.begin(), counts.end());
    std::stable_sort(d.counts.begin(), d.counts.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return d;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    std::vector<double> r(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) r[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * (kl_divergence(p, r) + kl_divergence(q, r));
}

double stability_jsd(const FeatureDistribution& dist) {
    if (dist.runs < 2) throw std::invalid_argument("stability needs at least 2 runs");
    if (dist.counts.empty()) throw std::invalid_argument("stability needs at least one generated feature");

    const std::size_t ideal = std::min(dist.counts.size(), 2 * dist.original_features);
    double total = 0.0;
    for (const auto& c : dist.counts) total += static_cast<double>(c.second);

    std::vector<double> observed(dist.counts.size()), best(dist.counts.size(), 0.0);
    for (std::size_t i = 0; i < dist.counts.size(); ++i) {
        observed[i] = static_cast<double>(dist.counts[i].second) / total;
    }
    // Every ideal name carries count T, so the normalized mass is uniform.
    for (std::size_t i = 0; i < ideal; ++i) best[i] = 1.0 / static_cast<double>(ideal);
    return std::clamp(js_divergence(observed, best), 0.0, std::log(2.0));
}

double stability_jsd(const std::vector<std::vector<std::string>>& runs, std::size_t original_features) {
    return stability_jsd(feature_distribution(runs, original_features));
}

std::vector<ImportanceRow> importance_report(const Dataset& original, const ops::TransformPlan& plan,
                                             const gbdt::GbdtConfig& cfg) {
    const std::size_t m = original.n_features();
    ops::TransformPlan report_plan;
    for (const auto& c : original.columns()) report_plan.features.push_back(ops::FeatureDef::base(c.name));
    std::size_t added = 0;
    for (const auto& f : plan.features) {
        if (f.is_base() || added == m) continue;
        report_plan.features.push_back(f);
        ++added;
    }
    const auto data = ops::apply_plan(report_plan, original);
    const auto model = gbdt::train(data, nullptr, cfg);
    const auto imp = gbdt::feature_importance(model);

    std::vector<ImportanceRow> rows;
    for (std::size_t i = 0; i < report_plan.features.size(); ++i) {
        rows.push_back(ImportanceRow{report_plan.features[i].column_name(), !report_plan.features[i].is_base(), imp[i]});
    }
    return rows;
}

void write_importance_csv(const std::vector<ImportanceRow>& rows, std::ostream& out) {
    out << "feature,origin,importance\n";
    for (const auto& r : rows) {
        out << csv_field(r.feature) << ',' << (r.generated ? "generated" : "base") << ',' << format_real(r.importance)
            << '\n';
    }
}

LinearScorer LinearScorer::fit(const Dataset& train, double l2, std::size_t max_iter) {
    LinearScorer s;
    const std::size_t n = train.n_rows();
    const std::size_t m = train.n_features();
    if (n == 0 || !train.has_both_classes()) throw std::invalid_argument("linear scorer needs both label classes");
    s.names_ = train.names();
    s.mean_.resize(m);
    s.scale_.resize(m);

    Eigen::MatrixXd x(n, m + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < m; ++j) {
        const auto& col = train.column(j).values;
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        s.mean_[j] = mean;
        s.scale_[j] = sd > 0.0 ? sd : 1.0;
        for (std::size_t r = 0; r < n; ++r) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j + 1)) = (col[r] - mean) / s.scale_[j];
    }
    Eigen::VectorXd y(n);
    const auto labels = train.labels();
    for (std::size_t r = 0; r < n; ++r) y(static_cast<Eigen::Index>(r)) = labels[r];

    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m + 1));
    Eigen::MatrixXd penalty = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m + 1), static_cast<Eigen::Index>(m + 1)) * l2;
    penalty(0, 0) = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd margin = x * w;
        Eigen::VectorXd p(n), h(n);
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(n); ++r) {
            p(r) = gbdt::sigmoid(margin(r));
            h(r) = std::max(p(r) * (1.0 - p(r)), 1e-12);
        }
        const Eigen::VectorXd grad = x.transpose() * (p - y) + penalty * w;
        const Eigen::MatrixXd hess = x.transpose() * h.asDiagonal() * x + penalty +
                                     1e-9 * Eigen::MatrixXd::Identity(w.size(), w.size());
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        w -= step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    s.weights_.assign(w.data(), w.data() + w.size());
    return s;
}

std::vector<double> LinearScorer::score(const Dataset& d) const {
    std::vector<double> out(d.n_rows(), weights_[0]);
    for (std::size_t j = 0; j < names_.size(); ++j) {
        const auto col = d.values(names_[j]);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += weights_[j + 1] * (col[r] - mean_[j]) / scale_[j];
    }
    return out;
}

double holdout_auc(const Dataset& train, const Dataset& test, const gbdt::GbdtConfig& cfg) {
    const auto model = gbdt::train(train, nullptr, cfg);
    return auc(gbdt::predict_margin(model, test), test.labels());
}

}  // namespace safe::eval
