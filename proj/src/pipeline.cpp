#include "safe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "safe/eval.hpp"
#include "safe/parallel.hpp"

namespace safe::pipeline {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::safe: return "safe";
        case Mode::rand: return "rand";
        case Mode::imp: return "imp";
    }
    return "";
}

Mode parse_mode(std::string_view s) {
    if (s == "safe") return Mode::safe;
    if (s == "rand") return Mode::rand;
    if (s == "imp") return Mode::imp;
    throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected safe, rand or imp)");
}

void SafeConfig::validate(const ops::OperatorRegistry& registry) const {
    if (n_iter < 1) throw std::invalid_argument("n_iter must be at least 1");
    if (gamma && *gamma < 1) throw std::invalid_argument("gamma must be at least 1");
    if (time_budget_secs && !(*time_budget_secs >= 0.0)) throw std::invalid_argument("time budget must be >= 0");
    if (max_arity < 1) throw std::invalid_argument("max_arity must be at least 1");
    for (const auto& name : enabled_operators) registry.at(name);
    gbdt.validate();
    selector.validate();
}

std::string SafeConfig::describe() const {
    std::ostringstream s;
    s << "mode=" << to_string(mode) << ";n_iter=" << n_iter << ";time_budget="
      << (time_budget_secs ? format_real(*time_budget_secs) : "none") << ";gamma="
      << (gamma ? std::to_string(*gamma) : "2M") << ";max_arity=" << max_arity
      << ";combo_score=" << (combo_score == combiner::ComboScore::gain_ratio ? "gain_ratio" : "gain")
      << ";seed=" << seed << ";operators=";
    for (const auto& op : enabled_operators) s << op << ',';
    s << ";gbdt=" << gbdt.n_trees << ',' << gbdt.max_depth << ',' << format_real(gbdt.learning_rate) << ','
      << format_real(gbdt.reg_lambda) << ',' << format_real(gbdt.min_gain) << ',' << gbdt.min_child_rows << ','
      << gbdt.seed << ";selector=" << format_real(selector.alpha) << ',' << selector.beta << ','
      << format_real(selector.theta) << ','
      << (selector.max_features ? std::to_string(*selector.max_features) : "2M") << ','
      << (selector.iv_formula == select::IvFormula::standard_log ? "standard_log" : "paper_literal") << ','
      << selector.pearson_row_cap << ',' << selector.seed;
    return s.str();
}

std::string SafeConfig::digest() const {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : describe()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void IterationTrace::write(std::ostream& out) const {
    for (const auto& it : iterations) {
        out << "iteration=" << it.iteration << " base_features=" << it.base_features << " paths=" << it.paths
            << " combinations=" << it.combinations << " selected_combinations=" << it.selected_combinations
            << " generated=" << it.generated << " candidates=" << it.candidates << " after_iv=" << it.after_iv
            << " after_redundancy=" << it.after_redundancy << " after_rank=" << it.after_rank
            << " valid_auc=" << (it.valid_auc ? format_real(*it.valid_auc) : "na") << '\n';
    }
    out << "iterations=" << iterations.size() << " fallback=" << (fallback ? 1 : 0);
    if (!warning.empty()) out << " warning=\"" << warning << '"';
    out << '\n';
}

// ---------------------------------------------------------------------------
// Search-space counters

BigInt ordered_subsets(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    BigInt out = 1;
    for (std::size_t i = 0; i < k; ++i) out *= static_cast<unsigned long long>(n - i);
    return out;
}

BigInt count_search_space(std::size_t m, const std::map<std::size_t, std::size_t>& arity_counts) {
    BigInt total = 0;
    for (const auto& [arity, count] : arity_counts) total += ordered_subsets(m, arity) * count;
    return total;
}

BigInt count_reduced_search_space(const combiner::PathSet& paths,
                                  const std::map<std::size_t, std::size_t>& arity_counts) {
    BigInt total = 0;
    for (const auto& p : paths.paths) total += count_search_space(p.size(), arity_counts);
    return total;
}

// ---------------------------------------------------------------------------
// Pair sampling

namespace {

std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw = gen();
    while (draw >= limit) draw = gen();
    return draw % bound;
}

std::pair<std::size_t, std::size_t> decode_pair(std::size_t k, std::size_t n) {
    std::size_t i = 0;
    while (k >= n - 1 - i) {
        k -= n - 1 - i;
        ++i;
    }
    return {i, i + 1 + k};
}

}  // namespace

std::vector<combiner::FeatureCombination> sample_pairs(const std::vector<std::size_t>& features, std::size_t gamma,
                                                       std::uint64_t seed) {
    std::vector<std::size_t> f = features;
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    const std::size_t n = f.size();
    const std::size_t total = n < 2 ? 0 : n * (n - 1) / 2;

    std::vector<std::size_t> picked;
    if (gamma >= total) {
        picked.resize(total);
        std::iota(picked.begin(), picked.end(), 0);
    } else {
        // Floyd's algorithm: gamma distinct indices from [0, total).
        std::mt19937_64 gen(seed);
        std::set<std::size_t> chosen;
        for (std::size_t j = total - gamma; j < total; ++j) {
            const auto t = static_cast<std::size_t>(bounded(gen, j + 1));
            if (!chosen.insert(t).second) chosen.insert(j);
        }
        picked.assign(chosen.begin(), chosen.end());
    }

    std::vector<combiner::FeatureCombination> out;
    out.reserve(picked.size());
    for (auto k : picked) {
        const auto [a, b] = decode_pair(k, n);
        combiner::FeatureCombination c;
        c.features = {f[a], f[b]};
        c.split_values.resize(2);
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Main loop

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Candidate {
    ops::FeatureDef def;
    double iv = 0.0;
    std::optional<std::vector<double>> values;  // kept only when IV passes
};

std::optional<double> valid_auc(const gbdt::TreeEnsemble& model, const std::vector<ops::FeatureDef>& defs,
                                const Dataset& valid, const ops::OperatorRegistry& registry) {
    if (valid.n_rows() == 0 || !valid.has_both_classes()) return std::nullopt;
    ops::TransformPlan plan;
    plan.features = defs;
    const auto data = ops::CompiledPlan(plan, registry).apply(valid);
    return eval::auc(gbdt::predict_margin(model, data), data.labels());
}

}  // namespace

RunResult run(const Dataset& train, const Dataset& valid, const SafeConfig& cfg,
              const ops::OperatorRegistry& registry) {
    cfg.validate(registry);
    if (train.n_rows() == 0) throw DataError("training set is empty");
    if (!train.has_both_classes()) throw DataError("training labels contain a single class");
    if (train.n_features() == 0) throw DataError("training set has no feature columns");
    if (valid.n_rows() > 0 && valid.names() != train.names()) {
        throw DataError("train and validation sets have different columns");
    }

    const auto start = Clock::now();
    const std::size_t m = train.n_features();
    const std::size_t gamma = cfg.gamma.value_or(2 * m);
    const std::size_t cap = cfg.selector.resolve_max_features(m);
    const auto labels = train.labels();

    std::vector<ops::FeatureDef> defs;
    for (const auto& c : train.columns()) defs.push_back(ops::FeatureDef::base(c.name));
    Dataset current = train;

    RunResult result;
    std::size_t iteration = 0;
    while (iteration < cfg.n_iter && (!cfg.time_budget_secs || seconds_since(start) < *cfg.time_budget_secs)) {
        const auto iter_start = Clock::now();
        IterationStats stats;
        stats.iteration = iteration;
        stats.base_features = current.n_features();

        // Combination selection.
        std::vector<combiner::FeatureCombination> chosen;
        const std::uint64_t iter_seed = cfg.seed + 0x9E3779B97F4A7C15ULL * iteration;
        if (cfg.mode == Mode::rand) {
            std::vector<std::size_t> all(current.n_features());
            std::iota(all.begin(), all.end(), 0);
            stats.combinations = all.size() * (all.size() - 1) / 2;
            chosen = sample_pairs(all, gamma, iter_seed);
        } else {
            const auto ensemble = gbdt::train(current, nullptr, cfg.gbdt);
            const auto paths = combiner::extract_paths(ensemble);
            stats.paths = paths.size();
            if (cfg.mode == Mode::safe) {
                auto combos = combiner::enumerate_combinations(paths, cfg.max_arity);
                stats.combinations = combos.size();
                combiner::score_combinations(current, combos, cfg.combo_score);
                chosen = combiner::top_gamma(std::move(combos), gamma);
            } else {
                std::set<std::size_t> split_features;
                for (const auto& s : ensemble.splits) split_features.insert(s.feature);
                std::vector<std::size_t> support(split_features.begin(), split_features.end());
                stats.combinations = support.size() < 2 ? 0 : support.size() * (support.size() - 1) / 2;
                chosen = sample_pairs(support, gamma, iter_seed);
            }
        }
        stats.selected_combinations = chosen.size();

        // Generation.
        std::set<std::string> existing;
        for (const auto& d : defs) existing.insert(d.canonical_name());
        auto generated = ops::plan_generation(chosen, defs, registry, cfg.enabled_operators, existing);
        stats.generated = generated.size();

        std::unordered_map<std::string, std::size_t> column_of;
        for (std::size_t i = 0; i < defs.size(); ++i) column_of.emplace(defs[i].canonical_name(), i);

        // Candidates: current base features, then generated ones. Generated
        // columns are evaluated and IV-scored in place; only IV survivors
        // are kept in memory.
        std::vector<Candidate> candidates;
        candidates.reserve(defs.size() + generated.size());
        for (const auto& d : defs) candidates.push_back(Candidate{d, 0.0, std::nullopt});
        for (auto& d : generated) candidates.push_back(Candidate{std::move(d), 0.0, std::nullopt});
        stats.candidates = candidates.size();

        parallel_for(candidates.size(), [&](std::size_t i) {
            auto& cand = candidates[i];
            if (i < defs.size()) {
                const auto& col = current.column(i).values;
                cand.iv = select::information_value(col, labels, cfg.selector);
                return;
            }
            std::vector<std::span<const double>> parents;
            for (const auto& p : cand.def.parents()) parents.push_back(current.column(column_of.at(p.canonical_name())).values);
            auto values = ops::apply_operator(registry.at(cand.def.op()), parents);
            cand.iv = select::information_value(values, labels, cfg.selector);
            if (cand.iv > cfg.selector.alpha) cand.values = std::move(values);
        });

        auto column_values = [&](std::size_t i) -> std::span<const double> {
            if (i < defs.size()) return current.column(i).values;
            return *candidates[i].values;
        };

        std::vector<std::size_t> after_iv;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (candidates[i].iv > cfg.selector.alpha) after_iv.push_back(i);
        }
        stats.after_iv = after_iv.size();

        select::SelectionReport report;
        for (const auto& c : candidates) {
            select::SelectionEntry e;
            e.feature = c.def.column_name();
            e.iv = c.iv;
            if (c.iv <= cfg.selector.alpha) e.stage = "iv";
            report.entries.push_back(std::move(e));
        }

        if (after_iv.empty()) {
            result.trace.fallback = true;
            result.trace.warning = "no candidate passed the information value filter; returning original features";
            stats.seconds = seconds_since(iter_start);
            result.trace.iterations.push_back(stats);
            result.report = std::move(report);
            defs.clear();
            for (const auto& c : train.columns()) defs.push_back(ops::FeatureDef::base(c.name));
            current = train;
            ++iteration;
            break;
        }

        std::vector<std::span<const double>> iv_cols;
        std::vector<std::string> iv_names;
        std::vector<double> iv_values;
        for (auto i : after_iv) {
            iv_cols.push_back(column_values(i));
            iv_names.push_back(candidates[i].def.column_name());
            iv_values.push_back(candidates[i].iv);
        }
        auto selector_cfg = cfg.selector;
        selector_cfg.seed = cfg.seed;
        const auto redundancy = select::remove_redundant(iv_cols, iv_names, iv_values, selector_cfg);
        stats.after_redundancy = redundancy.kept.size();
        for (const auto& pr : redundancy.pruned) {
            auto& e = report.entries[after_iv[pr.dropped]];
            e.stage = "redundancy";
            e.dropped_by = iv_names[pr.kept];
            e.correlation = pr.correlation;
        }

        // Ranking data in candidate order.
        std::vector<std::size_t> survivors;
        for (auto k : redundancy.kept) survivors.push_back(after_iv[k]);
        std::sort(survivors.begin(), survivors.end());
        std::vector<Column> rank_cols;
        for (auto i : survivors) {
            const auto v = column_values(i);
            rank_cols.push_back(Column{candidates[i].def.column_name(), std::vector<double>(v.begin(), v.end())});
        }
        const auto ranked = select::rank_and_cap(current.with_columns(std::move(rank_cols)), nullptr, cfg.gbdt, cap);
        stats.after_rank = ranked.order.size();

        for (std::size_t k = 0; k < survivors.size(); ++k) {
            report.entries[survivors[k]].importance = ranked.importance[k];
        }
        std::vector<ops::FeatureDef> next_defs;
        std::vector<Column> next_cols;
        std::vector<char> in_final(survivors.size(), 0);
        for (auto k : ranked.order) {
            const auto i = survivors[k];
            in_final[k] = 1;
            next_defs.push_back(candidates[i].def);
            const auto v = column_values(i);
            next_cols.push_back(Column{candidates[i].def.column_name(), std::vector<double>(v.begin(), v.end())});
            report.entries[i].kept = true;
            report.final_names.push_back(candidates[i].def.column_name());
        }
        for (std::size_t k = 0; k < survivors.size(); ++k) {
            if (!in_final[k]) report.entries[survivors[k]].stage = "cap";
        }

        std::vector<ops::FeatureDef> model_defs;
        for (auto i : survivors) model_defs.push_back(candidates[i].def);
        stats.valid_auc = valid_auc(ranked.model, model_defs, valid, registry);

        defs = std::move(next_defs);
        current = current.with_columns(std::move(next_cols));
        result.report = std::move(report);
        stats.seconds = seconds_since(iter_start);
        result.trace.iterations.push_back(stats);
        ++iteration;
    }

    if (iteration == 0) {
        result.trace.warning = "time budget exhausted before the first iteration; returning original features";
    }
    result.plan.features = std::move(defs);
    result.plan.provenance.iterations = iteration;
    result.plan.provenance.config_digest = cfg.digest();
    result.train_features = std::move(current);
    return result;
}

RunResult run_baseline(const Dataset& train, const Dataset& valid, const SafeConfig& cfg,
                       const ops::OperatorRegistry& registry) {
    if (cfg.mode == Mode::safe) throw std::invalid_argument("run_baseline expects mode rand or imp");
    return run(train, valid, cfg, registry);
}

}  // namespace safe::pipeline
