#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safe/dataset.hpp"
#include "safe/eval.hpp"
#include "safe/operators.hpp"
#include "safe/parallel.hpp"
#include "safe/pipeline.hpp"

namespace safe::cli {

namespace fs = std::filesystem;

namespace {

class CliError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitOptions {
    std::string train;
    std::string valid;
    std::string label;
    std::string output = ".";
    std::string missing = "reject";
    double valid_fraction = 0.0;

    std::string mode = "safe";
    std::uint64_t seed = 0;
    std::size_t n_iter = 1;
    double time_budget = -1.0;
    std::size_t gamma = 0;
    std::size_t max_arity = 2;
    std::string combo_score = "gain_ratio";
    std::string operators = "add,mul,sub,rsub,div,rdiv";

    double alpha = 0.1;
    std::size_t beta = 10;
    double theta = 0.8;
    std::size_t max_features = 0;
    std::string iv_formula = "standard_log";
    std::size_t pearson_row_cap = 100000;

    gbdt::GbdtConfig gbdt;
};

void add_gbdt_flags(CLI::App* app, gbdt::GbdtConfig& g) {
    app->add_option("--n-trees", g.n_trees, "Boosting rounds")->capture_default_str();
    app->add_option("--max-depth", g.max_depth, "Maximum tree depth")->capture_default_str();
    app->add_option("--learning-rate", g.learning_rate, "Shrinkage in (0, 1]")->capture_default_str();
    app->add_option("--reg-lambda", g.reg_lambda, "L2 penalty on leaf weights")->capture_default_str();
    app->add_option("--min-gain", g.min_gain, "Penalty subtracted from each split gain")->capture_default_str();
    app->add_option("--min-child-rows", g.min_child_rows, "Minimum rows per child")->capture_default_str();
}

void add_fit_flags(CLI::App* app, FitOptions& o, bool require_output) {
    app->add_option("--train", o.train, "Training CSV")->required();
    app->add_option("--label", o.label, "Label column (0/1)")->required();
    app->add_option("--valid", o.valid, "Validation CSV (optional)");
    app->add_option("--valid-fraction", o.valid_fraction,
                    "Fraction of --train held out for validation when --valid is absent")
        ->capture_default_str();
    auto* out = app->add_option("--output", o.output, "Output directory")->capture_default_str();
    if (require_output) out->required();
    app->add_option("--missing", o.missing, "Missing-value policy: reject or impute-mean")->capture_default_str();

    app->add_option("--mode", o.mode, "safe, rand or imp")->capture_default_str();
    app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
    app->add_option("--n-iter", o.n_iter, "Iterations")->capture_default_str();
    app->add_option("--time-budget", o.time_budget, "Seconds; checked between iterations (negative: none)")
        ->capture_default_str();
    app->add_option("--gamma", o.gamma, "Combinations carried into generation (0: 2M)")->capture_default_str();
    app->add_option("--max-arity", o.max_arity, "Largest combination size")->capture_default_str();
    app->add_option("--combo-score", o.combo_score, "gain_ratio or gain")->capture_default_str();
    app->add_option("--operators", o.operators, "Comma-separated enabled operators, or 'none'")
        ->capture_default_str();

    app->add_option("--alpha", o.alpha, "Information value threshold")->capture_default_str();
    app->add_option("--beta", o.beta, "Equal-frequency bins")->capture_default_str();
    app->add_option("--theta", o.theta, "Pearson redundancy threshold")->capture_default_str();
    app->add_option("--max-features", o.max_features, "Output cap (0: 2M)")->capture_default_str();
    app->add_option("--iv-formula", o.iv_formula, "standard_log or paper_literal")->capture_default_str();
    app->add_option("--pearson-row-cap", o.pearson_row_cap, "Rows sampled for correlations")->capture_default_str();
    add_gbdt_flags(app, o.gbdt);
}

MissingPolicy parse_missing(const std::string& s) {
    if (s == "reject") return MissingPolicy::reject;
    if (s == "impute-mean" || s == "impute-column-mean") return MissingPolicy::impute_mean;
    throw CliError("unknown missing-value policy '" + s + "'");
}

pipeline::SafeConfig to_config(const FitOptions& o) {
    pipeline::SafeConfig cfg;
    cfg.mode = pipeline::parse_mode(o.mode);
    cfg.seed = o.seed;
    cfg.n_iter = o.n_iter;
    if (o.time_budget >= 0.0) cfg.time_budget_secs = o.time_budget;
    if (o.gamma > 0) cfg.gamma = o.gamma;
    cfg.max_arity = o.max_arity;
    if (o.combo_score == "gain_ratio") {
        cfg.combo_score = combiner::ComboScore::gain_ratio;
    } else if (o.combo_score == "gain") {
        cfg.combo_score = combiner::ComboScore::gain;
    } else {
        throw CliError("unknown combo score '" + o.combo_score + "'");
    }
    cfg.enabled_operators.clear();
    if (o.operators != "none") {
        std::stringstream ss(o.operators);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (!name.empty()) cfg.enabled_operators.insert(name);
        }
    }
    cfg.selector.alpha = o.alpha;
    cfg.selector.beta = o.beta;
    cfg.selector.theta = o.theta;
    if (o.max_features > 0) cfg.selector.max_features = o.max_features;
    if (o.iv_formula == "standard_log") {
        cfg.selector.iv_formula = select::IvFormula::standard_log;
    } else if (o.iv_formula == "paper_literal") {
        cfg.selector.iv_formula = select::IvFormula::paper_literal;
    } else {
        throw CliError("unknown IV formula '" + o.iv_formula + "'");
    }
    cfg.selector.pearson_row_cap = o.pearson_row_cap;
    cfg.gbdt = o.gbdt;
    cfg.gbdt.seed = o.seed;
    cfg.validate();
    return cfg;
}

struct FitData {
    Dataset train;
    Dataset valid;
};

FitData load_fit_data(const FitOptions& o, std::uint64_t seed) {
    const auto policy = parse_missing(o.missing);
    auto full = load_csv(o.train, o.label, policy);
    FitData data;
    if (!o.valid.empty()) {
        data.train = std::move(full);
        data.valid = load_csv(o.valid, o.label, policy);
    } else if (o.valid_fraction > 0.0) {
        auto parts = split(full, SplitSpec{1.0 - o.valid_fraction, o.valid_fraction, 0.0, seed},
                           SplitRequirement{true, true, false});
        data.train = std::move(parts[0]);
        data.valid = std::move(parts[1]);
    } else {
        data.train = std::move(full);
        data.valid = data.train.take_rows({});
    }
    return data;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CliError("cannot write '" + path.string() + "'");
    f << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CliError("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int do_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
    const auto cfg = to_config(o);
    const auto data = load_fit_data(o, o.seed);
    const auto result = pipeline::run(data.train, data.valid, cfg);

    const fs::path dir(o.output);
    fs::create_directories(dir);
    write_text(dir / "psi.json", ops::serialize(result.plan));
    {
        std::ofstream f(dir / "selection_report.csv", std::ios::binary);
        result.report.write_csv(f);
    }
    {
        std::ofstream f(dir / "trace.txt", std::ios::binary);
        result.trace.write(f);
    }
    write_csv(result.train_features, dir / "train_features.csv", o.label);

    for (const auto& it : result.trace.iterations) {
        err << "iteration " << it.iteration << ": generated " << it.generated << ", kept " << it.after_rank << '\n';
    }
    if (!result.trace.warning.empty()) err << "warning: " << result.trace.warning << '\n';
    out << "features=" << result.plan.features.size() << " derived=" << result.plan.derived_count()
        << " psi=" << (dir / "psi.json").string() << '\n';
    return 0;
}

int do_transform(const std::string& psi_path, const std::string& input, const std::string& output,
                 const std::string& label, std::ostream& out) {
    const auto plan = ops::deserialize(read_text(psi_path));
    const ops::CompiledPlan compiled(plan);

    std::ifstream in(input);
    if (!in) throw CliError("cannot read '" + input + "'");
    std::string line;
    if (!std::getline(in, line)) throw CliError("'" + input + "' has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);

    std::vector<std::size_t> slot_cell;
    for (const auto& name : compiled.inputs()) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw CliError("missing base column '" + name + "' in '" + input + "'");
        slot_cell.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::optional<std::size_t> label_cell;
    if (!label.empty()) {
        auto it = std::find(header.begin(), header.end(), label);
        if (it == header.end()) throw CliError("unknown label column '" + label + "'");
        label_cell = static_cast<std::size_t>(it - header.begin());
    }

    const fs::path dir(output);
    fs::create_directories(dir);
    const auto out_path = dir / "transformed.csv";
    std::ofstream dst(out_path, std::ios::binary);
    if (!dst) throw CliError("cannot write '" + out_path.string() + "'");
    auto head = compiled.output_names();
    if (label_cell) head.push_back(label);
    for (std::size_t i = 0; i < head.size(); ++i) dst << (i ? "," : "") << csv_field(head[i]);
    dst << '\n';

    std::vector<double> row(compiled.inputs().size());
    std::vector<double> values(compiled.output_count());
    std::size_t r = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++r;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw CliError("row " + std::to_string(r) + ": expected " + std::to_string(header.size()) + " cells");
        }
        for (std::size_t s = 0; s < slot_cell.size(); ++s) {
            const auto& cell = cells[slot_cell[s]];
            double v = 0.0;
            const char* first = cell.data() + (!cell.empty() && cell.front() == '+' ? 1 : 0);
            auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw CliError("row " + std::to_string(r) + ", column '" + header[slot_cell[s]] +
                               "': missing or non-numeric value '" + cell + "'");
            }
            row[s] = v;
        }
        compiled.eval_row(row, values);
        for (std::size_t o = 0; o < values.size(); ++o) dst << (o ? "," : "") << format_real(values[o]);
        if (label_cell) dst << (values.empty() ? "" : ",") << cells[*label_cell];
        dst << '\n';
    }
    out << "rows=" << r << " columns=" << compiled.output_count() << " output=" << out_path.string() << '\n';
    return 0;
}

int do_evaluate(const std::string& train_path, const std::string& test_path, const std::string& label,
                const std::string& psi_path, const std::string& missing, const gbdt::GbdtConfig& g,
                std::ostream& out) {
    const auto policy = parse_missing(missing);
    const auto train = load_csv(train_path, label, policy);
    const auto test = load_csv(test_path, label, policy);
    if (!test.has_both_classes()) throw CliError("test labels contain a single class");
    const double orig = eval::holdout_auc(train, test, g);
    out << "ORIG auc=" << format_real(orig) << '\n';
    if (!psi_path.empty()) {
        const auto plan = ops::deserialize(read_text(psi_path));
        const double psi = eval::holdout_auc(ops::apply_plan(plan, train), ops::apply_plan(plan, test), g);
        out << "PSI auc=" << format_real(psi) << '\n';
    }
    return 0;
}

int do_stability(const FitOptions& o, std::size_t runs, std::ostream& out, std::ostream& err) {
    if (runs < 2) throw CliError("--runs must be at least 2");
    std::vector<std::vector<std::string>> names;
    std::size_t m = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        auto opts = o;
        opts.seed = o.seed + r;
        const auto cfg = to_config(opts);
        const auto data = load_fit_data(opts, opts.seed);
        m = data.train.n_features();
        const auto result = pipeline::run(data.train, data.valid, cfg);
        names.push_back(result.plan.names());
        err << "run " << r << ": " << result.plan.features.size() << " features\n";
    }
    out << "stability_jsd=" << format_real(eval::stability_jsd(names, m)) << '\n';
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Automatic feature engineering: tree-guided feature generation and selection"};
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: all cores)")->capture_default_str();

    FitOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "Learn a feature plan and write psi.json, report and trace");
    add_fit_flags(fit_cmd, fit, false);

    std::string psi, input, t_output = ".", t_label;
    auto* transform_cmd = app.add_subcommand("transform", "Apply a feature plan to a CSV, row by row");
    transform_cmd->add_option("--psi", psi, "Plan document")->required();
    transform_cmd->add_option("--input", input, "Input CSV")->required();
    transform_cmd->add_option("--output", t_output, "Output directory")->capture_default_str();
    transform_cmd->add_option("--label", t_label, "Label column to carry through (optional)");

    std::string e_train, e_test, e_label, e_psi, e_missing = "reject";
    gbdt::GbdtConfig e_gbdt;
    auto* eval_cmd = app.add_subcommand("evaluate", "Held-out AUC of original and plan features");
    eval_cmd->add_option("--train", e_train, "Training CSV")->required();
    eval_cmd->add_option("--test", e_test, "Test CSV")->required();
    eval_cmd->add_option("--label", e_label, "Label column (0/1)")->required();
    eval_cmd->add_option("--psi", e_psi, "Plan document (optional)");
    eval_cmd->add_option("--missing", e_missing, "Missing-value policy")->capture_default_str();
    add_gbdt_flags(eval_cmd, e_gbdt);

    FitOptions stab;
    std::size_t runs = 0;
    auto* stab_cmd = app.add_subcommand("stability", "JSD stability of plan features over repeated fits");
    add_fit_flags(stab_cmd, stab, false);
    stab_cmd->add_option("--runs", runs, "Number of fits T (>= 2)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }

    set_num_threads(threads);
    try {
        if (*fit_cmd) return do_fit(fit, out, err);
        if (*transform_cmd) return do_transform(psi, input, t_output, t_label, out);
        if (*eval_cmd) return do_evaluate(e_train, e_test, e_label, e_psi, e_missing, e_gbdt, out);
        if (*stab_cmd) return do_stability(stab, runs, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace safe::cli
