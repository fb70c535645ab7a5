#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "safe/combiner.hpp"
#include "safe/dataset.hpp"

namespace safe::ops {

class PlanError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using UnaryFn = double (*)(double);
using BinaryFn = double (*)(double, double);

/// Elementwise operator. Non-commutative operators are registered once per
/// argument order (sub and rsub, div and rdiv).
struct Operator {
    std::string name;
    bool commutative = false;
    bool enabled_by_default = true;
    std::variant<UnaryFn, BinaryFn> fn;

    std::size_t arity() const { return fn.index() == 0 ? 1 : 2; }
    /// Evaluates on one row. Non-finite results are mapped to 0.
    double apply(std::span<const double> args) const;
};

class OperatorRegistry {
public:
    void add(Operator op);
    const Operator* find(std::string_view name) const;
    const Operator& at(std::string_view name) const;
    const std::vector<Operator>& all() const { return ops_; }

    std::set<std::string> default_enabled() const;
    /// Number of enabled operators per arity.
    std::map<std::size_t, std::size_t> arity_counts(const std::set<std::string>& enabled) const;

private:
    std::vector<Operator> ops_;
};

/// Binary add, mul, sub, rsub, div, rdiv (enabled) and unary log1p_abs,
/// square, sqrt_abs, sigmoid, tanh, round (registered, disabled).
const OperatorRegistry& default_registry();

/// Denominators with magnitude below this divide to 0.
inline constexpr double kDivisionGuard = 1e-12;

/// Escapes `(`, `)`, `,` and `\` in a base column name.
std::string escape_name(std::string_view raw);
std::string unescape_name(std::string_view escaped);

/// Immutable expression over original columns: a base column or an operator
/// applied to parent definitions. Copies share structure.
class FeatureDef {
public:
    static FeatureDef base(std::string name);
    static FeatureDef derived(std::string op, std::vector<FeatureDef> parents);

    bool is_base() const { return node_->parents.empty() && node_->op.empty(); }
    /// Raw column name for base defs.
    const std::string& base_name() const { return node_->base; }
    const std::string& op() const { return node_->op; }
    const std::vector<FeatureDef>& parents() const { return node_->parents; }
    /// `op(arg1,arg2)` with escaped base names.
    const std::string& canonical_name() const { return node_->canonical; }
    /// Name used for the materialized column: the raw name for base defs,
    /// the canonical name otherwise.
    const std::string& column_name() const { return is_base() ? node_->base : node_->canonical; }
    std::size_t depth() const { return node_->depth; }

    void collect_base_names(std::set<std::string>& out) const;
    void collect_operators(std::set<std::string>& out) const;

    bool operator==(const FeatureDef& other) const { return canonical_name() == other.canonical_name(); }

private:
    struct Node {
        std::string base;
        std::string op;
        std::vector<FeatureDef> parents;
        std::string canonical;
        std::size_t depth = 0;
    };
    explicit FeatureDef(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

struct Provenance {
    std::size_t iterations = 0;
    std::string config_digest;

    bool operator==(const Provenance&) const = default;
};

/// The feature-generation function: output columns in order.
struct TransformPlan {
    static constexpr int kVersion = 1;

    std::vector<FeatureDef> features;
    int version = kVersion;
    Provenance provenance;

    std::vector<std::string> names() const;
    std::set<std::string> base_names() const;
    std::set<std::string> operators_used() const;
    std::size_t derived_count() const;
    /// Throws PlanError on duplicate canonical names or unknown operators.
    void validate(const OperatorRegistry& registry = default_registry()) const;

    bool operator==(const TransformPlan&) const = default;
};

TransformPlan identity_plan(const std::vector<std::string>& base_names);

/// Candidate definitions from combinations: for each combination (in order)
/// and each enabled operator of matching arity (in registry order), one
/// definition with parents sorted by canonical name. Names already in
/// `existing` or produced earlier are skipped. `parent_defs` maps feature id
/// to its definition.
std::vector<FeatureDef> plan_generation(const std::vector<combiner::FeatureCombination>& combos,
                                        std::span<const FeatureDef> parent_defs,
                                        const OperatorRegistry& registry,
                                        const std::set<std::string>& enabled,
                                        const std::set<std::string>& existing);

/// Applies `def`'s top-level operator to already materialized parent columns.
std::vector<double> apply_operator(const Operator& op, std::span<const std::span<const double>> parents);

struct GeneratedFeatures {
    Dataset columns;  // new columns only, labels carried over
    std::vector<FeatureDef> defs;
};

/// Materializes plan_generation over `d`, treating every column of `d` as a
/// base feature.
GeneratedFeatures generate(const Dataset& d, const std::vector<combiner::FeatureCombination>& combos,
                           const OperatorRegistry& registry, const std::set<std::string>& enabled);

/// Plan compiled to a flat instruction list with shared subexpressions
/// evaluated once. Usable column-wise or one row at a time.
class CompiledPlan {
public:
    CompiledPlan(const TransformPlan& plan, const OperatorRegistry& registry = default_registry());

    /// Base columns the plan reads, in input-slot order.
    const std::vector<std::string>& inputs() const { return inputs_; }
    std::size_t output_count() const { return outputs_.size(); }
    const std::vector<std::string>& output_names() const { return output_names_; }

    /// `row` holds one value per input slot; writes one value per output.
    void eval_row(std::span<const double> row, std::span<double> out) const;

    /// Throws DataError naming the first base column missing from `d`.
    Dataset apply(const Dataset& d) const;

private:
    struct Instr {
        const Operator* op = nullptr;
        std::vector<std::size_t> args;  // slot indices
    };
    std::vector<std::string> inputs_;
    std::vector<Instr> instrs_;          // slot inputs_.size() + i
    std::vector<std::size_t> outputs_;   // slot per output column
    std::vector<std::string> output_names_;
};

/// Output columns exactly in plan order; labels carried over.
Dataset apply_plan(const TransformPlan& plan, const Dataset& d);

std::string serialize(const TransformPlan& plan);
TransformPlan deserialize(std::string_view text, const OperatorRegistry& registry = default_registry());

}  // namespace safe::ops
