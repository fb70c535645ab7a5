#include "safe/operators.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "safe/parallel.hpp"

namespace safe::ops {

double Operator::apply(std::span<const double> args) const {
    const double v = fn.index() == 0 ? std::get<UnaryFn>(fn)(args[0]) : std::get<BinaryFn>(fn)(args[0], args[1]);
    return std::isfinite(v) ? v : 0.0;
}

void OperatorRegistry::add(Operator op) {
    if (op.name.empty()) throw PlanError("operator name must not be empty");
    if (find(op.name)) throw PlanError("operator '" + op.name + "' registered twice");
    ops_.push_back(std::move(op));
}

const Operator* OperatorRegistry::find(std::string_view name) const {
    for (const auto& op : ops_) {
        if (op.name == name) return &op;
    }
    return nullptr;
}

const Operator& OperatorRegistry::at(std::string_view name) const {
    if (const auto* op = find(name)) return *op;
    throw PlanError("unknown operator '" + std::string(name) + "'");
}

std::set<std::string> OperatorRegistry::default_enabled() const {
    std::set<std::string> out;
    for (const auto& op : ops_) {
        if (op.enabled_by_default) out.insert(op.name);
    }
    return out;
}

std::map<std::size_t, std::size_t> OperatorRegistry::arity_counts(const std::set<std::string>& enabled) const {
    std::map<std::size_t, std::size_t> out;
    for (const auto& op : ops_) {
        if (enabled.contains(op.name)) ++out[op.arity()];
    }
    return out;
}

namespace {

double guarded_div(double num, double den) { return std::abs(den) < kDivisionGuard ? 0.0 : num / den; }

OperatorRegistry make_default_registry() {
    OperatorRegistry r;
    r.add({"add", true, true, BinaryFn{[](double a, double b) { return a + b; }}});
    r.add({"mul", true, true, BinaryFn{[](double a, double b) { return a * b; }}});
    r.add({"sub", false, true, BinaryFn{[](double a, double b) { return a - b; }}});
    r.add({"rsub", false, true, BinaryFn{[](double a, double b) { return b - a; }}});
    r.add({"div", false, true, BinaryFn{[](double a, double b) { return guarded_div(a, b); }}});
    r.add({"rdiv", false, true, BinaryFn{[](double a, double b) { return guarded_div(b, a); }}});
    r.add({"log1p_abs", false, false, UnaryFn{[](double x) { return std::log1p(std::abs(x)); }}});
    r.add({"square", false, false, UnaryFn{[](double x) { return x * x; }}});
    r.add({"sqrt_abs", false, false, UnaryFn{[](double x) { return std::sqrt(std::abs(x)); }}});
    r.add({"sigmoid", false, false, UnaryFn{[](double x) {
               return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
           }}});
    r.add({"tanh", false, false, UnaryFn{[](double x) { return std::tanh(x); }}});
    r.add({"round", false, false, UnaryFn{[](double x) { return std::round(x); }}});
    return r;
}

bool needs_escape(char c) { return c == '(' || c == ')' || c == ',' || c == '\\'; }

}  // namespace

const OperatorRegistry& default_registry() {
    static const OperatorRegistry registry = make_default_registry();
    return registry;
}

std::string escape_name(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (needs_escape(c)) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string unescape_name(std::string_view escaped) {
    std::string out;
    out.reserve(escaped.size());
    for (std::size_t i = 0; i < escaped.size(); ++i) {
        if (escaped[i] == '\\' && i + 1 < escaped.size()) ++i;
        out.push_back(escaped[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// FeatureDef

FeatureDef FeatureDef::base(std::string name) {
    if (name.empty()) throw PlanError("base feature name must not be empty");
    auto n = std::make_shared<Node>();
    n->canonical = escape_name(name);
    n->base = std::move(name);
    return FeatureDef(std::move(n));
}

FeatureDef FeatureDef::derived(std::string op, std::vector<FeatureDef> parents) {
    if (op.empty()) throw PlanError("operator name must not be empty");
    if (parents.empty()) throw PlanError("derived feature '" + op + "' needs at least one parent");
    auto n = std::make_shared<Node>();
    n->canonical = op + "(";
    for (std::size_t i = 0; i < parents.size(); ++i) {
        if (i) n->canonical += ',';
        n->canonical += parents[i].canonical_name();
        n->depth = std::max(n->depth, parents[i].depth() + 1);
    }
    n->canonical += ')';
    n->op = std::move(op);
    n->parents = std::move(parents);
    return FeatureDef(std::move(n));
}

void FeatureDef::collect_base_names(std::set<std::string>& out) const {
    if (is_base()) {
        out.insert(base_name());
        return;
    }
    for (const auto& p : parents()) p.collect_base_names(out);
}

void FeatureDef::collect_operators(std::set<std::string>& out) const {
    if (is_base()) return;
    out.insert(op());
    for (const auto& p : parents()) p.collect_operators(out);
}

// ---------------------------------------------------------------------------
// TransformPlan

std::vector<std::string> TransformPlan::names() const {
    std::vector<std::string> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.column_name());
    return out;
}

std::set<std::string> TransformPlan::base_names() const {
    std::set<std::string> out;
    for (const auto& f : features) f.collect_base_names(out);
    return out;
}

std::set<std::string> TransformPlan::operators_used() const {
    std::set<std::string> out;
    for (const auto& f : features) f.collect_operators(out);
    return out;
}

std::size_t TransformPlan::derived_count() const {
    return static_cast<std::size_t>(
        std::count_if(features.begin(), features.end(), [](const FeatureDef& f) { return !f.is_base(); }));
}

namespace {

void check_def(const FeatureDef& def, const OperatorRegistry& registry) {
    if (def.is_base()) return;
    const auto& op = registry.at(def.op());
    if (op.arity() != def.parents().size()) {
        throw PlanError("operator '" + def.op() + "' takes " + std::to_string(op.arity()) + " arguments, got " +
                        std::to_string(def.parents().size()));
    }
    for (const auto& p : def.parents()) check_def(p, registry);
}

}  // namespace

void TransformPlan::validate(const OperatorRegistry& registry) const {
    if (version != kVersion) throw PlanError("unsupported plan version " + std::to_string(version));
    std::set<std::string> seen;
    for (const auto& f : features) {
        if (!seen.insert(f.canonical_name()).second) {
            throw PlanError("duplicate feature '" + f.canonical_name() + "'");
        }
        check_def(f, registry);
    }
}

TransformPlan identity_plan(const std::vector<std::string>& base_names) {
    TransformPlan plan;
    for (const auto& n : base_names) plan.features.push_back(FeatureDef::base(n));
    return plan;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<FeatureDef> plan_generation(const std::vector<combiner::FeatureCombination>& combos,
                                        std::span<const FeatureDef> parent_defs,
                                        const OperatorRegistry& registry,
                                        const std::set<std::string>& enabled,
                                        const std::set<std::string>& existing) {
    std::set<std::string> taken = existing;
    std::vector<FeatureDef> out;
    for (const auto& combo : combos) {
        std::vector<FeatureDef> parents;
        for (auto f : combo.features) parents.push_back(parent_defs[f]);
        std::sort(parents.begin(), parents.end(), [](const FeatureDef& a, const FeatureDef& b) {
            return a.canonical_name() < b.canonical_name();
        });
        for (const auto& op : registry.all()) {
            if (!enabled.contains(op.name) || op.arity() != combo.arity()) continue;
            auto def = FeatureDef::derived(op.name, parents);
            if (taken.insert(def.canonical_name()).second) out.push_back(std::move(def));
        }
    }
    return out;
}

std::vector<double> apply_operator(const Operator& op, std::span<const std::span<const double>> parents) {
    if (parents.size() != op.arity()) throw PlanError("operator '" + op.name + "' arity mismatch");
    const std::size_t n = parents.front().size();
    std::vector<double> out(n);
    double args[2] = {0.0, 0.0};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t a = 0; a < parents.size(); ++a) args[a] = parents[a][r];
        out[r] = op.apply(std::span<const double>(args, parents.size()));
    }
    return out;
}

GeneratedFeatures generate(const Dataset& d, const std::vector<combiner::FeatureCombination>& combos,
                           const OperatorRegistry& registry, const std::set<std::string>& enabled) {
    std::vector<FeatureDef> bases;
    std::set<std::string> existing;
    for (const auto& c : d.columns()) {
        bases.push_back(FeatureDef::base(c.name));
        existing.insert(bases.back().canonical_name());
    }
    auto defs = plan_generation(combos, bases, registry, enabled, existing);

    std::vector<Column> cols(defs.size());
    parallel_for(defs.size(), [&](std::size_t i) {
        std::vector<std::span<const double>> parents;
        for (const auto& p : defs[i].parents()) parents.push_back(d.values(p.base_name()));
        cols[i] = Column{defs[i].column_name(), apply_operator(registry.at(defs[i].op()), parents)};
    });
    return GeneratedFeatures{d.with_columns(std::move(cols)), std::move(defs)};
}

// ---------------------------------------------------------------------------
// Application

CompiledPlan::CompiledPlan(const TransformPlan& plan, const OperatorRegistry& registry) {
    plan.validate(registry);
    std::unordered_map<std::string, std::size_t> base_slot;
    std::unordered_map<std::string, std::size_t> derived_slot;
    std::vector<Instr> pending;

    // Base inputs first so every instruction reads lower-numbered slots.
    for (const auto& name : plan.base_names()) {
        base_slot.emplace(name, inputs_.size());
        inputs_.push_back(name);
    }

    auto compile = [&](auto&& self, const FeatureDef& def) -> std::size_t {
        if (def.is_base()) return base_slot.at(def.base_name());
        if (auto it = derived_slot.find(def.canonical_name()); it != derived_slot.end()) return it->second;
        Instr ins;
        ins.op = &registry.at(def.op());
        for (const auto& p : def.parents()) ins.args.push_back(self(self, p));
        const std::size_t slot = inputs_.size() + instrs_.size();
        instrs_.push_back(std::move(ins));
        derived_slot.emplace(def.canonical_name(), slot);
        return slot;
    };
    for (const auto& f : plan.features) {
        outputs_.push_back(compile(compile, f));
        output_names_.push_back(f.column_name());
    }
}

void CompiledPlan::eval_row(std::span<const double> row, std::span<double> out) const {
    std::vector<double> slots(inputs_.size() + instrs_.size());
    std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(inputs_.size()), slots.begin());
    double args[2];
    for (std::size_t i = 0; i < instrs_.size(); ++i) {
        const auto& ins = instrs_[i];
        for (std::size_t a = 0; a < ins.args.size(); ++a) args[a] = slots[ins.args[a]];
        slots[inputs_.size() + i] = ins.op->apply(std::span<const double>(args, ins.args.size()));
    }
    for (std::size_t o = 0; o < outputs_.size(); ++o) out[o] = slots[outputs_[o]];
}

Dataset CompiledPlan::apply(const Dataset& d) const {
    std::vector<std::span<const double>> slots;
    slots.reserve(inputs_.size() + instrs_.size());
    for (const auto& name : inputs_) {
        auto idx = d.find(name);
        if (!idx) throw DataError("missing base feature '" + name + "'");
        slots.push_back(d.column(*idx).values);
    }
    std::vector<std::vector<double>> computed;
    computed.reserve(instrs_.size());
    for (const auto& ins : instrs_) {
        std::vector<std::span<const double>> parents;
        for (auto a : ins.args) parents.push_back(slots[a]);
        computed.push_back(apply_operator(*ins.op, parents));
        slots.push_back(computed.back());
    }
    std::vector<Column> cols;
    cols.reserve(outputs_.size());
    for (std::size_t o = 0; o < outputs_.size(); ++o) {
        const auto src = slots[outputs_[o]];
        cols.push_back(Column{output_names_[o], std::vector<double>(src.begin(), src.end())});
    }
    return d.with_columns(std::move(cols));
}

Dataset apply_plan(const TransformPlan& plan, const Dataset& d) { return CompiledPlan(plan).apply(d); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

constexpr const char* kFormat = "safe-feature-plan";

json to_json(const FeatureDef& def) {
    if (def.is_base()) return json{{"base", def.base_name()}};
    json args = json::array();
    for (const auto& p : def.parents()) args.push_back(to_json(p));
    return json{{"op", def.op()}, {"args", std::move(args)}};
}

FeatureDef from_json(const json& j, const OperatorRegistry& registry) {
    if (!j.is_object()) throw PlanError("feature expression must be an object");
    if (j.contains("base")) {
        if (!j.at("base").is_string()) throw PlanError("base name must be a string");
        return FeatureDef::base(j.at("base").get<std::string>());
    }
    if (!j.contains("op") || !j.at("op").is_string() || !j.contains("args") || !j.at("args").is_array()) {
        throw PlanError("feature expression needs either 'base' or 'op' with 'args'");
    }
    const auto name = j.at("op").get<std::string>();
    const auto& op = registry.at(name);
    if (j.at("args").size() != op.arity()) {
        throw PlanError("operator '" + name + "' takes " + std::to_string(op.arity()) + " arguments");
    }
    std::vector<FeatureDef> parents;
    for (const auto& a : j.at("args")) parents.push_back(from_json(a, registry));
    return FeatureDef::derived(name, std::move(parents));
}

}  // namespace

std::string serialize(const TransformPlan& plan) {
    json features = json::array();
    for (const auto& f : plan.features) {
        features.push_back(json{{"name", f.canonical_name()}, {"expr", to_json(f)}});
    }
    const auto used = plan.operators_used();
    json doc = {
        {"format", kFormat},
        {"version", plan.version},
        {"operators", std::vector<std::string>(used.begin(), used.end())},
        {"provenance",
         {{"iterations", plan.provenance.iterations}, {"config_digest", plan.provenance.config_digest}}},
        {"features", std::move(features)},
    };
    return doc.dump(2) + "\n";
}

TransformPlan deserialize(std::string_view text, const OperatorRegistry& registry) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw PlanError(std::string("malformed plan document: ") + e.what());
    }
    try {
        if (!doc.is_object() || doc.value("format", "") != kFormat) {
            throw PlanError("malformed plan document: missing format tag");
        }
        TransformPlan plan;
        plan.version = doc.at("version").get<int>();
        if (plan.version != TransformPlan::kVersion) {
            throw PlanError("plan version " + std::to_string(plan.version) + " is not supported (expected " +
                            std::to_string(TransformPlan::kVersion) + ")");
        }
        std::set<std::string> declared;
        for (const auto& name : doc.at("operators")) {
            declared.insert(name.get<std::string>());
            registry.at(name.get<std::string>());
        }
        if (doc.contains("provenance")) {
            const auto& p = doc.at("provenance");
            plan.provenance.iterations = p.value("iterations", std::size_t{0});
            plan.provenance.config_digest = p.value("config_digest", std::string{});
        }
        for (const auto& f : doc.at("features")) {
            auto def = from_json(f.at("expr"), registry);
            if (f.contains("name") && f.at("name").get<std::string>() != def.canonical_name()) {
                throw PlanError("feature name '" + f.at("name").get<std::string>() +
                                "' does not match its expression '" + def.canonical_name() + "'");
            }
            plan.features.push_back(std::move(def));
        }
        for (const auto& op : plan.operators_used()) {
            if (!declared.contains(op)) throw PlanError("operator '" + op + "' is used but not declared");
        }
        plan.validate(registry);
        return plan;
    } catch (const json::exception& e) {
        throw PlanError(std::string("malformed plan document: ") + e.what());
    }
}

}  // namespace safe::ops
