#pragma once

// Run configuration for the command-line driver: a JSON file selects a
// scenario (eigen / solve / branch / timemap / verify_suite), the problem
// data, scenario parameters, tolerance overrides, an output directory and
// an RNG seed. Parsing fills documented defaults, rejects unknown keys by
// name, and reports invariant breaches naming the offending field. Data
// fields c and h are either constants or tabulated node values from a CSV
// file -- there is deliberately no expression parser.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qge/eigenpairs.hpp"
#include "qge/errors.hpp"
#include "qge/grid.hpp"
#include "qge/problem.hpp"
#include "qge/solve.hpp"

namespace qge {

using json = nlohmann::ordered_json;

enum class Scenario { eigen, solve, branch, timemap, verify_suite };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::eigen: return "eigen";
        case Scenario::solve: return "solve";
        case Scenario::branch: return "branch";
        case Scenario::timemap: return "timemap";
        case Scenario::verify_suite: return "verify_suite";
    }
    return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
    if (s == "eigen") return Scenario::eigen;
    if (s == "solve") return Scenario::solve;
    if (s == "branch") return Scenario::branch;
    if (s == "timemap") return Scenario::timemap;
    if (s == "verify_suite") return Scenario::verify_suite;
    throw config_error("scenario: unknown scenario '" + s +
                       "' (expected eigen, solve, branch, timemap or verify_suite)");
}

/// A data field given either as a constant or as a CSV of node values
/// (the write_csv format: "index,x[,y],value", validated against the grid).
struct FieldConfig {
    double constant = 0.0;
    std::string csv; ///< empty = constant

    bool is_csv() const { return !csv.empty(); }

    GridFunction build(const Grid& grid, const std::filesystem::path& base_dir, const char* field) const {
        if (!is_csv()) return GridFunction(grid, constant);
        const std::filesystem::path p = std::filesystem::path(csv).is_absolute()
                                            ? std::filesystem::path(csv)
                                            : base_dir / csv;
        if (!std::filesystem::exists(p))
            throw config_error(std::string("problem.") + field + ": referenced file '" + p.string() +
                               "' does not exist");
        return read_csv(grid, p.string());
    }
};

struct ProblemConfig {
    Domain domain = Interval{1.0};
    int n = 511; ///< interior nodes per axis
    FieldConfig c{1.0, ""};
    FieldConfig h{0.0, ""};
    double mu = 1.0;

    Grid make_grid() const { return Grid(domain, n); }

    ProblemSpec build(const std::filesystem::path& base_dir) const {
        const Grid grid = make_grid();
        return ProblemSpec(grid, c.build(grid, base_dir, "c"), h.build(grid, base_dir, "h"), MuConstant{mu});
    }
};

/// Tolerance overrides; every entry must be positive.
struct ToleranceConfig {
    double solve_tol = 1e-10;       ///< Newton residual sup-norm target
    double eigen_tol = 1e-12;       ///< Rayleigh-quotient stagnation threshold
    double eigen_residual = 1e-8;   ///< absolute eigen-residual target
    double accept_residual = 1e-9;  ///< branch point re-verification bound
    double agree_tol = 1e-8;        ///< direct/transformed agreement bound (scaled)

    SolveOptions solve_options() const {
        SolveOptions o;
        o.tol = solve_tol;
        return o;
    }
    EigenOptions eigen_options() const {
        EigenOptions o;
        o.tol = eigen_tol;
        o.residual_target = eigen_residual;
        return o;
    }
};

struct EigenParams {
    std::optional<double> expect_value; ///< expected principal eigenvalue
    double expect_rel_tol = 1e-3;
    bool check_coercivity = false; ///< additionally require the coercivity margin > 0
};

struct SolveParams {
    std::optional<double> lambda;              ///< absolute reaction coefficient
    std::optional<double> lambda_factor_gamma1; ///< or a multiple of the computed principal eigenvalue
    int starts = 24;
    bool expect_exists = true;   ///< false inverts the assertions: absence is the expected outcome
    bool expect_second = false;  ///< require a distinct ordered second solution
    bool expect_nonpositive = false;       ///< require the primary solution <= 0
    bool expect_second_max_positive = false; ///< require max of the second solution > 0

    double resolve_lambda(double gamma1_value) const {
        if (lambda) return *lambda;
        return *lambda_factor_gamma1 * gamma1_value;
    }
};

enum class BranchMode { fold, pair, sweep_a, sweep_k, trichotomy };

inline const char* to_string(BranchMode m) {
    switch (m) {
        case BranchMode::fold: return "fold";
        case BranchMode::pair: return "pair";
        case BranchMode::sweep_a: return "sweep_a";
        case BranchMode::sweep_k: return "sweep_k";
        case BranchMode::trichotomy: return "trichotomy";
    }
    return "?";
}

struct TrichotomyExpect {
    double factor = 1.0;       ///< multiple of the principal eigenvalue
    std::string pattern;       ///< "positive" | "only_trivial" | "negative"
};

struct BranchParams {
    BranchMode mode = BranchMode::fold;

    // fold / sweep_a / sweep_k
    std::optional<double> lambda;
    std::optional<double> lambda_factor_gamma1;
    std::optional<double> lambda_factor_nu1; ///< sweep_k: multiple of the weighted eigenvalue
    double lambda_start_factor = 0.05;       ///< fold: continuation start as a multiple of gamma1
    double param_max = 0.0;                  ///< 0 = scenario default
    double past_fold_factor = 1.05;          ///< fold: nonexistence probe at this multiple of the fold
    bool expect_fold = true;
    bool expect_fold_below_gamma1 = false;
    bool expect_none_past_fold = false;
    bool expect_pair_at_half = false;  ///< sweep_k: ordered pair at half the fold parameter
    bool expect_none_at_double = false; ///< sweep_k: no solution at twice the fold parameter

    // pair
    std::vector<double> lambdas;       ///< pair: one ordered pair per value
    bool expect_ordered = true;
    bool expect_u1_nonpositive = false;
    bool expect_u2_max_positive = false;
    bool expect_u1_decreasing = false; ///< nodewise strict decrease along `lambdas`
    std::vector<double> blowup_lambdas; ///< optional decreasing sweep of the upper branch
    double blowup_band = 4.0;           ///< max/min bound on lambda * sup(u2)
    double blowup_min_spread = 0.10;    ///< allowed relative variation of min(u2)

    // trichotomy
    std::vector<double> lambda_factors; ///< multiples of gamma1 to classify
    std::vector<TrichotomyExpect> expect_patterns;
    int starts = 24;
};

struct CountExpect {
    std::optional<double> factor; ///< multiple of the case's reference time (T0 or T1)
    std::optional<double> T;      ///< or an absolute domain length
    int positive = 0;
    int negative = 0;
    int sign_changing = 0;
};

struct TimemapParams {
    double lambda = 1.0;
    // slope sweep
    double s_lo = -1.0;
    double s_hi = 10.0;
    int n_samples = 400;
    // launch-amplitude table
    double a_lo = 1e-4;
    double a_hi = 1e4;
    int table_n = 81;
    int profile_n = 0; ///< >0: emit one sampled trajectory CSV per root on that grid
    std::vector<CountExpect> expect_counts;
};

struct VerifyParams {
    std::vector<std::string> fixtures; ///< config paths, resolved against the config directory
};

using ScenarioParams = std::variant<EigenParams, SolveParams, BranchParams, TimemapParams, VerifyParams>;

struct RunConfig {
    Scenario scenario = Scenario::eigen;
    ProblemConfig problem;
    ScenarioParams params = EigenParams{};
    ToleranceConfig tolerances;
    std::string output_dir = "out";
    std::uint64_t seed = 20240816;
    std::filesystem::path base_dir = "."; ///< directory of the config file; resolves referenced paths

    json echo() const; // defined after the parser helpers below
};

namespace detail {

inline std::string json_type_name(const json& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

inline void reject_unknown_keys(const json& obj, const std::string& context,
                                std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
            throw config_error("unknown key '" + it.key() + "' in " + context);
    }
}

inline const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline double as_number(const json& v, const std::string& field) {
    if (!v.is_number()) throw config_error(field + ": expected a number, got " + json_type_name(v));
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw config_error(field + ": value must be finite");
    return x;
}

inline double get_number(const json& obj, const char* key, const std::string& context, double dflt) {
    const json* v = find(obj, key);
    return v ? as_number(*v, context + "." + key) : dflt;
}

inline long get_integer(const json& obj, const char* key, const std::string& context, long dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    const std::string field = context + "." + key;
    if (!v->is_number_integer()) throw config_error(field + ": expected an integer, got " + json_type_name(*v));
    return v->get<long>();
}

inline bool get_bool(const json& obj, const char* key, const std::string& context, bool dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean()) throw config_error(context + "." + key + ": expected a boolean, got " + json_type_name(*v));
    return v->get<bool>();
}

inline std::string get_string(const json& obj, const char* key, const std::string& context, const std::string& dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string()) throw config_error(context + "." + key + ": expected a string, got " + json_type_name(*v));
    return v->get<std::string>();
}

inline std::vector<double> get_number_list(const json& obj, const char* key, const std::string& context) {
    const json* v = find(obj, key);
    if (!v) return {};
    const std::string field = context + "." + key;
    if (!v->is_array()) throw config_error(field + ": expected an array, got " + json_type_name(*v));
    std::vector<double> out;
    out.reserve(v->size());
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

inline FieldConfig parse_field(const json& obj, const char* key, const std::string& context, double dflt) {
    const json* v = find(obj, key);
    if (!v) return FieldConfig{dflt, ""};
    const std::string field = context + "." + key;
    if (v->is_number()) return FieldConfig{as_number(*v, field), ""};
    if (v->is_object()) {
        reject_unknown_keys(*v, field, {"csv"});
        const json* csv = find(*v, "csv");
        if (!csv || !csv->is_string())
            throw config_error(field + ": tabulated data needs a 'csv' string entry");
        return FieldConfig{0.0, csv->get<std::string>()};
    }
    throw config_error(field + ": expected a number or {\"csv\": path}, got " + json_type_name(*v));
}

inline Domain parse_domain(const json& obj, const std::string& context) {
    const json* v = find(obj, "domain");
    if (!v) return Interval{1.0};
    const std::string field = context + ".domain";
    if (!v->is_object()) throw config_error(field + ": expected an object, got " + json_type_name(*v));
    const std::string kind = get_string(*v, "kind", field, "interval");
    if (kind == "interval") {
        reject_unknown_keys(*v, field, {"kind", "length"});
        const double length = get_number(*v, "length", field, 1.0);
        if (!(length > 0.0)) throw config_error(field + ".length: must be positive, got " + format_double(length));
        return Interval{length};
    }
    if (kind == "rectangle") {
        reject_unknown_keys(*v, field, {"kind", "lx", "ly"});
        const double lx = get_number(*v, "lx", field, 1.0);
        const double ly = get_number(*v, "ly", field, 1.0);
        if (!(lx > 0.0)) throw config_error(field + ".lx: must be positive, got " + format_double(lx));
        if (!(ly > 0.0)) throw config_error(field + ".ly: must be positive, got " + format_double(ly));
        return Rectangle{lx, ly};
    }
    throw config_error(field + ".kind: unknown domain kind '" + kind + "' (expected interval or rectangle)");
}

inline ProblemConfig parse_problem(const json& root) {
    ProblemConfig p;
    const json* v = find(root, "problem");
    if (!v) return p;
    if (!v->is_object()) throw config_error("problem: expected an object, got " + json_type_name(*v));
    reject_unknown_keys(*v, "problem", {"domain", "n", "c", "h", "mu"});
    p.domain = parse_domain(*v, "problem");
    const long n = get_integer(*v, "n", "problem", p.n);
    if (n < 3)
        throw config_error("problem.n: need at least 3 interior nodes per axis, got " + std::to_string(n));
    if (n > 100000) throw config_error("problem.n: " + std::to_string(n) + " nodes per axis is not supported");
    p.n = static_cast<int>(n);
    p.c = parse_field(*v, "c", "problem", 1.0);
    p.h = parse_field(*v, "h", "problem", 0.0);
    p.mu = get_number(*v, "mu", "problem", 1.0);
    if (!(p.mu > 0.0)) throw config_error("problem.mu: must be positive, got " + format_double(p.mu));
    return p;
}

inline ToleranceConfig parse_tolerances(const json& root) {
    ToleranceConfig t;
    const json* v = find(root, "tolerances");
    if (!v) return t;
    if (!v->is_object()) throw config_error("tolerances: expected an object, got " + json_type_name(*v));
    reject_unknown_keys(*v, "tolerances",
                        {"solve_tol", "eigen_tol", "eigen_residual", "accept_residual", "agree_tol"});
    t.solve_tol = get_number(*v, "solve_tol", "tolerances", t.solve_tol);
    t.eigen_tol = get_number(*v, "eigen_tol", "tolerances", t.eigen_tol);
    t.eigen_residual = get_number(*v, "eigen_residual", "tolerances", t.eigen_residual);
    t.accept_residual = get_number(*v, "accept_residual", "tolerances", t.accept_residual);
    t.agree_tol = get_number(*v, "agree_tol", "tolerances", t.agree_tol);
    const auto positive = [&](double x, const char* name) {
        if (!(x > 0.0))
            throw config_error(std::string("tolerances.") + name + ": must be positive, got " + format_double(x));
    };
    positive(t.solve_tol, "solve_tol");
    positive(t.eigen_tol, "eigen_tol");
    positive(t.eigen_residual, "eigen_residual");
    positive(t.accept_residual, "accept_residual");
    positive(t.agree_tol, "agree_tol");
    return t;
}

inline void require_single_lambda(const std::optional<double>& absolute, const std::optional<double>& factor,
                                  const std::string& context) {
    if (absolute && factor)
        throw config_error(context + ": give either lambda or lambda_factor_gamma1, not both");
    if (!absolute && !factor)
        throw config_error(context + ": one of lambda or lambda_factor_gamma1 is required");
}

inline EigenParams parse_eigen_params(const json& obj) {
    EigenParams p;
    reject_unknown_keys(obj, "params", {"expect_value", "expect_rel_tol", "check_coercivity"});
    if (const json* v = find(obj, "expect_value")) p.expect_value = as_number(*v, "params.expect_value");
    p.expect_rel_tol = get_number(obj, "expect_rel_tol", "params", p.expect_rel_tol);
    if (!(p.expect_rel_tol > 0.0)) throw config_error("params.expect_rel_tol: must be positive");
    p.check_coercivity = get_bool(obj, "check_coercivity", "params", p.check_coercivity);
    return p;
}

inline SolveParams parse_solve_params(const json& obj) {
    SolveParams p;
    reject_unknown_keys(obj, "params",
                        {"lambda", "lambda_factor_gamma1", "starts", "expect_exists", "expect_second",
                         "expect_nonpositive", "expect_second_max_positive"});
    if (const json* v = find(obj, "lambda")) p.lambda = as_number(*v, "params.lambda");
    if (const json* v = find(obj, "lambda_factor_gamma1"))
        p.lambda_factor_gamma1 = as_number(*v, "params.lambda_factor_gamma1");
    require_single_lambda(p.lambda, p.lambda_factor_gamma1, "params");
    const long starts = get_integer(obj, "starts", "params", p.starts);
    if (starts < 1 || starts > 10000) throw config_error("params.starts: must be in [1, 10000], got " + std::to_string(starts));
    p.starts = static_cast<int>(starts);
    p.expect_exists = get_bool(obj, "expect_exists", "params", p.expect_exists);
    p.expect_second = get_bool(obj, "expect_second", "params", p.expect_second);
    p.expect_nonpositive = get_bool(obj, "expect_nonpositive", "params", p.expect_nonpositive);
    p.expect_second_max_positive = get_bool(obj, "expect_second_max_positive", "params", p.expect_second_max_positive);
    if (!p.expect_exists && (p.expect_second || p.expect_nonpositive || p.expect_second_max_positive))
        throw config_error("params.expect_exists: false cannot be combined with other expectations");
    return p;
}

inline BranchParams parse_branch_params(const json& obj) {
    BranchParams p;
    const std::string mode = get_string(obj, "mode", "params", "fold");
    if (mode == "fold") p.mode = BranchMode::fold;
    else if (mode == "pair") p.mode = BranchMode::pair;
    else if (mode == "sweep_a") p.mode = BranchMode::sweep_a;
    else if (mode == "sweep_k") p.mode = BranchMode::sweep_k;
    else if (mode == "trichotomy") p.mode = BranchMode::trichotomy;
    else
        throw config_error("params.mode: unknown branch mode '" + mode +
                           "' (expected fold, pair, sweep_a, sweep_k or trichotomy)");

    switch (p.mode) {
        case BranchMode::fold: {
            reject_unknown_keys(obj, "params",
                                {"mode", "lambda_start_factor", "param_max", "past_fold_factor", "expect_fold",
                                 "expect_fold_below_gamma1", "expect_none_past_fold"});
            p.lambda_start_factor = get_number(obj, "lambda_start_factor", "params", p.lambda_start_factor);
            if (!(p.lambda_start_factor > 0.0)) throw config_error("params.lambda_start_factor: must be positive");
            p.param_max = get_number(obj, "param_max", "params", 0.0);
            p.past_fold_factor = get_number(obj, "past_fold_factor", "params", p.past_fold_factor);
            if (!(p.past_fold_factor > 1.0)) throw config_error("params.past_fold_factor: must exceed 1");
            p.expect_fold = get_bool(obj, "expect_fold", "params", p.expect_fold);
            p.expect_fold_below_gamma1 = get_bool(obj, "expect_fold_below_gamma1", "params", false);
            p.expect_none_past_fold = get_bool(obj, "expect_none_past_fold", "params", false);
            break;
        }
        case BranchMode::pair: {
            reject_unknown_keys(obj, "params",
                                {"mode", "lambdas", "expect_ordered", "expect_u1_nonpositive",
                                 "expect_u2_max_positive", "expect_u1_decreasing", "blowup_lambdas", "blowup_band",
                                 "blowup_min_spread"});
            p.lambdas = get_number_list(obj, "lambdas", "params");
            if (p.lambdas.empty()) throw config_error("params.lambdas: pair mode needs at least one value");
            p.expect_ordered = get_bool(obj, "expect_ordered", "params", p.expect_ordered);
            p.expect_u1_nonpositive = get_bool(obj, "expect_u1_nonpositive", "params", false);
            p.expect_u2_max_positive = get_bool(obj, "expect_u2_max_positive", "params", false);
            p.expect_u1_decreasing = get_bool(obj, "expect_u1_decreasing", "params", false);
            p.blowup_lambdas = get_number_list(obj, "blowup_lambdas", "params");
            p.blowup_band = get_number(obj, "blowup_band", "params", p.blowup_band);
            if (!(p.blowup_band >= 1.0)) throw config_error("params.blowup_band: must be at least 1");
            p.blowup_min_spread = get_number(obj, "blowup_min_spread", "params", p.blowup_min_spread);
            if (!(p.blowup_min_spread > 0.0)) throw config_error("params.blowup_min_spread: must be positive");
            break;
        }
        case BranchMode::sweep_a: {
            reject_unknown_keys(obj, "params", {"mode", "lambda", "lambda_factor_gamma1", "param_max", "expect_fold"});
            if (const json* v = find(obj, "lambda")) p.lambda = as_number(*v, "params.lambda");
            if (const json* v = find(obj, "lambda_factor_gamma1"))
                p.lambda_factor_gamma1 = as_number(*v, "params.lambda_factor_gamma1");
            require_single_lambda(p.lambda, p.lambda_factor_gamma1, "params");
            p.param_max = get_number(obj, "param_max", "params", 0.0);
            p.expect_fold = get_bool(obj, "expect_fold", "params", p.expect_fold);
            break;
        }
        case BranchMode::sweep_k: {
            reject_unknown_keys(obj, "params",
                                {"mode", "lambda", "lambda_factor_nu1", "param_max", "expect_fold",
                                 "expect_pair_at_half", "expect_none_at_double"});
            if (const json* v = find(obj, "lambda")) p.lambda = as_number(*v, "params.lambda");
            if (const json* v = find(obj, "lambda_factor_nu1"))
                p.lambda_factor_nu1 = as_number(*v, "params.lambda_factor_nu1");
            if (p.lambda && p.lambda_factor_nu1)
                throw config_error("params: give either lambda or lambda_factor_nu1, not both");
            if (!p.lambda && !p.lambda_factor_nu1)
                throw config_error("params: one of lambda or lambda_factor_nu1 is required");
            p.param_max = get_number(obj, "param_max", "params", 0.0);
            p.expect_fold = get_bool(obj, "expect_fold", "params", p.expect_fold);
            p.expect_pair_at_half = get_bool(obj, "expect_pair_at_half", "params", false);
            p.expect_none_at_double = get_bool(obj, "expect_none_at_double", "params", false);
            break;
        }
        case BranchMode::trichotomy: {
            reject_unknown_keys(obj, "params", {"mode", "lambda_factors", "expect_patterns", "starts"});
            p.lambda_factors = get_number_list(obj, "lambda_factors", "params");
            if (p.lambda_factors.empty())
                throw config_error("params.lambda_factors: trichotomy mode needs at least one value");
            for (double f : p.lambda_factors)
                if (!(f > 0.0)) throw config_error("params.lambda_factors: factors must be positive");
            if (const json* v = find(obj, "expect_patterns")) {
                if (!v->is_array()) throw config_error("params.expect_patterns: expected an array");
                for (std::size_t i = 0; i < v->size(); ++i) {
                    const json& e = (*v)[i];
                    const std::string ctx = "params.expect_patterns[" + std::to_string(i) + "]";
                    if (!e.is_object()) throw config_error(ctx + ": expected an object");
                    reject_unknown_keys(e, ctx, {"factor", "pattern"});
                    TrichotomyExpect te;
                    const json* f = find(e, "factor");
                    if (!f) throw config_error(ctx + ".factor: required");
                    te.factor = as_number(*f, ctx + ".factor");
                    te.pattern = get_string(e, "pattern", ctx, "");
                    if (te.pattern != "positive" && te.pattern != "only_trivial" && te.pattern != "negative")
                        throw config_error(ctx + ".pattern: expected positive, only_trivial or negative, got '" +
                                           te.pattern + "'");
                    if (std::find(p.lambda_factors.begin(), p.lambda_factors.end(), te.factor) ==
                        p.lambda_factors.end())
                        throw config_error(ctx + ".factor: " + format_double(te.factor) +
                                           " is not in params.lambda_factors");
                    p.expect_patterns.push_back(te);
                }
            }
            const long starts = get_integer(obj, "starts", "params", p.starts);
            if (starts < 1 || starts > 10000) throw config_error("params.starts: must be in [1, 10000]");
            p.starts = static_cast<int>(starts);
            break;
        }
    }
    return p;
}

inline TimemapParams parse_timemap_params(const json& obj) {
    TimemapParams p;
    reject_unknown_keys(obj, "params",
                        {"lambda", "s_lo", "s_hi", "n_samples", "a_lo", "a_hi", "table_n", "profile_n",
                         "expect_counts"});
    p.lambda = get_number(obj, "lambda", "params", p.lambda);
    if (p.lambda < 0.0) throw config_error("params.lambda: must be nonnegative, got " + format_double(p.lambda));
    p.s_lo = get_number(obj, "s_lo", "params", p.s_lo);
    p.s_hi = get_number(obj, "s_hi", "params", p.s_hi);
    if (!(p.s_lo < p.s_hi)) throw config_error("params.s_lo: slope window must satisfy s_lo < s_hi");
    const long ns = get_integer(obj, "n_samples", "params", p.n_samples);
    if (ns < 8 || ns > 1000000) throw config_error("params.n_samples: must be in [8, 1000000]");
    p.n_samples = static_cast<int>(ns);
    p.a_lo = get_number(obj, "a_lo", "params", p.a_lo);
    p.a_hi = get_number(obj, "a_hi", "params", p.a_hi);
    if (!(p.a_lo > 0.0) || !(p.a_hi > p.a_lo))
        throw config_error("params.a_lo: launch window must satisfy 0 < a_lo < a_hi");
    const long tn = get_integer(obj, "table_n", "params", p.table_n);
    if (tn < 2 || tn > 100000) throw config_error("params.table_n: must be in [2, 100000]");
    p.table_n = static_cast<int>(tn);
    const long pn = get_integer(obj, "profile_n", "params", 0);
    if (pn < 0 || (pn > 0 && pn < 3) || pn > 100000)
        throw config_error("params.profile_n: must be 0 (off) or in [3, 100000]");
    p.profile_n = static_cast<int>(pn);
    if (const json* v = find(obj, "expect_counts")) {
        if (!v->is_array()) throw config_error("params.expect_counts: expected an array");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& e = (*v)[i];
            const std::string ctx = "params.expect_counts[" + std::to_string(i) + "]";
            if (!e.is_object()) throw config_error(ctx + ": expected an object");
            reject_unknown_keys(e, ctx, {"factor", "T", "positive", "negative", "sign_changing"});
            CountExpect ce;
            if (const json* f = find(e, "factor")) ce.factor = as_number(*f, ctx + ".factor");
            if (const json* t = find(e, "T")) ce.T = as_number(*t, ctx + ".T");
            if (ce.factor.has_value() == ce.T.has_value())
                throw config_error(ctx + ": give exactly one of factor (of the reference time) or T (absolute)");
            if (ce.factor && !(*ce.factor > 0.0)) throw config_error(ctx + ".factor: must be positive");
            if (ce.T && !(*ce.T > 0.0)) throw config_error(ctx + ".T: must be positive");
            ce.positive = static_cast<int>(get_integer(e, "positive", ctx, 0));
            ce.negative = static_cast<int>(get_integer(e, "negative", ctx, 0));
            ce.sign_changing = static_cast<int>(get_integer(e, "sign_changing", ctx, 0));
            if (ce.positive < 0 || ce.negative < 0 || ce.sign_changing < 0)
                throw config_error(ctx + ": expected counts must be nonnegative");
            p.expect_counts.push_back(ce);
        }
    }
    if (p.expect_counts.empty()) throw config_error("params.expect_counts: timemap scenario needs at least one entry");
    return p;
}

inline VerifyParams parse_verify_params(const json& obj) {
    VerifyParams p;
    reject_unknown_keys(obj, "params", {"fixtures"});
    const json* v = find(obj, "fixtures");
    if (!v || !v->is_array() || v->empty())
        throw config_error("params.fixtures: verify_suite needs a nonempty array of config paths");
    for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_string())
            throw config_error("params.fixtures[" + std::to_string(i) + "]: expected a string path");
        p.fixtures.push_back(e.get<std::string>());
    }
    return p;
}

inline ScenarioParams parse_params(Scenario s, const json& root) {
    const json* v = find(root, "params");
    json empty = json::object();
    const json& obj = v ? *v : empty;
    if (v && !v->is_object()) throw config_error("params: expected an object, got " + json_type_name(*v));
    switch (s) {
        case Scenario::eigen: return parse_eigen_params(obj);
        case Scenario::solve: return parse_solve_params(obj);
        case Scenario::branch: return parse_branch_params(obj);
        case Scenario::timemap: return parse_timemap_params(obj);
        case Scenario::verify_suite: return parse_verify_params(obj);
    }
    throw config_error("params: unreachable scenario");
}

} // namespace detail

/// Parse a configuration from JSON text. `base_dir` is the directory used to
/// resolve relative paths referenced by the config (data CSVs, fixtures).
inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // nlohmann reports "... at line L, column C ..." for text input.
        throw config_error(std::string("config: ") + e.what());
    }
    if (!root.is_object()) throw config_error("config: top level must be a JSON object");
    detail::reject_unknown_keys(root, "config",
                                {"scenario", "problem", "params", "tolerances", "output_dir", "seed"});

    RunConfig cfg;
    cfg.base_dir = base_dir;
    const json* sc = detail::find(root, "scenario");
    if (!sc) throw config_error("scenario: required");
    if (!sc->is_string()) throw config_error("scenario: expected a string");
    cfg.scenario = scenario_from_string(sc->get<std::string>());
    cfg.problem = detail::parse_problem(root);
    cfg.tolerances = detail::parse_tolerances(root);
    cfg.output_dir = detail::get_string(root, "output_dir", "config", cfg.output_dir);
    if (cfg.output_dir.empty()) throw config_error("output_dir: must not be empty");
    const long long seed = detail::get_integer(root, "seed", "config", static_cast<long>(cfg.seed));
    if (seed < 0) throw config_error("seed: must be nonnegative, got " + std::to_string(seed));
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.params = detail::parse_params(cfg.scenario, root);

    if (cfg.scenario == Scenario::timemap) {
        if (!std::holds_alternative<Interval>(cfg.problem.domain))
            throw config_error("problem.domain: timemap scenario requires an interval domain");
        if (cfg.problem.c.is_csv() || cfg.problem.h.is_csv())
            throw config_error("problem.c: timemap scenario requires constant c and h");
        if (!(cfg.problem.c.constant > 0.0))
            throw config_error("problem.c: timemap scenario requires a positive constant c");
    }
    return cfg;
}

/// Parse a configuration file; relative paths inside it resolve against its
/// own directory.
inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::filesystem::path dir = std::filesystem::path(path).parent_path();
    if (dir.empty()) dir = ".";
    return parse_config_text(ss.str(), dir);
}

/// The configuration with all defaults filled in, as JSON (echoed into run
/// reports; deterministic field order).
inline json RunConfig::echo() const {
    json root;
    root["scenario"] = to_string(scenario);

    json prob;
    json dom;
    if (const auto* iv = std::get_if<Interval>(&problem.domain)) {
        dom["kind"] = "interval";
        dom["length"] = iv->length;
    } else {
        const auto& rc = std::get<Rectangle>(problem.domain);
        dom["kind"] = "rectangle";
        dom["lx"] = rc.lx;
        dom["ly"] = rc.ly;
    }
    prob["domain"] = dom;
    prob["n"] = problem.n;
    const auto field_echo = [](const FieldConfig& f) -> json {
        if (f.is_csv()) return json{{"csv", f.csv}};
        return json(f.constant);
    };
    prob["c"] = field_echo(problem.c);
    prob["h"] = field_echo(problem.h);
    prob["mu"] = problem.mu;
    root["problem"] = prob;

    json par;
    if (const auto* e = std::get_if<EigenParams>(&params)) {
        if (e->expect_value) par["expect_value"] = *e->expect_value;
        par["expect_rel_tol"] = e->expect_rel_tol;
        par["check_coercivity"] = e->check_coercivity;
    } else if (const auto* s = std::get_if<SolveParams>(&params)) {
        if (s->lambda) par["lambda"] = *s->lambda;
        if (s->lambda_factor_gamma1) par["lambda_factor_gamma1"] = *s->lambda_factor_gamma1;
        par["starts"] = s->starts;
        par["expect_exists"] = s->expect_exists;
        par["expect_second"] = s->expect_second;
        par["expect_nonpositive"] = s->expect_nonpositive;
        par["expect_second_max_positive"] = s->expect_second_max_positive;
    } else if (const auto* b = std::get_if<BranchParams>(&params)) {
        par["mode"] = to_string(b->mode);
        switch (b->mode) {
            case BranchMode::fold:
                par["lambda_start_factor"] = b->lambda_start_factor;
                par["param_max"] = b->param_max;
                par["past_fold_factor"] = b->past_fold_factor;
                par["expect_fold"] = b->expect_fold;
                par["expect_fold_below_gamma1"] = b->expect_fold_below_gamma1;
                par["expect_none_past_fold"] = b->expect_none_past_fold;
                break;
            case BranchMode::pair:
                par["lambdas"] = b->lambdas;
                par["expect_ordered"] = b->expect_ordered;
                par["expect_u1_nonpositive"] = b->expect_u1_nonpositive;
                par["expect_u2_max_positive"] = b->expect_u2_max_positive;
                par["expect_u1_decreasing"] = b->expect_u1_decreasing;
                if (!b->blowup_lambdas.empty()) {
                    par["blowup_lambdas"] = b->blowup_lambdas;
                    par["blowup_band"] = b->blowup_band;
                    par["blowup_min_spread"] = b->blowup_min_spread;
                }
                break;
            case BranchMode::sweep_a:
                if (b->lambda) par["lambda"] = *b->lambda;
                if (b->lambda_factor_gamma1) par["lambda_factor_gamma1"] = *b->lambda_factor_gamma1;
                par["param_max"] = b->param_max;
                par["expect_fold"] = b->expect_fold;
                break;
            case BranchMode::sweep_k:
                if (b->lambda) par["lambda"] = *b->lambda;
                if (b->lambda_factor_nu1) par["lambda_factor_nu1"] = *b->lambda_factor_nu1;
                par["param_max"] = b->param_max;
                par["expect_fold"] = b->expect_fold;
                par["expect_pair_at_half"] = b->expect_pair_at_half;
                par["expect_none_at_double"] = b->expect_none_at_double;
                break;
            case BranchMode::trichotomy: {
                par["lambda_factors"] = b->lambda_factors;
                json pats = json::array();
                for (const auto& te : b->expect_patterns)
                    pats.push_back(json{{"factor", te.factor}, {"pattern", te.pattern}});
                par["expect_patterns"] = pats;
                par["starts"] = b->starts;
                break;
            }
        }
    } else if (const auto* t = std::get_if<TimemapParams>(&params)) {
        par["lambda"] = t->lambda;
        par["s_lo"] = t->s_lo;
        par["s_hi"] = t->s_hi;
        par["n_samples"] = t->n_samples;
        par["a_lo"] = t->a_lo;
        par["a_hi"] = t->a_hi;
        par["table_n"] = t->table_n;
        par["profile_n"] = t->profile_n;
        json counts = json::array();
        for (const auto& ce : t->expect_counts) {
            json e;
            if (ce.factor) e["factor"] = *ce.factor;
            if (ce.T) e["T"] = *ce.T;
            e["positive"] = ce.positive;
            e["negative"] = ce.negative;
            e["sign_changing"] = ce.sign_changing;
            counts.push_back(e);
        }
        par["expect_counts"] = counts;
    } else if (const auto* vf = std::get_if<VerifyParams>(&params)) {
        par["fixtures"] = vf->fixtures;
    }
    root["params"] = par;

    json tol;
    tol["solve_tol"] = tolerances.solve_tol;
    tol["eigen_tol"] = tolerances.eigen_tol;
    tol["eigen_residual"] = tolerances.eigen_residual;
    tol["accept_residual"] = tolerances.accept_residual;
    tol["agree_tol"] = tolerances.agree_tol;
    root["tolerances"] = tol;

    root["output_dir"] = output_dir;
    root["seed"] = seed;
    return root;
}

} // namespace qge
