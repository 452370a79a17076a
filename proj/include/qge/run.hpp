#pragma once

// Scenario runners behind the command-line driver. run(config) dispatches on
// the configured scenario, writes CSV/JSON artifacts into the output
// directory and returns a report with per-operation outcomes plus the list
// of declared assertions and their verdicts. Every artifact is byte-stable:
// given the same config and seed the emitted files are identical across
// runs (fixed field order, 17-significant-digit doubles, LF endings, no
// locale-dependent formatting, and no timestamps -- the measured wall time
// lives only on the report struct, never in a file).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qge/branch.hpp"
#include "qge/config.hpp"
#include "qge/eigenpairs.hpp"
#include "qge/errors.hpp"
#include "qge/grid.hpp"
#include "qge/operators.hpp"
#include "qge/problem.hpp"
#include "qge/solve.hpp"
#include "qge/timemap.hpp"
#include "qge/transform.hpp"
#include "qge/version.hpp"

namespace qge {

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunReport {
    json config_echo;
    std::string version;
    json outcomes = json::object();
    std::vector<Assertion> assertions;
    bool all_passed = true;
    double wall_ms = 0.0; ///< filled by the driver; excluded from serialized artifacts
};

inline json report_json(const RunReport& r) {
    json root;
    root["version"] = r.version;
    root["config"] = r.config_echo;
    root["outcomes"] = r.outcomes;
    json as = json::array();
    for (const Assertion& a : r.assertions)
        as.push_back(json{{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    root["assertions"] = as;
    root["all_assertions_passed"] = r.all_passed;
    return root;
}

namespace detail {

inline void add_assertion(RunReport& rep, std::string name, bool pass, std::string detail) {
    rep.assertions.push_back(Assertion{std::move(name), pass, std::move(detail)});
    rep.all_passed = rep.all_passed && pass;
}

/// Write a CSV with the given header and preformatted rows. An empty row
/// list still produces the header line, so downstream consumers always see
/// the column contract.
inline void write_rows_csv(const std::filesystem::path& path, const std::string& header,
                           const std::vector<std::string>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw validation_error("write_rows_csv: cannot open '" + path.string() + "' for writing");
    out << header << '\n';
    for (const std::string& r : rows) out << r << '\n';
    if (!out) throw validation_error("write_rows_csv: write to '" + path.string() + "' failed");
}

/// Branch trace: one row per accepted continuation point, in acceptance
/// order (so a fold shows up as the parameter column turning around).
inline void emit_branch_csv(const std::filesystem::path& path, const char* param_name, const Branch& br) {
    std::vector<std::string> rows;
    rows.reserve(br.points.size());
    for (const BranchPoint& pt : br.points)
        rows.push_back(format_double(pt.param) + ',' + format_double(pt.sup_norm) + ',' +
                       format_double(pt.min_val) + ',' + format_double(pt.max_val) + ',' +
                       format_double(pt.step_used));
    write_rows_csv(path, std::string(param_name) + ",sup_norm,min,max,step", rows);
}

inline json fold_json(const std::optional<FoldInfo>& fold) {
    if (!fold) return nullptr;
    return json{{"param_estimate", fold->param_estimate},
                {"bracket_lo", fold->bracket_lo},
                {"bracket_hi", fold->bracket_hi}};
}

/// Count converged, grid-resolved solutions in a multistart battery and
/// return the best (smallest-residual) report for diagnostics.
struct MultistartSummary {
    int attempts = 0;
    int converged = 0;
    double best_residual = std::numeric_limits<double>::infinity();
    std::optional<SolveReport> best;
};

inline MultistartSummary summarize_multistart(const ProblemSpec& p, double lambda,
                                              const std::vector<SolveReport>& reps) {
    MultistartSummary s;
    s.attempts = static_cast<int>(reps.size());
    for (const SolveReport& r : reps) {
        const bool good = r.converged && detail::resolved_profile(r.solution);
        if (good) ++s.converged;
        const double rel = r.residual_inf / data_scale(p, lambda, r.solution);
        if (rel < s.best_residual) {
            s.best_residual = rel;
            s.best = r;
        }
    }
    return s;
}

/// Residual scaled by the data (and, for transformed-formulation reports,
/// by the transformed amplitude, whose roundoff floor grows with e^(mu*u)).
inline double relative_residual(const ProblemSpec& p, double lambda, const SolveReport& r) {
    double scale = data_scale(p, lambda, r.solution);
    if (r.formulation == Formulation::transformed && p.mu_is_constant())
        scale = std::max(scale, 1.0 + cole_hopf_forward(r.solution, p.mu_value()).sup_norm());
    return r.residual_inf / scale;
}

/// Absolute residual floor of the second-order stencil at this resolution
/// and amplitude: rounding of O(amplitude) node values amplified by 1/h^2.
inline double stencil_floor(const Grid& g, double amplitude) {
    const double lap_diag = laplacian(g).matrix.diagonal().maxCoeff();
    return 8.0 * std::numeric_limits<double>::epsilon() * lap_diag * (1.0 + amplitude);
}

/// Multistart battery with a roundoff-floor retry: when no start meets the
/// requested absolute residual target, and that target sits below the
/// stencil floor for the best iterate's amplitude, rerun once with the
/// floored target. The declared acceptance bounds still judge the result
/// independently, so the retry can only recover genuine solutions that the
/// unreachable tolerance rejected.
inline MultistartSummary run_multistart(const ProblemSpec& p, double lambda, SolveOptions so, int starts,
                                        unsigned long seed) {
    MultistartSummary s =
        summarize_multistart(p, lambda, multistart_newton(p, lambda, multistart_family(p, lambda, starts, seed), so));
    if (s.converged > 0 || !s.best) return s;
    const double floor = stencil_floor(p.grid(), s.best->solution.sup_norm());
    if (floor <= so.tol) return s;
    so.tol = floor;
    return summarize_multistart(p, lambda,
                                multistart_newton(p, lambda, multistart_family(p, lambda, starts, seed), so));
}

/// Smallest-mean converged, grid-resolved solution from the battery.
inline std::optional<GridFunction> find_minimal(const ProblemSpec& p, double lambda, const SolveOptions& so,
                                                int starts, unsigned long seed) {
    SolveOptions opts = so;
    for (int pass = 0; pass < 2; ++pass) {
        const std::vector<SolveReport> reps =
            multistart_newton(p, lambda, multistart_family(p, lambda, starts, seed), opts);
        std::optional<GridFunction> best;
        double best_mean = std::numeric_limits<double>::infinity();
        double best_res = std::numeric_limits<double>::infinity();
        double best_sup = 0.0;
        for (const SolveReport& r : reps) {
            if (r.residual_inf < best_res) {
                best_res = r.residual_inf;
                best_sup = r.solution.sup_norm();
            }
            if (!r.converged || !detail::resolved_profile(r.solution)) continue;
            const double mean = integrate(r.solution);
            if (mean < best_mean) {
                best_mean = mean;
                best = r.solution;
            }
        }
        if (best) return best;
        const double floor = stencil_floor(p.grid(), best_sup);
        if (floor <= opts.tol) return std::nullopt;
        opts.tol = floor;
    }
    return std::nullopt;
}

inline std::string count_label(const CountExpect& ce) {
    return ce.factor ? "factor=" + format_double(*ce.factor) : "T=" + format_double(*ce.T);
}

// ---------------------------------------------------------------------------
// eigen: principal eigenpair of the weighted linear operator, plus the
// optional coercivity margin of the gradient-term majorant.
inline void run_eigen(const RunConfig& cfg, const EigenParams& ep, const std::filesystem::path& out,
                      RunReport& rep) {
    const ProblemSpec p = cfg.problem.build(cfg.base_dir);
    const EigenPair gam = gamma1(p, cfg.tolerances.eigen_options());
    write_csv((out / "eigen_phi1.csv").string(), gam.func);

    rep.outcomes["gamma1"] = gam.value;
    rep.outcomes["eigen_residual"] = gam.residual;
    rep.outcomes["eigen_iterations"] = gam.iterations;

    add_assertion(rep, "eigen_residual_within_target", gam.residual <= cfg.tolerances.eigen_residual,
                  "residual " + format_double(gam.residual) + " vs target " +
                      format_double(cfg.tolerances.eigen_residual));
    if (ep.check_coercivity) {
        const CoercivityReport co = coercivity_check(p, cfg.tolerances.eigen_options());
        rep.outcomes["coercivity_margin"] = co.margin;
        add_assertion(rep, "coercive", co.ok, "margin " + format_double(co.margin));
    }
    if (ep.expect_value) {
        const double rel = std::abs(gam.value - *ep.expect_value) / std::abs(*ep.expect_value);
        rep.outcomes["expected_value_rel_error"] = rel;
        add_assertion(rep, "eigenvalue_matches_expected", rel <= ep.expect_rel_tol,
                      "gamma1 " + format_double(gam.value) + " vs expected " + format_double(*ep.expect_value) +
                          " (rel error " + format_double(rel) + ")");
    }
}

// ---------------------------------------------------------------------------
// solve: existence (or certified absence) at one reaction coefficient,
// cross-checked between the direct and transformed formulations.
inline void run_solve(const RunConfig& cfg, const SolveParams& sp, const std::filesystem::path& out,
                      RunReport& rep) {
    const ProblemSpec p = cfg.problem.build(cfg.base_dir);
    const EigenPair gam = gamma1(p, cfg.tolerances.eigen_options());
    const double lambda = sp.resolve_lambda(gam.value);
    const SolveOptions so = cfg.tolerances.solve_options();
    rep.outcomes["gamma1"] = gam.value;
    rep.outcomes["lambda"] = lambda;

    if (!sp.expect_exists) {
        const MultistartSummary ms = run_multistart(p, lambda, so, sp.starts, cfg.seed);
        rep.outcomes["attempts"] = ms.attempts;
        rep.outcomes["converged_count"] = ms.converged;
        rep.outcomes["best_relative_residual"] = ms.best_residual;
        if (ms.best) {
            const IdentityReport idr = check_identity_phi1(p, lambda, ms.best->solution, &gam);
            rep.outcomes["identity_lhs"] = idr.lhs;
            rep.outcomes["identity_rhs"] = idr.rhs;
            rep.outcomes["identity_gap"] = idr.gap;
        }
        add_assertion(rep, "nonexistence_confirmed", ms.converged == 0,
                      std::to_string(ms.converged) + " of " + std::to_string(ms.attempts) +
                          " starts converged; best relative residual " + format_double(ms.best_residual));
        return;
    }

    const std::optional<GridFunction> u = find_minimal(p, lambda, so, sp.starts, cfg.seed);
    add_assertion(rep, "solution_found", u.has_value(),
                  u ? "minimal solution with sup " + format_double(u->sup_norm())
                    : "no converged, grid-resolved solution among the starts");
    if (!u) return;

    const double res = residual_direct(p, lambda, *u).sup_norm();
    const double scale = data_scale(p, lambda, *u);
    write_csv((out / "solution.csv").string(), *u);
    rep.outcomes["residual"] = res;
    rep.outcomes["u_min"] = u->min_val();
    rep.outcomes["u_max"] = u->max_val();
    add_assertion(rep, "residual_within_bound", res <= cfg.tolerances.accept_residual * scale,
                  "residual " + format_double(res) + " vs bound " +
                      format_double(cfg.tolerances.accept_residual * scale));

    if (p.mu_is_constant()) {
        const SolveReport rd = newton_direct(p, lambda, *u, so);
        const SolveReport rt = newton_transformed(p, lambda, cole_hopf_forward(*u, p.mu_value()), so);
        const double diff = (rd.solution - rt.solution).sup_norm();
        rep.outcomes["formulation_gap"] = diff;
        add_assertion(rep, "formulations_agree",
                      rd.converged && rt.converged && diff <= cfg.tolerances.agree_tol * (1.0 + u->sup_norm()),
                      "direct/transformed sup gap " + format_double(diff));
    }
    if (sp.expect_nonpositive)
        add_assertion(rep, "solution_nonpositive", u->max_val() <= 0.0, "max " + format_double(u->max_val()));

    if (sp.expect_second) {
        DeflationConfig dc;
        dc.starts = sp.starts;
        dc.seed = cfg.seed;
        dc.solve = so;
        const SecondSolution sec = find_second_solution(p, lambda, *u, dc);
        const bool found = sec.report.converged && sec.ordering.has_value();
        add_assertion(rep, "second_solution_found", found,
                      found ? "second solution with sup " + format_double(sec.report.solution.sup_norm())
                            : "no distinct second solution found");
        if (found) {
            write_csv((out / "second.csv").string(), sec.report.solution);
            rep.outcomes["second_residual"] = sec.report.residual_inf;
            rep.outcomes["second_residual_relative"] = relative_residual(p, lambda, sec.report);
            rep.outcomes["second_formulation"] = to_string(sec.report.formulation);
            rep.outcomes["second_max"] = sec.report.solution.max_val();
            rep.outcomes["order_epsilon"] = sec.ordering->epsilon;
            add_assertion(rep, "pair_ordered", sec.ordering->holds,
                          "max violation " + format_double(sec.ordering->max_violation) + ", strict margin " +
                              format_double(sec.ordering->epsilon));
            if (sp.expect_second_max_positive)
                add_assertion(rep, "second_max_positive", sec.report.solution.max_val() > 0.0,
                              "max " + format_double(sec.report.solution.max_val()));
        }
    }
}

// ---------------------------------------------------------------------------
// branch: parameter continuation. Five modes share the scenario: a fold in
// the reaction coefficient, ordered pairs per reaction value (optionally
// with the upper-branch amplitude sweep), folds in additive/multiplicative
// data families, and the trichotomy of signed solutions around gamma1.

inline void run_branch_fold(const RunConfig& cfg, const BranchParams& bp, const ProblemSpec& p,
                            const EigenPair& gam, const std::filesystem::path& out, RunReport& rep) {
    const SolveOptions so = cfg.tolerances.solve_options();
    const double lambda0 = bp.lambda_start_factor * gam.value;
    rep.outcomes["lambda_start"] = lambda0;
    const std::optional<GridFunction> u0 = find_minimal(p, lambda0, so, 16, cfg.seed);
    add_assertion(rep, "start_solution_found", u0.has_value(), "continuation seed at lambda " + format_double(lambda0));
    if (!u0) return;

    BranchConfig bc;
    bc.solve = so;
    bc.accept_residual = cfg.tolerances.accept_residual;
    bc.param_min = 0.0;
    bc.param_max = bp.param_max > 0.0 ? bp.param_max : 1.5 * gam.value;
    const Branch br = continue_lambda(p, lambda0, *u0, +1, bc);
    emit_branch_csv(out / "branch.csv", "lambda", br);

    rep.outcomes["terminated_by"] = to_string(br.terminated_by);
    rep.outcomes["points"] = br.points.size();
    rep.outcomes["fold"] = fold_json(br.fold);

    if (bp.expect_fold)
        add_assertion(rep, "fold_found", br.fold.has_value(),
                      std::string("termination: ") + to_string(br.terminated_by));
    if (bp.expect_fold_below_gamma1) {
        const bool ok = br.fold && br.fold->param_estimate > 0.0 && br.fold->param_estimate < gam.value;
        add_assertion(rep, "fold_below_gamma1", ok,
                      br.fold ? "fold " + format_double(br.fold->param_estimate) + " vs gamma1 " +
                                    format_double(gam.value)
                              : "no fold");
    }
    if (bp.expect_none_past_fold && br.fold) {
        const double probe = bp.past_fold_factor * br.fold->param_estimate;
        const MultistartSummary ms = run_multistart(p, probe, so, 24, cfg.seed);
        rep.outcomes["past_fold_lambda"] = probe;
        rep.outcomes["past_fold_converged"] = ms.converged;
        add_assertion(rep, "no_solution_past_fold", ms.converged == 0,
                      std::to_string(ms.converged) + " of " + std::to_string(ms.attempts) +
                          " starts converged at lambda " + format_double(probe));
    }
}

inline void run_branch_pair(const RunConfig& cfg, const BranchParams& bp, const ProblemSpec& p,
                            const EigenPair& gam, const std::filesystem::path& out, RunReport& rep) {
    const SolveOptions so = cfg.tolerances.solve_options();
    std::vector<GridFunction> firsts;
    std::vector<std::string> pair_rows;
    json pairs = json::array();

    for (std::size_t i = 0; i < bp.lambdas.size(); ++i) {
        const double lambda = bp.lambdas[i];
        const std::string tag = "[lambda=" + format_double(lambda) + "]";
        const std::optional<GridFunction> u1 = find_minimal(p, lambda, so, 24, cfg.seed);
        add_assertion(rep, "u1_found" + tag, u1.has_value(),
                      u1 ? "min " + format_double(u1->min_val()) + ", max " + format_double(u1->max_val())
                         : "no converged solution");
        if (!u1) continue;
        firsts.push_back(*u1);
        write_csv((out / ("u1_" + std::to_string(i) + ".csv")).string(), *u1);
        if (bp.expect_u1_nonpositive)
            add_assertion(rep, "u1_nonpositive" + tag, u1->max_val() <= 0.0, "max " + format_double(u1->max_val()));

        DeflationConfig dc;
        dc.seed = cfg.seed;
        dc.solve = so;
        const SecondSolution sec = find_second_solution(p, lambda, *u1, dc);
        const bool found = sec.report.converged && sec.ordering.has_value();
        add_assertion(rep, "u2_found" + tag, found,
                      found ? "sup " + format_double(sec.report.solution.sup_norm()) : "no second solution");
        json entry{{"lambda", lambda}, {"u1_min", u1->min_val()}, {"u1_max", u1->max_val()}};
        if (found) {
            write_csv((out / ("u2_" + std::to_string(i) + ".csv")).string(), sec.report.solution);
            if (bp.expect_ordered)
                add_assertion(rep, "pair_ordered" + tag, sec.ordering->holds,
                              "max violation " + format_double(sec.ordering->max_violation) + ", strict margin " +
                                  format_double(sec.ordering->epsilon));
            if (bp.expect_u2_max_positive)
                add_assertion(rep, "u2_max_positive" + tag, sec.report.solution.max_val() > 0.0,
                              "max " + format_double(sec.report.solution.max_val()));
            entry["u2_sup"] = sec.report.solution.sup_norm();
            entry["u2_max"] = sec.report.solution.max_val();
            entry["u2_residual_relative"] = relative_residual(p, lambda, sec.report);
            entry["order_epsilon"] = sec.ordering->epsilon;
            pair_rows.push_back(format_double(lambda) + ',' + format_double(u1->min_val()) + ',' +
                                format_double(u1->max_val()) + ',' + format_double(sec.report.solution.max_val()) +
                                ',' + format_double(sec.report.solution.sup_norm()) + ',' +
                                format_double(sec.ordering->epsilon));
        }
        pairs.push_back(entry);
    }
    write_rows_csv(out / "pairs.csv", "lambda,u1_min,u1_max,u2_max,u2_sup,order_epsilon", pair_rows);
    rep.outcomes["pairs"] = pairs;

    if (bp.expect_u1_decreasing) {
        bool strict = firsts.size() == bp.lambdas.size() && firsts.size() >= 2;
        std::string detail = strict ? "" : "fewer first solutions than reaction values";
        for (std::size_t i = 0; strict && i + 1 < firsts.size(); ++i) {
            const double worst = (firsts[i + 1] - firsts[i]).max_val();
            if (!(worst < 0.0)) {
                strict = false;
                detail = "step " + std::to_string(i) + " max difference " + format_double(worst);
            }
        }
        if (strict) detail = "nodewise strict decrease along all " + std::to_string(firsts.size()) + " values";
        add_assertion(rep, "u1_strictly_decreasing", strict, detail);
    }

    if (!bp.blowup_lambdas.empty()) {
        BranchConfig bc;
        bc.solve = so;
        bc.accept_residual = cfg.tolerances.accept_residual;
        const BlowupTable bt = blowup_diagnostic(p, bp.blowup_lambdas, bc);
        std::vector<std::string> rows;
        double prod_min = std::numeric_limits<double>::infinity();
        double prod_max = 0.0;
        double min_lo = std::numeric_limits<double>::infinity();
        double min_hi = -std::numeric_limits<double>::infinity();
        for (const BlowupRow& r : bt.rows) {
            rows.push_back(format_double(r.lambda) + ',' + format_double(r.sup_norm_u2) + ',' +
                           format_double(r.product) + ',' + format_double(r.min_val));
            prod_min = std::min(prod_min, r.product);
            prod_max = std::max(prod_max, r.product);
            min_lo = std::min(min_lo, r.min_val);
            min_hi = std::max(min_hi, r.min_val);
        }
        write_rows_csv(out / "blowup.csv", "lambda,sup_norm_u2,product,min", rows);
        rep.outcomes["blowup_rows"] = bt.rows.size();
        rep.outcomes["blowup_guard_tripped"] = bt.guard_tripped;
        const bool complete = bt.rows.size() == bp.blowup_lambdas.size();
        add_assertion(rep, "blowup_sweep_complete", complete,
                      std::to_string(bt.rows.size()) + " of " + std::to_string(bp.blowup_lambdas.size()) + " rows");
        if (complete && !bt.rows.empty()) {
            rep.outcomes["blowup_product_min"] = prod_min;
            rep.outcomes["blowup_product_max"] = prod_max;
            add_assertion(rep, "blowup_products_within_band", prod_max <= bp.blowup_band * prod_min,
                          "products in [" + format_double(prod_min) + ", " + format_double(prod_max) + "], band " +
                              format_double(bp.blowup_band));
            add_assertion(rep, "blowup_products_significant", prod_min >= 0.1 * prod_max,
                          "smallest product " + format_double(prod_min) + " vs largest " + format_double(prod_max));
            const double spread = (min_hi - min_lo) / std::max(std::abs(min_lo), std::abs(min_hi));
            rep.outcomes["blowup_min_spread"] = spread;
            add_assertion(rep, "blowup_min_stable", spread <= bp.blowup_min_spread,
                          "minima in [" + format_double(min_lo) + ", " + format_double(min_hi) +
                              "], relative spread " + format_double(spread));
        }
    }
}

inline void run_branch_sweep_a(const RunConfig& cfg, const BranchParams& bp, const ProblemSpec& p,
                               const EigenPair& gam, const std::filesystem::path& out, RunReport& rep) {
    const double lambda = bp.lambda ? *bp.lambda : *bp.lambda_factor_gamma1 * gam.value;
    rep.outcomes["lambda"] = lambda;
    BranchConfig bc;
    bc.solve = cfg.tolerances.solve_options();
    bc.accept_residual = cfg.tolerances.accept_residual;
    if (bp.param_max > 0.0) bc.param_max = bp.param_max;
    const SweepAResult r = sweep_nonexistence_a(p, lambda, bc);
    emit_branch_csv(out / "branch.csv", "a", r.branch);
    rep.outcomes["A1_estimate"] = r.A1_estimate;
    rep.outcomes["terminated_by"] = to_string(r.branch.terminated_by);
    rep.outcomes["points"] = r.branch.points.size();
    rep.outcomes["fold"] = fold_json(r.branch.fold);
    if (bp.expect_fold)
        add_assertion(rep, "fold_found", r.branch.fold.has_value() && r.A1_estimate > 0.0,
                      "A1 estimate " + format_double(r.A1_estimate) + ", termination " +
                          to_string(r.branch.terminated_by));
}

inline void run_branch_sweep_k(const RunConfig& cfg, const BranchParams& bp, const ProblemSpec& p,
                               const std::filesystem::path& out, RunReport& rep) {
    const SolveOptions so = cfg.tolerances.solve_options();
    const EigenPair nu = nu1(p, p.h_minus(), cfg.tolerances.eigen_options());
    const double lambda = bp.lambda ? *bp.lambda : *bp.lambda_factor_nu1 * nu.value;
    rep.outcomes["nu1"] = nu.value;
    rep.outcomes["lambda"] = lambda;

    BranchConfig bc;
    bc.solve = so;
    bc.accept_residual = cfg.tolerances.accept_residual;
    if (bp.param_max > 0.0) bc.param_max = bp.param_max;
    const SweepKResult r = sweep_k(p, lambda, bc);
    emit_branch_csv(out / "branch.csv", "k", r.lower_branch);
    rep.outcomes["k_bar"] = r.k_bar;
    rep.outcomes["terminated_by"] = to_string(r.lower_branch.terminated_by);
    rep.outcomes["fold"] = fold_json(r.lower_branch.fold);

    if (bp.expect_fold)
        add_assertion(rep, "fold_found", r.lower_branch.fold.has_value() && r.k_bar > 0.0,
                      "k_bar " + format_double(r.k_bar));
    if (bp.expect_pair_at_half) {
        write_csv((out / "pair_lower.csv").string(), r.first_at_half.solution);
        write_csv((out / "pair_upper.csv").string(), r.second_at_half.solution);
        const bool ok = r.first_at_half.converged && r.second_at_half.converged && r.ordered_at_half.holds;
        rep.outcomes["pair_order_epsilon"] = r.ordered_at_half.epsilon;
        add_assertion(rep, "pair_at_half", ok,
                      "converged " + std::to_string(r.first_at_half.converged) + "/" +
                          std::to_string(r.second_at_half.converged) + ", max violation " +
                          format_double(r.ordered_at_half.max_violation));
    }
    if (bp.expect_none_at_double) {
        const GridFunction h2(p.grid(),
                              Eigen::VectorXd(2.0 * r.k_bar * p.h_plus().values() - p.h_minus().values()));
        const ProblemSpec p2 = p.with_h(h2);
        const MultistartSummary ms = run_multistart(p2, lambda, so, 24, cfg.seed);
        rep.outcomes["double_k_converged"] = ms.converged;
        add_assertion(rep, "no_solution_at_double_k", ms.converged == 0,
                      std::to_string(ms.converged) + " of " + std::to_string(ms.attempts) +
                          " starts converged at k " + format_double(2.0 * r.k_bar));
    }
}

inline void run_branch_trichotomy(const RunConfig& cfg, const BranchParams& bp, const ProblemSpec& p,
                                  const EigenPair& gam, const std::filesystem::path& out, RunReport& rep) {
    if (p.h().sup_norm() != 0.0)
        throw validation_error("branch trichotomy: requires identically zero forcing h");
    const SolveOptions so = cfg.tolerances.solve_options();
    std::vector<std::string> zero_rows;
    std::vector<std::string> signed_rows;
    json classified = json::array();

    for (const double f : bp.lambda_factors) {
        const double lambda = f * gam.value;
        const std::vector<SolveReport> reps =
            multistart_newton(p, lambda, multistart_family(p, lambda, bp.starts, cfg.seed), so);
        // With h = 0 the zero profile solves the problem exactly; the
        // classification concerns the largest distinct nontrivial solution.
        const SolveReport* nontrivial = nullptr;
        for (const SolveReport& r : reps) {
            if (!r.converged || !detail::resolved_profile(r.solution)) continue;
            const double sup = r.solution.sup_norm();
            if (sup <= 1e-6) continue;
            if (!nontrivial || sup > nontrivial->solution.sup_norm()) nontrivial = &r;
        }
        std::string pattern = "only_trivial";
        double signed_sup = 0.0;
        if (nontrivial) {
            const GridFunction& u = nontrivial->solution;
            const double tol = 1e-10 * (1.0 + u.sup_norm());
            if (u.min_val() >= -tol && u.max_val() > 0.0) {
                pattern = "positive";
                signed_sup = u.max_val();
            } else if (u.max_val() <= tol && u.min_val() < 0.0) {
                pattern = "negative";
                signed_sup = u.min_val();
            } else {
                pattern = "sign_changing";
                signed_sup = u.max_val();
            }
        }
        zero_rows.push_back(format_double(lambda) + ",0");
        if (nontrivial) signed_rows.push_back(format_double(lambda) + ',' + format_double(signed_sup));
        classified.push_back(json{{"factor", f}, {"lambda", lambda}, {"pattern", pattern}, {"signed_sup", signed_sup}});
    }
    write_rows_csv(out / "branch_zero.csv", "lambda,value", zero_rows);
    write_rows_csv(out / "branch_signed.csv", "lambda,signed_sup", signed_rows);
    rep.outcomes["classified"] = classified;

    for (const TrichotomyExpect& te : bp.expect_patterns) {
        std::string observed = "missing";
        for (const auto& e : classified)
            if (e["factor"].get<double>() == te.factor) observed = e["pattern"].get<std::string>();
        add_assertion(rep, "pattern[factor=" + format_double(te.factor) + "]", observed == te.pattern,
                      "expected " + te.pattern + ", observed " + observed);
    }
}

inline void run_branch(const RunConfig& cfg, const BranchParams& bp, const std::filesystem::path& out,
                       RunReport& rep) {
    const ProblemSpec p = cfg.problem.build(cfg.base_dir);
    switch (bp.mode) {
        case BranchMode::sweep_k:
            run_branch_sweep_k(cfg, bp, p, out, rep);
            return;
        case BranchMode::fold:
        case BranchMode::pair:
        case BranchMode::sweep_a:
        case BranchMode::trichotomy:
            break;
    }
    const EigenPair gam = gamma1(p, cfg.tolerances.eigen_options());
    rep.outcomes["gamma1"] = gam.value;
    switch (bp.mode) {
        case BranchMode::fold: run_branch_fold(cfg, bp, p, gam, out, rep); break;
        case BranchMode::pair: run_branch_pair(cfg, bp, p, gam, out, rep); break;
        case BranchMode::sweep_a: run_branch_sweep_a(cfg, bp, p, gam, out, rep); break;
        case BranchMode::trichotomy: run_branch_trichotomy(cfg, bp, p, gam, out, rep); break;
        case BranchMode::sweep_k: break;
    }
}

// ---------------------------------------------------------------------------
// timemap: interval phase-plane analysis. Emits the launch-amplitude table
// and the swept roots, counts solutions by sign class at each tested domain
// length, and checks the counts against the declared expectations.
inline void run_timemap(const RunConfig& cfg, const TimemapParams& tp, const std::filesystem::path& out,
                        RunReport& rep) {
    const Interval iv = std::get<Interval>(cfg.problem.domain);
    PhaseParams base;
    base.lambda = tp.lambda;
    base.mu = cfg.problem.mu;
    base.h = cfg.problem.h.constant;
    base.c = cfg.problem.c.constant;
    base.T = iv.length;

    const PhaseCase pc = case_classify(base);
    rep.outcomes["case"] = to_string(pc);
    rep.outcomes["lambda_c"] = base.lambda * base.c;
    rep.outcomes["mu_h"] = base.mu * base.h;

    const TimeMapTable table = time_map_table(base, tp.a_lo, tp.a_hi, tp.table_n);
    std::vector<std::string> table_rows;
    table_rows.reserve(table.a_values.size());
    for (std::size_t i = 0; i < table.a_values.size(); ++i)
        table_rows.push_back(format_double(table.a_values[i]) + ',' + format_double(table.T_plus[i]));
    write_rows_csv(out / "table.csv", "a,T_plus", table_rows);

    std::optional<double> ref;
    if (pc == PhaseCase::case1) {
        ref = find_T0(base);
        rep.outcomes["T0"] = *ref;
    } else if (pc == PhaseCase::case3) {
        ref = find_T1(base);
        rep.outcomes["T1"] = *ref;
    }

    std::vector<std::string> root_rows;
    json counts = json::array();
    int profile_idx = 0;
    for (const CountExpect& ce : tp.expect_counts) {
        double T = 0.0;
        if (ce.T) {
            T = *ce.T;
        } else {
            if (!ref)
                throw validation_error("timemap: expect_counts entry uses a reference-time factor but the " +
                                       std::string(to_string(pc)) + " regime has no reference time; use absolute T");
            T = *ce.factor * *ref;
        }
        PhaseParams pt = base;
        pt.T = T;
        const std::vector<ShootResult> roots = count_solutions(pt, tp.s_lo, tp.s_hi, tp.n_samples);
        int pos = 0;
        int neg = 0;
        int sc = 0;
        for (const ShootResult& r : roots) {
            if (r.classification == ProfileSign::positive) ++pos;
            else if (r.classification == ProfileSign::negative) ++neg;
            else ++sc;
            root_rows.push_back(format_double(T) + ',' + format_double(r.s) + ',' + format_double(r.end_value) +
                                ',' + to_string(r.classification) + ',' + std::to_string(r.turns) + ',' +
                                format_double(r.v_min) + ',' + format_double(r.v_max));
            if (tp.profile_n > 0) {
                const Grid g(Interval{T}, tp.profile_n);
                const GridFunction v = shoot_profile(pt, r.s, g);
                const double inv_mu = 1.0 / base.mu;
                const GridFunction u = v.map([inv_mu](double x) { return inv_mu * std::log1p(x); });
                write_csv((out / ("root_" + std::to_string(profile_idx) + ".csv")).string(), u);
            }
            ++profile_idx;
        }
        counts.push_back(json{{"label", count_label(ce)},
                              {"T", T},
                              {"positive", pos},
                              {"negative", neg},
                              {"sign_changing", sc}});
        const bool match = pos == ce.positive && neg == ce.negative && sc == ce.sign_changing;
        add_assertion(rep, "counts[" + count_label(ce) + "]", match,
                      "expected " + std::to_string(ce.positive) + "/" + std::to_string(ce.negative) + "/" +
                          std::to_string(ce.sign_changing) + " (positive/negative/sign_changing), observed " +
                          std::to_string(pos) + "/" + std::to_string(neg) + "/" + std::to_string(sc) + " at T " +
                          format_double(T));
    }
    write_rows_csv(out / "roots.csv", "T,s,end_value,classification,turns,v_min,v_max", root_rows);
    rep.outcomes["counts"] = counts;
}

} // namespace detail

RunReport run(const RunConfig& cfg); // forward declaration: verify_suite recurses

namespace detail {

// ---------------------------------------------------------------------------
// verify_suite: run every referenced fixture config and require each one's
// declared assertions to pass. Nested suites are rejected.
inline void run_verify(const RunConfig& cfg, const VerifyParams& vp, const std::filesystem::path& out,
                       RunReport& rep) {
    std::vector<std::string> rows;
    json fixtures = json::array();
    for (std::size_t i = 0; i < vp.fixtures.size(); ++i) {
        const std::filesystem::path ref(vp.fixtures[i]);
        const std::filesystem::path path = ref.is_absolute() ? ref : cfg.base_dir / ref;
        if (!std::filesystem::exists(path))
            throw config_error("params.fixtures[" + std::to_string(i) + "]: referenced file '" + path.string() +
                               "' does not exist");
        RunConfig sub = parse_config(path.string());
        if (sub.scenario == Scenario::verify_suite)
            throw config_error("params.fixtures[" + std::to_string(i) + "]: nested verify_suite is not supported");
        const std::string stem = path.stem().string();
        sub.output_dir = (out / stem).string();
        const RunReport subrep = run(sub);
        int passed = 0;
        for (const Assertion& a : subrep.assertions)
            if (a.pass) ++passed;
        rows.push_back(stem + ',' + std::string(to_string(sub.scenario)) + ',' + std::to_string(passed) + ',' +
                       std::to_string(subrep.assertions.size()) + ',' + (subrep.all_passed ? "1" : "0"));
        fixtures.push_back(json{{"fixture", stem},
                                {"scenario", to_string(sub.scenario)},
                                {"assertions_passed", passed},
                                {"assertions_total", subrep.assertions.size()},
                                {"all_passed", subrep.all_passed}});
        add_assertion(rep, "fixture_passed[" + stem + "]", subrep.all_passed,
                      std::to_string(passed) + " of " + std::to_string(subrep.assertions.size()) +
                          " assertions passed");
    }
    write_rows_csv(out / "suite.csv", "fixture,scenario,assertions_passed,assertions_total,all_passed", rows);
    rep.outcomes["fixtures"] = fixtures;
}

} // namespace detail

/// Execute the configured scenario: create the output directory, write the
/// scenario artifacts and report.json, and return the report. Throws
/// validation_error subclasses for bad configs/data and solver_error
/// subclasses for numerical failures; assertion verdicts never throw.
inline RunReport run(const RunConfig& cfg) {
    const std::filesystem::path out(cfg.output_dir);
    std::filesystem::create_directories(out);

    RunReport rep;
    rep.version = version_string;
    rep.config_echo = cfg.echo();

    if (const auto* ep = std::get_if<EigenParams>(&cfg.params)) detail::run_eigen(cfg, *ep, out, rep);
    else if (const auto* sp = std::get_if<SolveParams>(&cfg.params)) detail::run_solve(cfg, *sp, out, rep);
    else if (const auto* bp = std::get_if<BranchParams>(&cfg.params)) detail::run_branch(cfg, *bp, out, rep);
    else if (const auto* tp = std::get_if<TimemapParams>(&cfg.params)) detail::run_timemap(cfg, *tp, out, rep);
    else if (const auto* vp = std::get_if<VerifyParams>(&cfg.params)) detail::run_verify(cfg, *vp, out, rep);

    std::ofstream repout(out / "report.json", std::ios::binary);
    if (!repout) throw validation_error("run: cannot open '" + (out / "report.json").string() + "' for writing");
    repout << report_json(rep).dump(2) << '\n';
    if (!repout) throw validation_error("run: write to report.json failed");
    return rep;
}

} // namespace qge
