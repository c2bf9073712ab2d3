#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vecspin/cli/config.hpp"
#include "vecspin/cli/report.hpp"
#include "vecspin/legendre.hpp"
#include "vecspin/optimize.hpp"
#include "vecspin/rpc.hpp"
#include "vecspin/system.hpp"

namespace vecspin::cli {

enum ExitCode : int { kOk = 0, kParse = 2, kValidation = 3, kBudget = 4, kNumerical = 5 };

/// Command-line overrides applied on top of the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<int> threads;
    std::optional<std::string> out;
    std::optional<std::string> csv;
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"validate", "phi",           "parisi", "phistar",     "optimize",
                                                "rpc-check", "fe",           "fe-constrained", "cov-check", "gg"};
    return names;
}

namespace detail {

template <typename T>
const T& need(const std::optional<T>& v, const char* what) {
    if (!v) throw ValidationError(std::string("config is missing the '") + what + "' block required by this command");
    return *v;
}

inline void apply(RunConfig& cfg, const Overrides& ov) {
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.backend) cfg.eval.backend = vecspin::cli::detail::parse_backend(*ov.backend);
    if (ov.threads) {
        require(*ov.threads >= 1, "--threads must be >= 1");
        cfg.threads = *ov.threads;
    }
    if (ov.out) cfg.output = *ov.out;
    cfg.eval.seed = cfg.seed;
    cfg.eval.threads = cfg.threads;
    cfg.optimizer.seed = cfg.seed;
}

inline Matrix constraint(const RunConfig& cfg) {
    if (cfg.d) return *cfg.d;
    if (cfg.path) return cfg.path->endpoint();
    if (cfg.hull_weights) return ConstraintHull(need(cfg.prior, "prior")).combine(*cfg.hull_weights);
    throw ValidationError("config needs 'D', 'hull_weights' or a path endpoint");
}

inline LambdaMatrix lambda_or_zero(const RunConfig& cfg) {
    return cfg.lambda ? *cfg.lambda : LambdaMatrix(need(cfg.model, "model").kappa());
}

inline double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

inline PairFunctional pair_functional(const std::string& name) {
    if (name == "one") return [](const Matrix&) { return 1.0; };
    if (name == "trace") return [](const Matrix& r) { return r.trace(); };
    if (name == "trace_sq") return [](const Matrix& r) { return r.trace() * r.trace(); };
    if (name == "sign") return [](const Matrix& r) { return r.trace() > 0.0 ? 1.0 : r.trace() < 0.0 ? -1.0 : 0.0; };
    throw ValidationError("unknown gg functional '" + name + "' (one, trace, trace_sq, sign)");
}

inline void write_csv(const std::string& file, const std::vector<int>& ns, const std::vector<FreeEnergyResult>& rs) {
    std::ofstream out(file);
    if (!out) throw ValidationError("cannot write CSV file '" + file + "'");
    out.precision(17);
    out << "N,draw,value,unconstrained\n";
    for (std::size_t i = 0; i < rs.size(); ++i)
        for (std::size_t d = 0; d < rs[i].per_draw.size(); ++d) {
            out << ns[i] << ',' << d << ',' << rs[i].per_draw[d] << ',';
            if (!rs[i].per_draw_unconstrained.empty()) out << rs[i].per_draw_unconstrained[d];
            out << '\n';
        }
}

inline void cmd_validate(const RunConfig& cfg, Report& rep) {
    json warnings = json::array();
    if (cfg.model && cfg.prior)
        for (const auto& w : cfg.model->coefficient_warnings(cfg.prior->support_bound())) warnings.push_back(w);
    if (cfg.prior && cfg.d) {
        const HullMembership hm = hull_membership(ConstraintHull(*cfg.prior), *cfg.d);
        rep.components["D_in_hull"] = hm.member;
        if (!hm.member) warnings.push_back("D is outside the constraint hull: " + hm.violated);
    }
    if (cfg.path && cfg.d && sup_norm(cfg.path->endpoint() - *cfg.d) > 1e-12)
        warnings.push_back("path endpoint differs from D");
    json blocks = json::array();
    for (const auto& [name, present] : std::vector<std::pair<std::string, bool>>{
             {"model", cfg.model.has_value()}, {"prior", cfg.prior.has_value()}, {"path", cfg.path.has_value()},
             {"lambda", cfg.lambda.has_value()}, {"D", cfg.d.has_value()}})
        if (present) blocks.push_back(name);
    rep.components["blocks"] = blocks;
    rep.components["warnings"] = warnings;
}

inline void cmd_phi(const RunConfig& cfg, Report& rep) {
    const auto& model = need(cfg.model, "model");
    const auto& prior = need(cfg.prior, "prior");
    const auto& path = need(cfg.path, "path");
    const LambdaMatrix lambda = lambda_or_zero(cfg);
    const PhiResult r = eval_phi(model, prior, lambda, path, cfg.eval);
    rep.value = r.value;
    rep.std_error = r.std_error;
    rep.components["backend"] = to_string(cfg.eval.backend);
    if (cfg.eval.backend == Backend::MonteCarlo) {
        const McConvergence mc = eval_phi_mc_doubling(model, prior, lambda, path, cfg.eval);
        rep.components["samples_per_level"] = cfg.eval.samples_per_level;
        rep.components["value_at_2s"] = mc.at_2s.value;
        rep.components["std_error_at_2s"] = mc.at_2s.std_error;
        rep.components["extrapolated"] = mc.extrapolated;
    } else {
        rep.components["nodes_per_level"] = cfg.eval.nodes_per_level;
    }
}

inline void cmd_parisi(const RunConfig& cfg, Report& rep) {
    const auto& path = need(cfg.path, "path");
    const Matrix d = cfg.d ? *cfg.d : path.endpoint();
    const ParisiResult r = eval_parisi(need(cfg.model, "model"), need(cfg.prior, "prior"), lambda_or_zero(cfg), d,
                                       path, cfg.eval);
    rep.value = r.value;
    rep.std_error = r.std_error;
    rep.components["backend"] = to_string(cfg.eval.backend);
    rep.components["phi"] = r.phi;
    rep.components["lagrange"] = r.lagrange;
    rep.components["theta_term"] = r.theta_term;
    rep.check("theta-term rearrangement", r.theta_term, r.theta_term_rearranged, kRearrangeTol);
    if (cfg.has_eps)
        rep.components["guerra_bound"] = cfg.eps * lambda_or_zero(cfg).l1() + r.value;
}

inline void cmd_phistar(const RunConfig& cfg, Report& rep) {
    const auto& path = need(cfg.path, "path");
    const Matrix d = cfg.d ? *cfg.d : path.endpoint();
    const LambdaMatrix start = lambda_or_zero(cfg);
    const PhiStarResult r =
        phi_star(need(cfg.model, "model"), need(cfg.prior, "prior"), d, path, cfg.eval, cfg.optimizer, &start);
    rep.value = r.value;
    rep.std_error = r.std_error;
    rep.components["lambda"] = to_json(r.lambda);
    rep.components["iterations"] = r.iterations;
    rep.components["grad_norm"] = r.grad_norm;
    rep.components["converged"] = r.converged;
    if (!r.warning.empty()) rep.components["warning"] = r.warning;
}

inline void cmd_optimize(const RunConfig& cfg, Report& rep) {
    const OptimizeResult r =
        optimize(need(cfg.model, "model"), need(cfg.prior, "prior"), cfg.levels, cfg.eval, cfg.optimizer);
    rep.value = r.value;
    rep.components["levels"] = cfg.levels;
    rep.components["D"] = to_json(r.d);
    rep.components["hull_weights"] = to_json(r.hull_weights);
    rep.components["lambda"] = to_json(r.lambda);
    if (r.path) rep.components["path"] = to_json(*r.path);
    rep.components["value_lambda_first"] = r.value_lambda_first;
    rep.components["value_path_first"] = r.value_path_first;
    rep.components["converged"] = r.converged;
    if (!r.warning.empty()) rep.components["warning"] = r.warning;
}

inline void cmd_rpc_check(const RunConfig& cfg, Report& rep) {
    const auto& model = need(cfg.model, "model");
    const auto& prior = need(cfg.prior, "prior");
    const auto& path = need(cfg.path, "path");
    const LambdaMatrix lambda = lambda_or_zero(cfg);
    const PhiResult direct = eval_phi(model, prior, lambda, path, cfg.eval);
    const FanoutDoubling sim = simulate_phi_doubling(model, prior, lambda, path, cfg.rpc.replications, cfg.rpc.fanout,
                                                     cfg.seed, cfg.threads);
    rep.value = sim.at_fanout.value;
    rep.std_error = sim.at_fanout.std_error;
    rep.components["backend"] = to_string(cfg.eval.backend);
    rep.components["fanout"] = cfg.rpc.fanout;
    rep.components["replications"] = cfg.rpc.replications;
    rep.components["eval_phi"] = direct.value;
    rep.components["eval_phi_std_error"] = direct.std_error;
    rep.components["simulate_phi_2x_fanout"] = sim.at_double.value;
    rep.components["simulate_phi_2x_fanout_std_error"] = sim.at_double.std_error;
    rep.check("simulate_phi vs eval_phi", sim.at_fanout.value, direct.value,
              3.0 * combined_se(sim.at_fanout.std_error, direct.std_error));

    const OracleEstimate y =
        simulate_y_functional(model, path, cfg.rpc.m, cfg.rpc.replications, cfg.rpc.fanout, cfg.seed, cfg.threads);
    const double closed = theta_correction(model, path);
    rep.components["y_functional"] = y.value;
    rep.components["y_functional_std_error"] = y.std_error;
    rep.components["y_closed_form"] = closed;
    rep.check("cascade Y identity", y.value, closed, 3.0 * y.std_error);
}

inline std::vector<int> sizes(const RunConfig& cfg) {
    return cfg.system.n_list.empty() ? std::vector<int>{cfg.system.n} : cfg.system.n_list;
}

inline void cmd_fe(const RunConfig& cfg, Report& rep, const Overrides& ov, bool constrained) {
    const auto& model = need(cfg.model, "model");
    const auto& prior = need(cfg.prior, "prior");
    const std::vector<int> ns = sizes(cfg);
    std::vector<FreeEnergyResult> results;
    json per_n = json::array();
    for (int n : ns) {
        FreeEnergyResult r;
        if (constrained) {
            if (!cfg.has_eps || cfg.eps <= 0.0) throw ValidationError("fe-constrained needs a positive 'eps'");
            r = constrained_free_energy(model, prior, n, constraint(cfg), cfg.eps, cfg.system.n_disorder, cfg.seed,
                                        cfg.threads);
        } else {
            r = exact_free_energy(model, prior, n, cfg.system.n_disorder, cfg.seed, cfg.threads);
        }
        json e{{"N", n}, {"value", r.value}, {"std_error", r.std_error}, {"configurations", r.configurations}};
        double sd = 0.0;
        for (double v : r.per_draw) sd += (v - r.value) * (v - r.value);
        e["per_draw_sd"] = r.per_draw.size() > 1 ? std::sqrt(sd / static_cast<double>(r.per_draw.size() - 1)) : 0.0;
        if (constrained) {
            e["hit_fraction"] = r.hit_fraction;
            e["unconstrained_value"] = r.unconstrained_value;
            bool below = true;
            for (std::size_t d = 0; d < r.per_draw.size(); ++d) below = below && r.per_draw[d] <= r.per_draw_unconstrained[d];
            rep.check_le("constrained <= unconstrained (N=" + std::to_string(n) + ", every draw)", below ? 0.0 : 1.0,
                         0.0, 0.0);
        }
        per_n.push_back(e);
        results.push_back(std::move(r));
    }
    rep.value = results.front().value;
    rep.std_error = results.front().std_error;
    rep.components["n_disorder"] = cfg.system.n_disorder;
    rep.components["sizes"] = per_n;
    if (ov.csv) write_csv(*ov.csv, ns, results);
}

inline void cmd_cov_check(const RunConfig& cfg, Report& rep) {
    const auto& model = need(cfg.model, "model");
    const int n = cfg.system.n;
    Matrix a, b;
    if (cfg.system.config_a && cfg.system.config_b) {
        a = *cfg.system.config_a;
        b = *cfg.system.config_b;
    } else {
        // Default pair: first and last configurations of the enumeration.
        const auto& prior = need(cfg.prior, "prior");
        const ConfigEnumerator en(prior, n);
        a = en.config(0);
        b = en.config(en.count() - 1);
    }
    const CovarianceCheck h = hamiltonian_covariance_check(model, a, b, cfg.system.draws, cfg.seed, cfg.threads);
    rep.value = h.empirical;
    rep.std_error = h.std_error;
    rep.components["draws"] = cfg.system.draws;
    rep.components["overlap"] = to_json(overlap(a, b));
    rep.check("Hamiltonian covariance vs Sum xi(R)", h.empirical, h.formula, 3.0 * h.std_error);
    for (std::size_t i = 0; i < cfg.perturbation.thetas.size(); ++i) {
        const CovarianceCheck t =
            theta_covariance_check(cfg.perturbation.thetas[i], a, b, cfg.system.draws, cfg.seed, cfg.threads);
        rep.check("h_theta covariance [" + std::to_string(i) + "]", t.empirical, t.formula, 3.0 * t.std_error);
    }
}

inline void cmd_gg(const RunConfig& cfg, Report& rep) {
    const auto& model = need(cfg.model, "model");
    const auto& prior = need(cfg.prior, "prior");
    if (!cfg.has_eps || cfg.eps <= 0.0) throw ValidationError("gg needs a positive 'eps'");
    const Matrix d = constraint(cfg);
    Theta theta;
    if (cfg.gg.theta) {
        theta = *cfg.gg.theta;
    } else if (!cfg.perturbation.thetas.empty()) {
        theta = cfg.perturbation.thetas.front();
    } else {
        theta.n = {1};
        theta.lambdas = {Vector::Ones(model.kappa())};
    }
    const PairFunctional f = pair_functional(cfg.gg.f);
    json per_n = json::array();
    bool first = true;
    for (int n : sizes(cfg)) {
        const GgResult r = gg_discrepancy(model, prior, cfg.perturbation, n, d, cfg.eps, cfg.gg.n, f, theta,
                                          cfg.gg.budget, cfg.seed, cfg.threads);
        if (first) {
            rep.value = r.value;
            rep.std_error = r.std_error;
            first = false;
        }
        per_n.push_back(json{{"N", n},
                             {"delta", r.value},
                             {"std_error", r.std_error},
                             {"E_f_C_new", r.f_c_new},
                             {"E_f", r.f_mean},
                             {"E_C12", r.c12},
                             {"E_f_C12", r.f_c12},
                             {"retained", r.retained},
                             {"hit_fraction", r.hit_fraction}});
    }
    rep.components["functional"] = cfg.gg.f;
    rep.components["n"] = cfg.gg.n;
    rep.components["sizes"] = per_n;
}

} // namespace detail

/// Runs one command. Returns the exit code; the report is written to
/// `out` (or the configured output file). Errors go to `err`.
inline int run(const std::string& command, const std::string& config_file, const Overrides& ov, std::ostream& out,
               std::ostream& err) {
    Report rep;
    rep.command = command;
    try {
        bool known = false;
        for (const auto& c : commands()) known = known || c == command;
        if (!known) throw ParseError("unknown command '" + command + "'");
        RunConfig cfg = load_config(config_file);
        detail::apply(cfg, ov);
        rep.config_digest = cfg.digest;
        rep.seed = cfg.seed;
        const auto t0 = std::chrono::steady_clock::now();
        if (command == "validate") detail::cmd_validate(cfg, rep);
        else if (command == "phi") detail::cmd_phi(cfg, rep);
        else if (command == "parisi") detail::cmd_parisi(cfg, rep);
        else if (command == "phistar") detail::cmd_phistar(cfg, rep);
        else if (command == "optimize") detail::cmd_optimize(cfg, rep);
        else if (command == "rpc-check") detail::cmd_rpc_check(cfg, rep);
        else if (command == "fe") detail::cmd_fe(cfg, rep, ov, false);
        else if (command == "fe-constrained") detail::cmd_fe(cfg, rep, ov, true);
        else if (command == "cov-check") detail::cmd_cov_check(cfg, rep);
        else if (command == "gg") detail::cmd_gg(cfg, rep);
        rep.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        const std::string text = rep.to_json().dump(2) + "\n";
        if (!cfg.output.empty()) {
            std::ofstream file(cfg.output);
            if (!file) throw ValidationError("cannot write output file '" + cfg.output + "'");
            file << text;
        } else {
            out << text;
        }
        return kOk;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kParse;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const BudgetError& e) {
        err << "budget error: " << e.what() << "\n";
        return kBudget;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumerical;
    }
}

} // namespace vecspin::cli
