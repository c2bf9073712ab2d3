#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vecspin/descent.hpp"
#include "vecspin/mixing.hpp"
#include "vecspin/path.hpp"
#include "vecspin/phi.hpp"
#include "vecspin/prior.hpp"
#include "vecspin/system.hpp"

namespace vecspin::cli {

struct RpcBlock {
    int fanout = 128;
    int replications = 200;
    int m = 20;
};

struct SystemBlock {
    int n = 4;
    std::vector<int> n_list;        // several N in one run (fe, gg)
    int n_disorder = 100;
    int draws = 100000;             // cov-check disorder draws
    std::optional<Matrix> config_a; // cov-check configurations (N×κ)
    std::optional<Matrix> config_b;
};

struct GgBlock {
    int n = 2;
    std::string f = "trace_sq";
    std::optional<Theta> theta;
    GgBudget budget;
};

/// Parsed and validated run configuration.
struct RunConfig {
    std::optional<MixedModel> model;
    std::optional<SpinPrior> prior;
    std::optional<Path> path;
    std::optional<LambdaMatrix> lambda;
    std::optional<Matrix> d;
    std::optional<Vector> hull_weights;
    double eps = 0.0;
    bool has_eps = false;
    int levels = 2;
    EvalSpec eval;
    OptimizerSpec optimizer;
    RpcBlock rpc;
    SystemBlock system;
    PerturbationSpec perturbation;
    GgBlock gg;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output;
    std::string digest;             // FNV-1a of the config text
};

/// FNV-1a 64-bit, hex-encoded.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

namespace detail {

inline std::string where(const YAML::Node& node, const std::string& field) {
    std::ostringstream os;
    os << "field '" << field << "'";
    const YAML::Mark mk = node.Mark();
    if (mk.line >= 0) os << " (line " << mk.line + 1 << ", column " << mk.column + 1 << ")";
    return os.str();
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
    if (!node.IsScalar()) throw ValidationError(where(node, field) + ": expected a scalar");
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ValidationError(where(node, field) + ": cannot convert '" + node.Scalar() + "'");
    }
}

template <typename T>
T get(const YAML::Node& parent, const std::string& key, const std::string& prefix, T fallback) {
    const YAML::Node n = parent[key];
    if (!n) return fallback;
    return scalar<T>(n, prefix + key);
}

inline Vector vector_of(const YAML::Node& node, const std::string& field) {
    if (!node.IsSequence()) throw ValidationError(where(node, field) + ": expected a list of numbers");
    Vector v(static_cast<Eigen::Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = scalar<double>(node[i], field + "[" + std::to_string(i) + "]");
    return v;
}

/// Row-major nested list [[..], [..]].
inline Matrix matrix_of(const YAML::Node& node, const std::string& field) {
    if (!node.IsSequence() || node.size() == 0) throw ValidationError(where(node, field) + ": expected a list of rows");
    const auto rows = static_cast<Eigen::Index>(node.size());
    Eigen::Index cols = -1;
    Matrix m;
    for (std::size_t i = 0; i < node.size(); ++i) {
        const std::string rf = field + "[" + std::to_string(i) + "]";
        const Vector row = vector_of(node[i], rf);
        if (cols < 0) {
            cols = row.size();
            m.resize(rows, cols);
        } else if (row.size() != cols) {
            throw ValidationError(where(node[i], rf) + ": rows have different lengths");
        }
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

template <typename Fn>
auto with_field(const YAML::Node& node, const std::string& field, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        if (msg.rfind("field '", 0) == 0) throw;
        throw ValidationError(where(node, field) + ": " + msg);
    }
}

inline MixedModel parse_model(const YAML::Node& node) {
    if (!node.IsMap() || !node["kappa"]) throw ValidationError(where(node, "model") + ": model needs 'kappa'");
    const int kappa = scalar<int>(node["kappa"], "model.kappa");
    const YAML::Node coeffs = node["coefficients"];
    if (!coeffs || !coeffs.IsMap()) throw ValidationError(where(node, "model.coefficients") + ": expected a map p -> list");
    std::map<int, Vector> table;
    for (const auto& kv : coeffs) {
        const int p = scalar<int>(kv.first, "model.coefficients key");
        const std::string field = "model.coefficients." + std::to_string(p);
        Vector beta = kv.second.IsSequence() ? vector_of(kv.second, field)
                                             : Vector::Constant(kappa, scalar<double>(kv.second, field));
        table.emplace(p, std::move(beta));
    }
    return with_field(node, "model", [&] { return MixedModel(kappa, std::move(table)); });
}

inline SpinPrior parse_prior(const YAML::Node& node) {
    const double mass = get<double>(node, "mass", "prior.", 1.0);
    if (const YAML::Node preset = node["preset"]) {
        const std::string name = scalar<std::string>(preset, "prior.preset");
        const int kappa = get<int>(node, "kappa", "prior.", 1);
        return with_field(node, "prior", [&] {
            SpinPrior base = name == "ising"       ? SpinPrior::ising()
                             : name == "potts"     ? SpinPrior::potts(kappa)
                             : name == "hypercube" ? SpinPrior::hypercube(kappa)
                                                   : throw ValidationError("unknown preset '" + name +
                                                                           "' (ising, potts, hypercube)");
            return SpinPrior(base.atoms(), mass);
        });
    }
    const YAML::Node atoms = node["atoms"];
    if (!atoms || !atoms.IsSequence()) throw ValidationError(where(node, "prior.atoms") + ": expected a list of atoms");
    std::vector<Atom> list;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::string f = "prior.atoms[" + std::to_string(i) + "]";
        if (!atoms[i]["point"] || !atoms[i]["weight"])
            throw ValidationError(where(atoms[i], f) + ": atom needs 'point' and 'weight'");
        list.push_back({vector_of(atoms[i]["point"], f + ".point"), scalar<double>(atoms[i]["weight"], f + ".weight")});
    }
    return with_field(node, "prior", [&] { return SpinPrior(std::move(list), mass); });
}

inline Theta parse_theta(const YAML::Node& node, const std::string& field) {
    Theta th;
    th.p = get<int>(node, "p", field + ".", 1);
    const YAML::Node ns = node["n"];
    const YAML::Node ls = node["lambdas"];
    if (!ns || !ls) throw ValidationError(where(node, field) + ": theta needs 'n' and 'lambdas'");
    const Vector nv = vector_of(ns, field + ".n");
    for (Eigen::Index i = 0; i < nv.size(); ++i) th.n.push_back(static_cast<int>(nv(i)));
    if (!ls.IsSequence()) throw ValidationError(where(ls, field + ".lambdas") + ": expected a list of vectors");
    for (std::size_t i = 0; i < ls.size(); ++i)
        th.lambdas.push_back(vector_of(ls[i], field + ".lambdas[" + std::to_string(i) + "]"));
    return th;
}

inline Backend parse_backend(const std::string& s) {
    if (s == "quadrature") return Backend::Quadrature;
    if (s == "mc" || s == "monte_carlo") return Backend::MonteCarlo;
    throw ValidationError("unknown backend '" + s + "' (quadrature, mc)");
}

} // namespace detail

/// Parses YAML text. Syntax errors raise ParseError; invalid values raise
/// ValidationError naming the field and its line.
inline RunConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(std::string("config syntax error: ") + e.what());
    }
    if (!root.IsMap()) throw ParseError("config must be a mapping at the top level");
    using namespace detail;
    RunConfig cfg;
    cfg.digest = fnv1a_hex(text);
    if (const YAML::Node n = root["model"]) cfg.model = parse_model(n);
    if (const YAML::Node n = root["prior"]) cfg.prior = parse_prior(n);
    const int kappa = cfg.model ? cfg.model->kappa() : cfg.prior ? cfg.prior->kappa() : 1;
    if (cfg.model && cfg.prior && cfg.model->kappa() != cfg.prior->kappa())
        throw ValidationError(where(root["prior"], "prior") + ": atom dimension differs from model.kappa");

    if (const YAML::Node n = root["path"]) {
        const YAML::Node xs = n["x"];
        const YAML::Node gs = n["gammas"];
        if (!xs || !gs) throw ValidationError(where(n, "path") + ": path needs 'x' and 'gammas'");
        const Vector x = vector_of(xs, "path.x");
        if (!gs.IsSequence()) throw ValidationError(where(gs, "path.gammas") + ": expected a list of matrices");
        std::vector<Matrix> gammas;
        for (std::size_t i = 0; i < gs.size(); ++i) gammas.push_back(matrix_of(gs[i], "path.gammas[" + std::to_string(i) + "]"));
        cfg.path = with_field(n, "path", [&] {
            return Path(std::vector<double>(x.data(), x.data() + x.size()), std::move(gammas));
        });
    }
    if (const YAML::Node n = root["lambda"]) {
        const Vector c = vector_of(n, "lambda");
        cfg.lambda = with_field(n, "lambda", [&] { return LambdaMatrix(kappa, c); });
    }
    if (const YAML::Node n = root["D"]) {
        Matrix d = matrix_of(n, "D");
        with_field(n, "D", [&] { return GramMatrix(d); });
        cfg.d = std::move(d);
    }
    if (const YAML::Node n = root["hull_weights"]) cfg.hull_weights = vector_of(n, "hull_weights");
    if (const YAML::Node n = root["eps"]) {
        cfg.eps = scalar<double>(n, "eps");
        cfg.has_eps = true;
        if (!(cfg.eps >= 0.0)) throw ValidationError(where(n, "eps") + ": must be non-negative");
    }
    cfg.levels = get<int>(root, "levels", "", 2);
    if (cfg.levels < 1) throw ValidationError(where(root["levels"], "levels") + ": must be >= 1");
    cfg.seed = get<std::uint64_t>(root, "seed", "", 0);
    cfg.threads = get<int>(root, "threads", "", 1);
    cfg.output = get<std::string>(root, "output", "", "");

    if (const YAML::Node n = root["eval"]) {
        cfg.eval.backend = with_field(n, "eval.backend", [&] {
            return parse_backend(get<std::string>(n, "backend", "eval.", "quadrature"));
        });
        cfg.eval.nodes_per_level = get<int>(n, "nodes_per_level", "eval.", cfg.eval.nodes_per_level);
        cfg.eval.samples_per_level = get<int>(n, "samples_per_level", "eval.", cfg.eval.samples_per_level);
        cfg.eval.replications = get<int>(n, "replications", "eval.", cfg.eval.replications);
        cfg.eval.antithetic = get<bool>(n, "antithetic", "eval.", cfg.eval.antithetic);
        cfg.eval.dim_cap = get<int>(n, "dim_cap", "eval.", cfg.eval.dim_cap);
        cfg.eval.node_budget = get<double>(n, "node_budget", "eval.", cfg.eval.node_budget);
        if (cfg.eval.nodes_per_level < 1 || cfg.eval.samples_per_level < 1 || cfg.eval.replications < 2)
            throw ValidationError(where(n, "eval") + ": nodes and samples must be >= 1, replications >= 2");
    }
    if (const YAML::Node n = root["optimizer"]) {
        OptimizerSpec& o = cfg.optimizer;
        o.max_iter = get<int>(n, "max_iter", "optimizer.", o.max_iter);
        o.step = get<double>(n, "step", "optimizer.", o.step);
        o.multistarts = get<int>(n, "multistarts", "optimizer.", o.multistarts);
        o.grad_tol = get<double>(n, "grad_tol", "optimizer.", o.grad_tol);
        o.fd_step = get<double>(n, "fd_step", "optimizer.", o.fd_step);
        o.outer_iters = get<int>(n, "outer_iters", "optimizer.", o.outer_iters);
        o.block_iters = get<int>(n, "block_iters", "optimizer.", o.block_iters);
        o.path_iters = get<int>(n, "path_iters", "optimizer.", o.path_iters);
        o.path_starts = get<int>(n, "path_starts", "optimizer.", o.path_starts);
        o.value_tol = get<double>(n, "value_tol", "optimizer.", o.value_tol);
        if (o.max_iter < 1 || !(o.step > 0.0) || !(o.fd_step > 0.0))
            throw ValidationError(where(n, "optimizer") + ": max_iter >= 1, step > 0 and fd_step > 0 required");
    }
    if (const YAML::Node n = root["rpc"]) {
        cfg.rpc.fanout = get<int>(n, "fanout", "rpc.", cfg.rpc.fanout);
        cfg.rpc.replications = get<int>(n, "replications", "rpc.", cfg.rpc.replications);
        cfg.rpc.m = get<int>(n, "M", "rpc.", cfg.rpc.m);
        if (cfg.rpc.fanout < 2 || cfg.rpc.replications < 2 || cfg.rpc.m < 1)
            throw ValidationError(where(n, "rpc") + ": fanout >= 2, replications >= 2, M >= 1 required");
    }
    if (const YAML::Node n = root["system"]) {
        SystemBlock& s = cfg.system;
        if (const YAML::Node nn = n["N"]) {
            if (nn.IsSequence()) {
                const Vector v = vector_of(nn, "system.N");
                for (Eigen::Index i = 0; i < v.size(); ++i) s.n_list.push_back(static_cast<int>(v(i)));
                s.n = s.n_list.front();
            } else {
                s.n = scalar<int>(nn, "system.N");
            }
        }
        s.n_disorder = get<int>(n, "n_disorder", "system.", s.n_disorder);
        s.draws = get<int>(n, "draws", "system.", s.draws);
        if (const YAML::Node a = n["config_a"]) s.config_a = matrix_of(a, "system.config_a");
        if (const YAML::Node b = n["config_b"]) s.config_b = matrix_of(b, "system.config_b");
        if (s.n < 1 || s.n_disorder < 1 || s.draws < 2)
            throw ValidationError(where(n, "system") + ": N >= 1, n_disorder >= 1, draws >= 2 required");
    }
    if (const YAML::Node n = root["perturbation"]) {
        PerturbationSpec& p = cfg.perturbation;
        p.gamma_s = get<double>(n, "gamma_s", "perturbation.", p.gamma_s);
        p.offset = get<int>(n, "offset", "perturbation.", p.offset);
        p.enabled = get<bool>(n, "enabled", "perturbation.", p.enabled);
        if (const YAML::Node ts = n["thetas"]) {
            for (std::size_t i = 0; i < ts.size(); ++i)
                p.thetas.push_back(parse_theta(ts[i], "perturbation.thetas[" + std::to_string(i) + "]"));
        }
        with_field(n, "perturbation", [&] {
            validate_perturbation(p, kappa);
            return 0;
        });
    }
    if (const YAML::Node n = root["gg"]) {
        cfg.gg.n = get<int>(n, "n", "gg.", cfg.gg.n);
        cfg.gg.f = get<std::string>(n, "f", "gg.", cfg.gg.f);
        cfg.gg.budget.disorder_draws = get<int>(n, "disorder_draws", "gg.", cfg.gg.budget.disorder_draws);
        cfg.gg.budget.u_draws = get<int>(n, "u_draws", "gg.", cfg.gg.budget.u_draws);
        if (const YAML::Node t = n["theta"]) {
            cfg.gg.theta = parse_theta(t, "gg.theta");
            with_field(t, "gg.theta", [&] {
                validate_theta(*cfg.gg.theta, kappa);
                return 0;
            });
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ParseError("cannot open config file '" + file + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace vecspin::cli
