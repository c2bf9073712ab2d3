#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "vecspin/path.hpp"
#include "vecspin/prior.hpp"
#include "vecspin/rpc.hpp"

namespace vecspin::cli {

using json = nlohmann::ordered_json;

inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

/// Row-major nested list.
inline json to_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline json to_json(const Path& p) {
    json gammas = json::array();
    for (const Matrix& g : p.gammas()) gammas.push_back(to_json(g));
    return json{{"x", p.xs()}, {"gammas", gammas}, {"endpoint", to_json(p.endpoint())}};
}

inline json to_json(const LambdaMatrix& l) { return to_json(l.coeffs()); }

inline json to_json(const ModifierMatrix& m) {
    return json{{"A", to_json(m.a)},           {"R", to_json(m.source_overlap)}, {"D_eps", to_json(m.target)},
                {"epsilon", m.epsilon},        {"m", m.m},                       {"in_ball", m.in_ball},
                {"residual", m.residual},      {"distortion", m.distortion}};
}

inline json to_json(const CascadeTree& t) {
    return json{{"r", t.r}, {"x", t.x}, {"fanouts", t.fanouts}, {"weights", t.weights}};
}

struct Check {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double tol = 0.0;
    bool pass = false;
};

/// Schema-stable report: {command, config_digest, seed, value, std_error,
/// components, checks, runtime_ms}.
struct Report {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    double value = 0.0;
    double std_error = 0.0;
    json components = json::object();
    std::vector<Check> checks;
    double runtime_ms = 0.0;

    void check(std::string name, double lhs, double rhs, double tol) {
        checks.push_back({std::move(name), lhs, rhs, tol, std::abs(lhs - rhs) <= tol});
    }

    void check_le(std::string name, double lhs, double rhs, double tol) {
        checks.push_back({std::move(name), lhs, rhs, tol, lhs <= rhs + tol});
    }

    bool all_pass() const {
        for (const Check& c : checks)
            if (!c.pass) return false;
        return true;
    }

    json to_json() const {
        json cs = json::array();
        for (const Check& c : checks)
            cs.push_back(json{{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"tol", c.tol}, {"pass", c.pass}});
        return json{{"command", command},       {"config_digest", config_digest}, {"seed", seed},
                    {"value", value},           {"std_error", std_error},         {"components", components},
                    {"checks", cs},             {"runtime_ms", runtime_ms}};
    }
};

} // namespace vecspin::cli
