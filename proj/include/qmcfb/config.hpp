#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "qmcfb/averaging.hpp"
#include "qmcfb/errors.hpp"
#include "qmcfb/spatial_model.hpp"

namespace qmcfb {

using Json = nlohmann::json;

enum class StudyKind { riccati_check, oracle_check, qmc_rate, mc_rate, truncation, propagation, derivative_decay, points };

struct QmcBlock {
    std::string method = "shifted";  // shifted | folded | interlaced | mc | lattice (points only)
    std::vector<std::int64_t> N_list{31, 61, 127, 251, 509, 1021, 2039};
    int s = 16;
    int alpha = 2;
    int R = 16;
    std::uint64_t seed = 20240601;
    /// Reference rule: interlaced order alpha_ref with 2^m_ref points.
    int m_ref = 15;
    int alpha_ref = 2;
};

struct TruncationBlock {
    std::vector<int> s_list{4, 8, 16, 32};
    int s_ref = 64;
    std::int64_t N = 1021;
};

struct DecayBlock {
    std::vector<int> j_list{2, 4, 8, 16};
    double delta = 1e-3;
};

struct PropagationBlock {
    std::vector<double> c_list{1e-3, 1e-2, 1e-1};
    int points = 5;
};

struct ExperimentConfig {
    ModelConfig model;
    QmcBlock qmc;
    StudyKind study = StudyKind::qmc_rate;
    std::string output;
    TruncationBlock truncation;
    DecayBlock decay;
    PropagationBlock propagation;
};

inline const char* study_name(StudyKind k) {
    switch (k) {
        case StudyKind::riccati_check: return "riccati-check";
        case StudyKind::oracle_check: return "oracle-check";
        case StudyKind::qmc_rate: return "qmc-rate";
        case StudyKind::mc_rate: return "mc-rate";
        case StudyKind::truncation: return "truncation";
        case StudyKind::propagation: return "propagation";
        case StudyKind::derivative_decay: return "derivative-decay";
        case StudyKind::points: return "points";
    }
    return "?";
}

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ValidationError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline ModelConfig parse_model(const Json& j) {
    detail::reject_unknown(j, {"n", "T", "nt", "a0", "cbar", "qdec", "smax", "actuators", "q_obs", "p_ter", "scenario"}, "model");
    ModelConfig m;
    detail::read(j, "n", m.n, "model");
    detail::read(j, "T", m.T, "model");
    detail::read(j, "nt", m.nt, "model");
    detail::read(j, "a0", m.a0, "model");
    detail::read(j, "cbar", m.cbar, "model");
    detail::read(j, "qdec", m.qdec, "model");
    detail::read(j, "smax", m.smax, "model");
    detail::read(j, "q_obs", m.q_obs, "model");
    detail::read(j, "p_ter", m.p_ter, "model");
    if (j.contains("actuators")) {
        std::vector<std::vector<double>> raw;
        detail::read(j, "actuators", raw, "model");
        m.actuators.clear();
        for (const auto& iv : raw) {
            if (iv.size() != 2) throw ValidationError("model.actuators: each interval needs [left, right]");
            m.actuators.push_back({iv[0], iv[1]});
        }
    }
    if (j.contains("scenario")) {
        std::string sc;
        detail::read(j, "scenario", sc, "model");
        if (sc == "homogeneous") m.scenario = Scenario::homogeneous;
        else if (sc == "tracking") m.scenario = Scenario::tracking;
        else throw ValidationError("model.scenario: expected 'homogeneous' or 'tracking', got '" + sc + "'");
    }
    if (m.n < 2) throw ValidationError("model.n must be >= 2");
    if (m.nt < 2) throw ValidationError("model.nt must be >= 2");
    if (!(m.T > 0.0)) throw ValidationError("model.T must be positive");
    if (m.smax < 1) throw ValidationError("model.smax must be >= 1");
    return m;
}

inline Json model_to_json(const ModelConfig& m) {
    Json acts = Json::array();
    for (const auto& iv : m.actuators) acts.push_back({iv.left, iv.right});
    return {{"n", m.n}, {"T", m.T}, {"nt", m.nt}, {"a0", m.a0}, {"cbar", m.cbar}, {"qdec", m.qdec},
            {"smax", m.smax}, {"actuators", acts}, {"q_obs", m.q_obs}, {"p_ter", m.p_ter},
            {"scenario", m.scenario == Scenario::tracking ? "tracking" : "homogeneous"}};
}

inline ExperimentConfig parse_config(const Json& j) {
    detail::reject_unknown(j, {"model", "qmc", "study", "output", "truncation", "decay", "propagation"}, "config");
    ExperimentConfig cfg;
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    if (j.contains("qmc")) {
        const Json& q = j.at("qmc");
        detail::reject_unknown(q, {"method", "N", "N_list", "s", "alpha", "R", "seed", "m_ref", "alpha_ref"}, "qmc");
        detail::read(q, "method", cfg.qmc.method, "qmc");
        if (q.contains("N") && q.contains("N_list")) throw ValidationError("qmc: give either N or N_list, not both");
        if (q.contains("N")) {
            std::int64_t N = 0;
            detail::read(q, "N", N, "qmc");
            cfg.qmc.N_list = {N};
        }
        detail::read(q, "N_list", cfg.qmc.N_list, "qmc");
        detail::read(q, "s", cfg.qmc.s, "qmc");
        detail::read(q, "alpha", cfg.qmc.alpha, "qmc");
        detail::read(q, "R", cfg.qmc.R, "qmc");
        detail::read(q, "seed", cfg.qmc.seed, "qmc");
        detail::read(q, "m_ref", cfg.qmc.m_ref, "qmc");
        detail::read(q, "alpha_ref", cfg.qmc.alpha_ref, "qmc");
        static const std::set<std::string> methods{"shifted", "folded", "interlaced", "mc", "lattice"};
        if (!methods.count(cfg.qmc.method)) throw ValidationError("qmc.method: unknown method '" + cfg.qmc.method + "'");
        if (cfg.qmc.N_list.empty()) throw ValidationError("qmc.N_list must not be empty");
        for (auto N : cfg.qmc.N_list)
            if (N < 1) throw ValidationError("qmc.N_list entries must be positive");
        if (cfg.qmc.s < 1) throw ValidationError("qmc.s must be >= 1");
        if (cfg.qmc.R < 1) throw ValidationError("qmc.R must be >= 1");
    }
    if (j.contains("study")) {
        std::string st;
        detail::read(j, "study", st, "config");
        bool found = false;
        for (auto k : {StudyKind::riccati_check, StudyKind::oracle_check, StudyKind::qmc_rate, StudyKind::mc_rate,
                       StudyKind::truncation, StudyKind::propagation, StudyKind::derivative_decay, StudyKind::points}) {
            if (st == study_name(k)) { cfg.study = k; found = true; }
        }
        if (!found) throw ValidationError("study: unknown study kind '" + st + "'");
    }
    detail::read(j, "output", cfg.output, "config");
    if (j.contains("truncation")) {
        const Json& t = j.at("truncation");
        detail::reject_unknown(t, {"s_list", "s_ref", "N"}, "truncation");
        detail::read(t, "s_list", cfg.truncation.s_list, "truncation");
        detail::read(t, "s_ref", cfg.truncation.s_ref, "truncation");
        detail::read(t, "N", cfg.truncation.N, "truncation");
    }
    if (j.contains("decay")) {
        const Json& d = j.at("decay");
        detail::reject_unknown(d, {"j_list", "delta"}, "decay");
        detail::read(d, "j_list", cfg.decay.j_list, "decay");
        detail::read(d, "delta", cfg.decay.delta, "decay");
    }
    if (j.contains("propagation")) {
        const Json& p = j.at("propagation");
        detail::reject_unknown(p, {"c_list", "points"}, "propagation");
        detail::read(p, "c_list", cfg.propagation.c_list, "propagation");
        detail::read(p, "points", cfg.propagation.points, "propagation");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file '" + path + "'");
    Json j;
    try {
        j = Json::parse(is);
    } catch (const Json::exception& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

/// Normalized form with every default filled in; keys are emitted sorted.
inline Json config_to_json(const ExperimentConfig& c) {
    return {{"model", model_to_json(c.model)},
            {"qmc",
             {{"method", c.qmc.method}, {"N_list", c.qmc.N_list}, {"s", c.qmc.s}, {"alpha", c.qmc.alpha},
              {"R", c.qmc.R}, {"seed", c.qmc.seed}, {"m_ref", c.qmc.m_ref}, {"alpha_ref", c.qmc.alpha_ref}}},
            {"study", study_name(c.study)},
            {"output", c.output},
            {"truncation", {{"s_list", c.truncation.s_list}, {"s_ref", c.truncation.s_ref}, {"N", c.truncation.N}}},
            {"decay", {{"j_list", c.decay.j_list}, {"delta", c.decay.delta}}},
            {"propagation", {{"c_list", c.propagation.c_list}, {"points", c.propagation.points}}}};
}

inline std::string sha256_hex(const std::string& text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest computation failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(config_to_json(c).dump()); }

/// Cache key for a reference mean: depends on the model and the reference rule only.
inline std::string reference_key(const ModelConfig& m, int s, int m_ref, int alpha_ref) {
    const Json j{{"model", model_to_json(m)}, {"s", s}, {"m_ref", m_ref}, {"alpha_ref", alpha_ref}, {"kind", "reference-mean"}};
    return sha256_hex(j.dump());
}

}  // namespace qmcfb
