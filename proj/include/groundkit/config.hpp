#pragma once
// JSON configuration with the namespaces geometry / category / structure /
// weights / kl / curriculum / parser. Every key is optional; absent keys keep
// the published defaults.
//
// {
//   "geometry":  {"tau1":0.5, "tau2":0.7, "kappa":0.03, "alpha1":0.3, "alpha2":0.5,
//                 "alpha_c":0.02, "sigma_c":0.2, "alpha_oob":0.05, "strict_oob":false},
//   "category":  {"tau_g":0.3, "gate":0.5, "eta":0.8, "rho_l":0.4, "rho_s":0.3},
//   "structure": {"gamma_tag":0.25, "gamma_key":0.75, "gamma_min":-0.5},
//   "weights":   {"p_anneal":0.6,
//                 "stage1":{"start":{"w_iou":..,"w_cat":..,"w_fmt":..,"w_struct":..}, "late":{..}},
//                 "stage2":{...}},
//   "kl":        {"beta0":0.02, "beta_min":5e-4, "beta_max":5e-2,
//                 "stage1":{"kappa_tgt":0.13,"kappa_tol":0.03,"mu_up":1.5,"mu_down":0.66},
//                 "stage2":{...}},
//   "curriculum":{"stage1":[0.7,0.3,0.0], "stage2":[0.2,0.6,0.2]},
//   "parser":    {"name_keys":[...], "box_keys":[...]}
// }

#include <array>
#include <fstream>
#include <string>

#include "json.hpp"

#include "groundkit/error.hpp"
#include "groundkit/grpo.hpp"
#include "groundkit/reward.hpp"

namespace groundkit {

struct EngineConfig {
    RewardParams reward;
    std::array<WeightSchedule, 2> schedules{WeightSchedule::stage1(), WeightSchedule::stage2()};
    std::array<KlSchedulerState, 2> kl{KlSchedulerState::stage1(), KlSchedulerState::stage2()};
    std::array<CurriculumMixture, 2> curriculum{CurriculumMixture::stage1(), CurriculumMixture::stage2()};

    const WeightSchedule& schedule(int stage) const {
        if (stage != 1 && stage != 2) throw ValidationError("stage", "stage must be 1 or 2");
        return schedules[static_cast<std::size_t>(stage - 1)];
    }
    const KlSchedulerState& kl_for(int stage) const {
        if (stage != 1 && stage != 2) throw ValidationError("stage", "stage must be 1 or 2");
        return kl[static_cast<std::size_t>(stage - 1)];
    }

    void validate() const {
        reward.validate();
        for (const auto& s : schedules) s.validate();
        for (const auto& k : kl) k.validate();
        for (const auto& c : curriculum) c.validate();
    }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst, const std::string& ns) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError("config." + ns + "." + key, "wrong type");
    }
}

inline void read_weights(const nlohmann::json& j, RewardWeights& w, const std::string& ns) {
    read_opt(j, "w_iou", w.iou, ns);
    read_opt(j, "w_cat", w.cat, ns);
    read_opt(j, "w_fmt", w.fmt, ns);
    read_opt(j, "w_struct", w.structure, ns);
}

} // namespace detail

inline EngineConfig config_from_json(const nlohmann::json& j) {
    using detail::read_opt;
    if (!j.is_object()) throw ParseError("config", "must be a JSON object");
    EngineConfig c;
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        auto& p = c.reward.geometry;
        read_opt(g, "tau1", p.tau1, "geometry");
        read_opt(g, "tau2", p.tau2, "geometry");
        read_opt(g, "kappa", p.kappa, "geometry");
        read_opt(g, "alpha1", p.alpha1, "geometry");
        read_opt(g, "alpha2", p.alpha2, "geometry");
        read_opt(g, "alpha_c", p.alpha_c, "geometry");
        read_opt(g, "sigma_c", p.sigma_c, "geometry");
        read_opt(g, "alpha_oob", p.alpha_oob, "geometry");
        read_opt(g, "strict_oob", p.strict_oob, "geometry");
    }
    if (j.contains("category")) {
        const auto& g = j["category"];
        auto& p = c.reward.category;
        read_opt(g, "tau_g", p.tau_g, "category");
        read_opt(g, "gate", p.gate, "category");
        read_opt(g, "eta", p.eta, "category");
        read_opt(g, "rho_l", p.rho_l, "category");
        read_opt(g, "rho_s", p.rho_s, "category");
    }
    if (j.contains("structure")) {
        const auto& g = j["structure"];
        auto& p = c.reward.structure;
        read_opt(g, "gamma_tag", p.gamma_tag, "structure");
        read_opt(g, "gamma_key", p.gamma_key, "structure");
        read_opt(g, "gamma_min", p.gamma_min, "structure");
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        double p_anneal = c.schedules[0].p_anneal;
        read_opt(w, "p_anneal", p_anneal, "weights");
        for (std::size_t s = 0; s < 2; ++s) {
            c.schedules[s].p_anneal = p_anneal;
            const std::string key = "stage" + std::to_string(s + 1);
            if (!w.contains(key)) continue;
            const auto& st = w[key];
            if (st.contains("start")) detail::read_weights(st["start"], c.schedules[s].start, "weights." + key + ".start");
            if (st.contains("late")) detail::read_weights(st["late"], c.schedules[s].late, "weights." + key + ".late");
            else if (st.contains("start")) c.schedules[s].late = c.schedules[s].start;
        }
    }
    if (j.contains("kl")) {
        const auto& k = j["kl"];
        for (std::size_t s = 0; s < 2; ++s) {
            auto& st = c.kl[s];
            read_opt(k, "beta0", st.beta, "kl");
            read_opt(k, "beta_min", st.beta_min, "kl");
            read_opt(k, "beta_max", st.beta_max, "kl");
            const std::string key = "stage" + std::to_string(s + 1);
            if (!k.contains(key)) continue;
            const auto& g = k[key];
            read_opt(g, "kappa_tgt", st.kappa_tgt, "kl." + key);
            read_opt(g, "kappa_tol", st.kappa_tol, "kl." + key);
            read_opt(g, "mu_up", st.mu_up, "kl." + key);
            read_opt(g, "mu_down", st.mu_down, "kl." + key);
        }
    }
    if (j.contains("curriculum")) {
        const auto& cu = j["curriculum"];
        read_opt(cu, "stage1", c.curriculum[0].p, "curriculum");
        read_opt(cu, "stage2", c.curriculum[1].p, "curriculum");
    }
    if (j.contains("parser")) {
        read_opt(j["parser"], "name_keys", c.reward.keys.name_keys, "parser");
        read_opt(j["parser"], "box_keys", c.reward.keys.box_keys, "parser");
    }
    c.validate();
    return c;
}

inline EngineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError(path, "not valid JSON");
    return config_from_json(j);
}

} // namespace groundkit
