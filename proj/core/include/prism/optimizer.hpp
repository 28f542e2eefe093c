#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/params.hpp"

namespace prism {

struct AdamWConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.1f;
};

// AdamW with decoupled weight decay: the decay term is applied directly to
// the parameter, scaled by lr, independent of the moment estimates.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {
        if (cfg_.lr <= 0.0f) {
            throw ConfigError("adamw: lr must be positive");
        }
    }

    // One bias-corrected update of every parameter that has a gradient entry.
    void step(ParamStore<float>& params,
              const std::map<std::string, std::vector<float>>& grads) {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), step_count_);
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), step_count_);
        for (auto& [name, param] : params) {
            auto git = grads.find(name);
            if (git == grads.end()) {
                continue;
            }
            const std::vector<float>& g = git->second;
            std::vector<float>& p = param.mutable_values();
            if (g.size() != p.size()) {
                throw ShapeError(strformat("adamw: grad size %zu != param size %zu for '%s'",
                                           g.size(), p.size(), name.c_str()));
            }
            State& st = state(name, p.size());
            for (size_t i = 0; i < p.size(); ++i) {
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0f - cfg_.beta1) * g[i];
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
                const float m_hat = static_cast<float>(st.m[i] / bc1);
                const float v_hat = static_cast<float>(st.v[i] / bc2);
                p[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                   cfg_.weight_decay * p[i]);
            }
        }
    }

    int64_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }

    // Serialization hooks for checkpointing.
    struct State {
        std::vector<float> m;
        std::vector<float> v;
    };
    std::map<std::string, State>& states() { return states_; }
    const std::map<std::string, State>& states() const { return states_; }
    void set_step_count(int64_t t) { step_count_ = t; }

private:
    State& state(const std::string& name, size_t n) {
        auto it = states_.find(name);
        if (it == states_.end()) {
            it = states_.emplace(name, State{std::vector<float>(n, 0.0f),
                                            std::vector<float>(n, 0.0f)}).first;
        }
        return it->second;
    }

    AdamWConfig cfg_;
    int64_t step_count_ = 0;
    std::map<std::string, State> states_;
};

}  // namespace prism
