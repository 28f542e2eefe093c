#include "prism/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "prism/errors.hpp"

namespace prism {
namespace {

constexpr double kPi = 3.14159265358979323846;
// Floor on alpha_bar keeps a_T > 0 so the DDIM x0 estimate stays defined.
constexpr double kAlphaBarFloor = 1e-4;

void require_same_layout(const MultiModalLatent& a, const MultiModalLatent& b, const char* where) {
    if (a.grids.size() != b.grids.size()) {
        throw ShapeError(strformat("%s: %zu vs %zu modality grids", where, a.grids.size(),
                                   b.grids.size()));
    }
    for (size_t i = 0; i < a.grids.size(); ++i) {
        if (!a.grids[i].same_dims(b.grids[i])) {
            throw ShapeError(strformat("%s: grid %zu dims mismatch", where, i));
        }
    }
}

}  // namespace

NoiseSchedule make_cosine_schedule(int t_steps) {
    if (t_steps < 2) {
        throw ConfigError(strformat("schedule: t_steps %d < 2", t_steps));
    }
    NoiseSchedule s;
    s.t_steps = t_steps;
    s.a.resize(static_cast<size_t>(t_steps) + 1);
    s.sigma.resize(static_cast<size_t>(t_steps) + 1);
    const double shift = 0.008;
    auto f = [&](double t) {
        const double x = (t / t_steps + shift) / (1.0 + shift) * kPi / 2.0;
        const double c = std::cos(x);
        return c * c;
    };
    const double f0 = f(0.0);
    for (int t = 0; t <= t_steps; ++t) {
        double abar = t == 0 ? 1.0 : std::max(f(t) / f0, kAlphaBarFloor);
        s.a[static_cast<size_t>(t)] = static_cast<float>(std::sqrt(abar));
        s.sigma[static_cast<size_t>(t)] = static_cast<float>(std::sqrt(1.0 - abar));
    }
    return s;
}

MultiModalLatent add_noise(const MultiModalLatent& x0, const MultiModalLatent& eps,
                           const NoiseSchedule& schedule, int t) {
    require_same_layout(x0, eps, "add_noise");
    if (t < 0 || t > schedule.t_steps) {
        throw ConfigError(strformat("add_noise: t=%d outside [0, %d]", t, schedule.t_steps));
    }
    const float a = schedule.a[static_cast<size_t>(t)];
    const float sig = schedule.sigma[static_cast<size_t>(t)];
    MultiModalLatent out = x0;
    for (size_t g = 0; g < out.grids.size(); ++g) {
        const auto& e = eps.grids[g].tokens;
        auto& v = out.grids[g].tokens;
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = a * v[i] + sig * e[i];
        }
    }
    return out;
}

MultiModalLatent gaussian_like(const MultiModalLatent& like, RngStream& rng) {
    MultiModalLatent out = like;
    for (auto& grid : out.grids) {
        rng.fill_normal(std::span<float>(grid.tokens));
    }
    return out;
}

float cfg_combine_scalar(float eps_cond, float eps_uncond, float omega) {
    return omega * eps_cond + (1.0f - omega) * eps_uncond;
}

MultiModalLatent cfg_combine(const MultiModalLatent& eps_cond, const MultiModalLatent& eps_uncond,
                             float omega) {
    require_same_layout(eps_cond, eps_uncond, "cfg_combine");
    MultiModalLatent out = eps_cond;
    for (size_t g = 0; g < out.grids.size(); ++g) {
        const auto& u = eps_uncond.grids[g].tokens;
        auto& v = out.grids[g].tokens;
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = cfg_combine_scalar(v[i], u[i], omega);
        }
    }
    return out;
}

MultiModalLatent ddim_step(const MultiModalLatent& x_t, const MultiModalLatent& eps_hat,
                           const NoiseSchedule& schedule, int t, int t_prev, float eta,
                           RngStream& rng) {
    require_same_layout(x_t, eps_hat, "ddim_step");
    if (t_prev >= t) {
        throw ConfigError(strformat("ddim_step: t_prev=%d must be < t=%d", t_prev, t));
    }
    const float a_t = schedule.a[static_cast<size_t>(t)];
    const float sig_t = schedule.sigma[static_cast<size_t>(t)];
    const float a_prev = schedule.a[static_cast<size_t>(t_prev)];
    const float sig_prev = schedule.sigma[static_cast<size_t>(t_prev)];
    if (a_t == 0.0f) {
        throw NumericalError("ddim_step: a_t is zero; the schedule must keep a_T > 0");
    }

    // eta-scaled stochasticity (Song et al. DDIM sigma).
    float tau = 0.0f;
    if (eta > 0.0f && sig_t > 0.0f && sig_prev > 0.0f) {
        const float abar_t = a_t * a_t;
        const float abar_prev = a_prev * a_prev;
        tau = eta * (sig_prev / sig_t) * std::sqrt(std::max(0.0f, 1.0f - abar_t / abar_prev));
        tau = std::min(tau, sig_prev);
    }
    const float dir = std::sqrt(std::max(0.0f, sig_prev * sig_prev - tau * tau));

    MultiModalLatent out = x_t;
    for (size_t g = 0; g < out.grids.size(); ++g) {
        const auto& eh = eps_hat.grids[g].tokens;
        auto& v = out.grids[g].tokens;
        for (size_t i = 0; i < v.size(); ++i) {
            const float x0_pred = (v[i] - sig_t * eh[i]) / a_t;
            float next = a_prev * x0_pred + dir * eh[i];
            if (tau > 0.0f) {
                next += tau * static_cast<float>(rng.normal());
            }
            v[i] = next;
        }
    }
    return out;
}

std::vector<int> inference_timesteps(int t_steps, int num_steps) {
    if (num_steps < 1 || num_steps > t_steps) {
        throw ConfigError(strformat("sampler: num_inference_steps=%d outside [1, %d]", num_steps,
                                    t_steps));
    }
    std::vector<int> ts(static_cast<size_t>(num_steps) + 1);
    for (int i = 0; i <= num_steps; ++i) {
        ts[static_cast<size_t>(i)] =
            static_cast<int>(std::llround(static_cast<double>(t_steps) * (num_steps - i) / num_steps));
    }
    return ts;
}

}  // namespace prism
