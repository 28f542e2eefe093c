#pragma once

#include <vector>

#include "prism/codec.hpp"
#include "prism/rng.hpp"

namespace prism {

// Variance-preserving noise schedule: a_t^2 + sigma_t^2 = 1 for every t,
// a_0 = 1, sigma_0 = 0, a monotone non-increasing.
struct NoiseSchedule {
    int t_steps = 0;
    std::vector<float> a;      // size t_steps + 1
    std::vector<float> sigma;  // size t_steps + 1

    float alpha_bar(int t) const { return a[static_cast<size_t>(t)] * a[static_cast<size_t>(t)]; }
};

// Cosine alpha-bar schedule, floored so a_T stays strictly positive.
NoiseSchedule make_cosine_schedule(int t_steps);

// x_t = a_t * x0 + sigma_t * eps, elementwise across all modality grids.
MultiModalLatent add_noise(const MultiModalLatent& x0, const MultiModalLatent& eps,
                           const NoiseSchedule& schedule, int t);

// Fills every grid of `like` with fresh standard normal draws.
MultiModalLatent gaussian_like(const MultiModalLatent& like, RngStream& rng);

// Classifier-free guidance: omega * eps_cond + (1 - omega) * eps_uncond.
MultiModalLatent cfg_combine(const MultiModalLatent& eps_cond, const MultiModalLatent& eps_uncond,
                             float omega);
float cfg_combine_scalar(float eps_cond, float eps_uncond, float omega);

// One DDIM update from level t to level t_prev. eta = 0 is fully
// deterministic; eta > 0 injects fresh noise from `rng`.
MultiModalLatent ddim_step(const MultiModalLatent& x_t, const MultiModalLatent& eps_hat,
                           const NoiseSchedule& schedule, int t, int t_prev, float eta,
                           RngStream& rng);

// Descending timestep sequence [T, ..., 0] with a uniform stride,
// num_steps + 1 entries.
std::vector<int> inference_timesteps(int t_steps, int num_steps);

}  // namespace prism
