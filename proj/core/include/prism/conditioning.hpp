#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "prism/codec.hpp"
#include "prism/modality.hpp"
#include "prism/rng.hpp"

namespace prism {

// Binary token mask: 1 = conditioned/keep, 0 = free/inpaint.
using TokenMask = std::vector<uint8_t>;

struct ConditionEntry {
    LatentGrid clean;
    std::optional<TokenMask> mask;  // absent = fully conditioned
};

// The set of conditioning modalities C, their clean latents, optional token
// masks, the guidance weight, and the prompt.
struct ConditionSet {
    std::map<Modality, ConditionEntry> members;
    std::optional<float> guidance;  // unset = use the sampler default
    std::vector<int> prompt_ids;    // empty = NULL prompt

    bool has(Modality m) const { return members.count(m) != 0; }
    size_t size() const { return members.size(); }
};

// Per-modality ground-truth availability of a training sample.
struct AvailabilityFlags {
    std::array<bool, kNumModalities> available{};
    std::string source;

    bool is_available(Modality m) const { return available[static_cast<size_t>(m)]; }
    void set(Modality m, bool v) { available[static_cast<size_t>(m)] = v; }
};

// Throws unless the condition set leaves something to generate for a model
// over `modalities`: conditioning every modality with no masked-out token is
// invalid.
void validate_condition_set(const ConditionSet& cond, const std::vector<Modality>& modalities,
                            int expected_tokens);

// Replaces tokens of conditioned modalities by their clean counterparts.
// Mask-0 tokens and non-members are left untouched. Idempotent.
MultiModalLatent apply_override(const MultiModalLatent& x_t, const ConditionSet& cond);

// Uniform draw over subsets of the available modalities, excluding the
// complete modality set; the empty set is drawn with probability at least
// `empty_floor` to protect pure text-to-RGBX training.
std::vector<Modality> sample_condition_subset(const AvailabilityFlags& flags,
                                              const std::vector<Modality>& modalities,
                                              RngStream& rng, double empty_floor = 0.25);

// Replaces clean tokens under mask-0 cells with fresh Gaussian noise; those
// cells are treated as free during sampling and training.
ConditionSet make_inpaint_noise(const ConditionSet& cond, RngStream& rng);

// Token mask from a pixel mask: a token is masked out (0) if any covered
// pixel is masked out.
TokenMask token_mask_from_pixels(const std::vector<uint8_t>& pixel_mask, int height, int width,
                                 int patch_size);

// Random training mask on the token grid: a rectangle or a free-form stroke
// whose masked-out area covers [min_cover, max_cover] of the grid.
TokenMask random_token_mask(int grid_h, int grid_w, RngStream& rng, double min_cover = 0.1,
                            double max_cover = 0.6);

// Fraction of zeros in a mask.
double mask_hole_fraction(const TokenMask& mask);

}  // namespace prism
