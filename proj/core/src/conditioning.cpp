#include "prism/conditioning.hpp"

#include <algorithm>

#include "prism/errors.hpp"

namespace prism {

void validate_condition_set(const ConditionSet& cond, const std::vector<Modality>& modalities,
                            int expected_tokens) {
    bool any_free = false;
    for (const Modality m : modalities) {
        auto it = cond.members.find(m);
        if (it == cond.members.end()) {
            any_free = true;
            continue;
        }
        const ConditionEntry& entry = it->second;
        if (entry.clean.token_count() != expected_tokens) {
            throw ShapeError(strformat("conditioning: %s grid has %d tokens, expected %d",
                                       std::string(modality_name(m)).c_str(),
                                       entry.clean.token_count(), expected_tokens));
        }
        if (entry.mask) {
            if (static_cast<int>(entry.mask->size()) != expected_tokens) {
                throw ShapeError(strformat("conditioning: %s mask has %zu cells, expected %d",
                                           std::string(modality_name(m)).c_str(),
                                           entry.mask->size(), expected_tokens));
            }
            for (uint8_t v : *entry.mask) {
                if (v == 0) {
                    any_free = true;
                    break;
                }
            }
        }
    }
    for (const auto& [m, entry] : cond.members) {
        if (std::find(modalities.begin(), modalities.end(), m) == modalities.end()) {
            throw ConfigError(strformat("conditioning: %s is not generated by this model",
                                        std::string(modality_name(m)).c_str()));
        }
    }
    if (!any_free) {
        throw ConfigError("conditioning: nothing to generate (every modality fully conditioned)");
    }
}

MultiModalLatent apply_override(const MultiModalLatent& x_t, const ConditionSet& cond) {
    MultiModalLatent out = x_t;
    for (const auto& [m, entry] : cond.members) {
        const int idx = out.index_of(m);
        if (idx < 0) {
            continue;
        }
        LatentGrid& grid = out.grids[static_cast<size_t>(idx)];
        if (!grid.same_dims(entry.clean)) {
            throw ShapeError(strformat("apply_override: %s grid dims mismatch",
                                       std::string(modality_name(m)).c_str()));
        }
        if (entry.mask && static_cast<int>(entry.mask->size()) != grid.token_count()) {
            throw ShapeError(strformat("apply_override: %s mask size %zu != token count %d",
                                       std::string(modality_name(m)).c_str(), entry.mask->size(),
                                       grid.token_count()));
        }
        for (int k = 0; k < grid.token_count(); ++k) {
            if (entry.mask && (*entry.mask)[static_cast<size_t>(k)] == 0) {
                continue;
            }
            std::copy(entry.clean.token(k), entry.clean.token(k) + grid.dim, grid.token(k));
        }
    }
    return out;
}

std::vector<Modality> sample_condition_subset(const AvailabilityFlags& flags,
                                              const std::vector<Modality>& modalities,
                                              RngStream& rng, double empty_floor) {
    std::vector<Modality> available;
    for (const Modality m : modalities) {
        if (flags.is_available(m)) {
            available.push_back(m);
        }
    }
    if (available.empty() || rng.uniform() < empty_floor) {
        return {};
    }
    // Non-empty subsets of the available modalities, minus the complete
    // modality set when everything is available.
    const int n = static_cast<int>(available.size());
    const bool all_available = available.size() == modalities.size();
    const uint32_t total = (1u << n) - 1;  // non-empty subsets
    const uint32_t admissible = all_available ? total - 1 : total;
    if (admissible == 0) {
        return {};
    }
    uint32_t pick = 1 + static_cast<uint32_t>(rng.uniform_int(static_cast<int>(admissible)));
    // pick ranges over [1, total]; skip the full-set bitmask when excluded.
    if (all_available && pick == total) {
        pick = total;  // unreachable by construction: pick <= admissible < total
    }
    std::vector<Modality> subset;
    for (int i = 0; i < n; ++i) {
        if (pick & (1u << i)) {
            subset.push_back(available[static_cast<size_t>(i)]);
        }
    }
    return subset;
}

ConditionSet make_inpaint_noise(const ConditionSet& cond, RngStream& rng) {
    ConditionSet out = cond;
    for (auto& [m, entry] : out.members) {
        if (!entry.mask) {
            continue;
        }
        LatentGrid& grid = entry.clean;
        for (int k = 0; k < grid.token_count(); ++k) {
            if ((*entry.mask)[static_cast<size_t>(k)] != 0) {
                continue;
            }
            float* tok = grid.token(k);
            for (int i = 0; i < grid.dim; ++i) {
                tok[i] = static_cast<float>(rng.normal());
            }
        }
    }
    return out;
}

TokenMask token_mask_from_pixels(const std::vector<uint8_t>& pixel_mask, int height, int width,
                                 int patch_size) {
    if (static_cast<int>(pixel_mask.size()) != height * width || height % patch_size != 0 ||
        width % patch_size != 0) {
        throw ShapeError(strformat("token_mask: pixel mask %zu does not tile %dx%d with patch %d",
                                   pixel_mask.size(), height, width, patch_size));
    }
    const int gh = height / patch_size;
    const int gw = width / patch_size;
    TokenMask mask(static_cast<size_t>(gh) * gw, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (pixel_mask[static_cast<size_t>(y) * width + x] == 0) {
                mask[static_cast<size_t>(y / patch_size) * gw + (x / patch_size)] = 0;
            }
        }
    }
    return mask;
}

double mask_hole_fraction(const TokenMask& mask) {
    if (mask.empty()) {
        return 0.0;
    }
    size_t zeros = 0;
    for (uint8_t v : mask) {
        zeros += v == 0 ? 1 : 0;
    }
    return static_cast<double>(zeros) / static_cast<double>(mask.size());
}

TokenMask random_token_mask(int grid_h, int grid_w, RngStream& rng, double min_cover,
                            double max_cover) {
    const int cells = grid_h * grid_w;
    const double target = min_cover + (max_cover - min_cover) * rng.uniform();
    TokenMask mask(static_cast<size_t>(cells), 1);
    const bool rectangle = rng.uniform() < 0.5;
    if (rectangle) {
        // Rectangle with area as close to the target as the grid allows.
        for (int attempt = 0; attempt < 64; ++attempt) {
            const int w = 1 + rng.uniform_int(grid_w);
            const int h = 1 + rng.uniform_int(grid_h);
            const double cover = static_cast<double>(w * h) / cells;
            if (cover < min_cover || cover > max_cover) {
                continue;
            }
            const int x0 = rng.uniform_int(grid_w - w + 1);
            const int y0 = rng.uniform_int(grid_h - h + 1);
            for (int y = y0; y < y0 + h; ++y) {
                for (int x = x0; x < x0 + w; ++x) {
                    mask[static_cast<size_t>(y) * grid_w + x] = 0;
                }
            }
            return mask;
        }
    }
    // Free-form stroke: random walk until the target cover is reached.
    int x = rng.uniform_int(grid_w);
    int y = rng.uniform_int(grid_h);
    int holes = 0;
    const int want = std::max(1, static_cast<int>(target * cells));
    int guard = cells * 16;
    while (holes < want && guard-- > 0) {
        auto& cell = mask[static_cast<size_t>(y) * grid_w + x];
        if (cell != 0) {
            cell = 0;
            ++holes;
        }
        switch (rng.uniform_int(4)) {
            case 0: x = std::min(grid_w - 1, x + 1); break;
            case 1: x = std::max(0, x - 1); break;
            case 2: y = std::min(grid_h - 1, y + 1); break;
            default: y = std::max(0, y - 1); break;
        }
    }
    return mask;
}

}  // namespace prism
