#pragma once

#include <cstdint>
#include <vector>

#include "prism/image.hpp"
#include "prism/modality.hpp"

namespace prism {

// Per-modality token grid at a shared noise level.
struct LatentGrid {
    int grid_h = 0;
    int grid_w = 0;
    int dim = 0;                // latent vector length per token
    std::vector<float> tokens;  // (grid_h * grid_w) x dim, row-major

    LatentGrid() = default;
    LatentGrid(int gh, int gw, int d)
        : grid_h(gh), grid_w(gw), dim(d), tokens(static_cast<size_t>(gh) * gw * d, 0.0f) {}

    int token_count() const { return grid_h * grid_w; }
    float* token(int k) { return tokens.data() + static_cast<size_t>(k) * dim; }
    const float* token(int k) const { return tokens.data() + static_cast<size_t>(k) * dim; }
    bool same_dims(const LatentGrid& o) const {
        return grid_h == o.grid_h && grid_w == o.grid_w && dim == o.dim;
    }
};

// Token grids for every active modality, in the model's modality order.
struct MultiModalLatent {
    std::vector<Modality> modalities;
    std::vector<LatentGrid> grids;  // parallel to `modalities`

    int index_of(Modality m) const {
        for (size_t i = 0; i < modalities.size(); ++i) {
            if (modalities[i] == m) return static_cast<int>(i);
        }
        return -1;
    }
    LatentGrid& grid(Modality m) { return grids[static_cast<size_t>(index_of(m))]; }
    const LatentGrid& grid(Modality m) const { return grids[static_cast<size_t>(index_of(m))]; }
    bool has(Modality m) const { return index_of(m) >= 0; }
};

// Deterministic, exactly invertible patch codec. Each p x p x 3 patch is
// flattened and multiplied by a seeded orthonormal basis; decode applies the
// transpose. Round trips are exact to float precision, so conditioned
// modalities survive the sampler pixel-exactly.
class Codec {
public:
    Codec(int patch_size, uint64_t seed);

    LatentGrid encode(const Image& image) const;
    Image decode(const LatentGrid& grid) const;

    int patch_size() const { return patch_size_; }
    int latent_dim() const { return latent_dim_; }
    uint64_t seed() const { return seed_; }
    const std::vector<float>& basis() const { return basis_; }

    // max |basis^T basis - I|; construction keeps this below 1e-5.
    float orthonormality_error() const;

private:
    int patch_size_;
    int latent_dim_;
    uint64_t seed_;
    std::vector<float> basis_;  // latent_dim x latent_dim, row-major
};

}  // namespace prism
