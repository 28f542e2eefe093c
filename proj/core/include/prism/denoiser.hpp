#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/codec.hpp"
#include "prism/errors.hpp"
#include "prism/modality.hpp"
#include "prism/params.hpp"
#include "prism/prompt.hpp"
#include "prism/rng.hpp"
#include "prism/tensor.hpp"

namespace prism {

struct DenoiserConfig {
    int embed_dim = 128;
    int depth = 6;
    int heads = 4;
    int grid_h = 8;  // spatial token grid; tokens_per_modality = grid_h * grid_w
    int grid_w = 8;
    int latent_dim = 192;
    int prompt_len = PromptVocab::kNumSlots;
    int prompt_vocab = PromptVocab::vocab_size();
    int t_steps = 1000;
    // Generated channels, in token-block order. The joint model uses all five;
    // uni-modal ablations restrict this to {rgb, X}.
    std::vector<Modality> modalities = all_modalities();

    int tokens_per_modality() const { return grid_h * grid_w; }
    int image_tokens() const { return tokens_per_modality() * static_cast<int>(modalities.size()); }
    int sequence_len() const { return image_tokens() + prompt_len; }

    void validate() const {
        if (embed_dim <= 0 || depth <= 0 || heads <= 0 || grid_h <= 0 || grid_w <= 0 ||
            latent_dim <= 0 || prompt_len <= 0 || t_steps < 2) {
            throw ConfigError("denoiser: all dimensions must be positive");
        }
        if (embed_dim % heads != 0) {
            throw ConfigError(strformat("denoiser: embed_dim %d not divisible by heads %d",
                                        embed_dim, heads));
        }
        if (modalities.empty() || modalities.size() > kNumModalities) {
            throw ConfigError("denoiser: modality list must have 1..5 entries");
        }
    }
};

struct TokenTag {
    int modality = -1;  // Modality enum value; -1 for prompt tokens
    int spatial = 0;    // token index within the modality grid, or prompt slot
    bool is_prompt = false;
};

template <typename T>
struct TokenSequence {
    Tensor<T> x;  // [sequence_len, embed_dim]
    std::vector<TokenTag> tags;
    int t = 0;
};

template <typename T>
struct DenoiserOutput {
    std::vector<Modality> modalities;
    std::vector<Tensor<T>> eps;  // per modality, [tokens_per_modality, latent_dim]
};

namespace detail {

// 1-D sin/cos features: [sin(pos * w_0..), cos(pos * w_0..)], dim even.
inline void sincos_features(double pos, int dim, float* out) {
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        out[i] = static_cast<float>(std::sin(pos * freq));
        out[half + i] = static_cast<float>(std::cos(pos * freq));
    }
}

}  // namespace detail

// Builds the fixed 2-D sin/cos positional table, [grid_h * grid_w, dim].
inline std::vector<float> make_spatial_encoding(int grid_h, int grid_w, int dim) {
    if (dim % 4 != 0) {
        throw ConfigError(strformat("denoiser: embed_dim %d must be divisible by 4", dim));
    }
    std::vector<float> table(static_cast<size_t>(grid_h) * grid_w * dim);
    const int half = dim / 2;
    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            float* row = table.data() + (static_cast<size_t>(gy) * grid_w + gx) * dim;
            detail::sincos_features(gy, half, row);
            detail::sincos_features(gx, half, row + half);
        }
    }
    return table;
}

// Decoder-only transformer over the union of all modality tokens. Each
// modality has its own input/output projection; identity is injected through
// an additive learned modality embedding, the shared 2-D spatial encoding,
// and the timestep encoding added to image tokens only. Prompt tokens are
// appended after the image tokens and discarded at the output.
template <typename T>
class DenoiserT {
public:
    DenoiserT(DenoiserConfig config, uint64_t seed) : cfg_(std::move(config)) {
        cfg_.validate();
        spatial_pe_ = make_spatial_encoding(cfg_.grid_h, cfg_.grid_w, cfg_.embed_dim);
        init_params(seed);
    }

    const DenoiserConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    Tensor<T> timestep_embedding(int t) const {
        if (t < 0 || t > cfg_.t_steps) {
            throw ConfigError(strformat("denoiser: timestep %d outside [0, %d]", t, cfg_.t_steps));
        }
        const int d = cfg_.embed_dim;
        std::vector<float> feat(static_cast<size_t>(d));
        detail::sincos_features(static_cast<double>(t), d, feat.data());
        Tensor<T> f = Tensor<T>::template from_span<float>({1, d}, feat);
        Tensor<T> h = gelu(linear(f, params_.at("time_mlp.w1"), params_.at("time_mlp.b1")));
        Tensor<T> out = linear(h, params_.at("time_mlp.w2"), params_.at("time_mlp.b2"));
        return reshape(out, {d});
    }

    // token = in_proj_m(latent) + spatial_pe + modality_emb(m) + timestep_emb(t),
    // then prompt embeddings appended.
    TokenSequence<T> assemble_tokens(const MultiModalLatent& latents, int t,
                                     const std::vector<int>& prompt_ids) const {
        if (latents.modalities != cfg_.modalities) {
            throw ShapeError("denoiser: latent modalities do not match the model configuration");
        }
        if (static_cast<int>(prompt_ids.size()) != cfg_.prompt_len) {
            throw ShapeError(strformat("denoiser: expected %d prompt ids, got %zu", cfg_.prompt_len,
                                       prompt_ids.size()));
        }
        for (int id : prompt_ids) {
            if (id < 0 || id >= cfg_.prompt_vocab) {
                throw ConfigError(strformat("denoiser: unknown prompt id %d (vocab %d)", id,
                                            cfg_.prompt_vocab));
            }
        }
        const int tokens = cfg_.tokens_per_modality();
        const int d = cfg_.embed_dim;

        Tensor<T> spatial = Tensor<T>::template from_span<float>({tokens, d}, spatial_pe_);
        Tensor<T> t_emb = timestep_embedding(t);

        TokenSequence<T> seq;
        seq.t = t;
        std::vector<Tensor<T>> blocks;
        blocks.reserve(cfg_.modalities.size() + 1);
        for (size_t mi = 0; mi < cfg_.modalities.size(); ++mi) {
            const Modality m = cfg_.modalities[mi];
            const LatentGrid& grid = latents.grids[mi];
            if (grid.token_count() != tokens || grid.dim != cfg_.latent_dim) {
                throw ShapeError(strformat("denoiser: %s grid %dx%dx%d does not match model",
                                           std::string(modality_name(m)).c_str(), grid.grid_h,
                                           grid.grid_w, grid.dim));
            }
            Tensor<T> lat = Tensor<T>::template from_span<float>({tokens, cfg_.latent_dim},
                                                                 std::span<const float>(grid.tokens));
            Tensor<T> x = linear(lat, params_.at(pname(m, "in_proj.w")), params_.at(pname(m, "in_proj.b")));
            x = add(x, spatial);
            Tensor<T> mod_row =
                reshape(slice(params_.at("modality_emb"), 0, static_cast<int>(m), 1), {d});
            x = add(x, mod_row);
            x = add(x, t_emb);
            blocks.push_back(std::move(x));
            for (int k = 0; k < tokens; ++k) {
                seq.tags.push_back({static_cast<int>(m), k, false});
            }
        }
        blocks.push_back(gather_rows(params_.at("prompt_emb"), prompt_ids));
        for (int j = 0; j < cfg_.prompt_len; ++j) {
            seq.tags.push_back({-1, j, true});
        }
        seq.x = concat(blocks, 0);
        return seq;
    }

    DenoiserOutput<T> forward(const TokenSequence<T>& seq) const {
        const int d = cfg_.embed_dim;
        const int heads = cfg_.heads;
        const int head_dim = d / heads;
        const int s = static_cast<int>(seq.tags.size());
        if (seq.x.rank() != 2 || seq.x.dim(0) != s || seq.x.dim(1) != d) {
            throw ShapeError("denoiser: token sequence shape does not match tags");
        }
        const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));

        Tensor<T> x = seq.x;
        for (int b = 0; b < cfg_.depth; ++b) {
            Tensor<T> h = scaled_norm(x, bname(b, "ln1"));
            Tensor<T> qkv = linear(h, params_.at(bname(b, "attn.wqkv")), params_.at(bname(b, "attn.bqkv")));
            Tensor<T> q = split_heads(slice(qkv, 1, 0, d), s, heads, head_dim);
            Tensor<T> k = split_heads(slice(qkv, 1, d, d), s, heads, head_dim);
            Tensor<T> v = split_heads(slice(qkv, 1, 2 * d, d), s, heads, head_dim);
            Tensor<T> scores = mul_scalar(matmul(q, permute(k, {0, 2, 1})), scale);
            Tensor<T> ctx = matmul(softmax_lastdim(scores), v);  // [heads, s, head_dim]
            ctx = reshape(permute(ctx, {1, 0, 2}), {s, d});
            x = add(x, linear(ctx, params_.at(bname(b, "attn.wo")), params_.at(bname(b, "attn.bo"))));

            Tensor<T> h2 = scaled_norm(x, bname(b, "ln2"));
            Tensor<T> m = gelu(linear(h2, params_.at(bname(b, "mlp.w1")), params_.at(bname(b, "mlp.b1"))));
            x = add(x, linear(m, params_.at(bname(b, "mlp.w2")), params_.at(bname(b, "mlp.b2"))));

            if (!all_finite(x)) {
                throw NumericalError(strformat("denoiser: non-finite activation after block %d", b));
            }
        }
        x = scaled_norm(x, "final_ln");

        DenoiserOutput<T> out;
        out.modalities = cfg_.modalities;
        const int tokens = cfg_.tokens_per_modality();
        for (const Modality m : cfg_.modalities) {
            // Group rows by tag so the output is correct for any token order.
            std::vector<int> rows(static_cast<size_t>(tokens), -1);
            for (int i = 0; i < s; ++i) {
                const TokenTag& tag = seq.tags[static_cast<size_t>(i)];
                if (!tag.is_prompt && tag.modality == static_cast<int>(m)) {
                    rows[static_cast<size_t>(tag.spatial)] = i;
                }
            }
            for (int r : rows) {
                if (r < 0) {
                    throw ShapeError("denoiser: token tags do not cover the modality grid");
                }
            }
            Tensor<T> xm = gather_rows(x, rows);
            out.eps.push_back(
                linear(xm, params_.at(pname(m, "out_proj.w")), params_.at(pname(m, "out_proj.b"))));
        }
        return out;
    }

    // Noise prediction as plain float grids (inference path).
    MultiModalLatent predict(const MultiModalLatent& latents, int t,
                             const std::vector<int>& prompt_ids) const {
        NoGradGuard no_grad;
        DenoiserOutput<T> out = forward(assemble_tokens(latents, t, prompt_ids));
        MultiModalLatent result;
        result.modalities = out.modalities;
        for (size_t i = 0; i < out.eps.size(); ++i) {
            LatentGrid g(cfg_.grid_h, cfg_.grid_w, cfg_.latent_dim);
            const auto& v = out.eps[i].values();
            for (size_t j = 0; j < v.size(); ++j) {
                g.tokens[j] = static_cast<float>(v[j]);
            }
            result.grids.push_back(std::move(g));
        }
        return result;
    }

    static std::string pname(Modality m, const char* suffix) {
        return std::string(modality_name(m)) + "." + suffix;
    }
    static std::string bname(int block, const char* suffix) {
        return strformat("block%02d.%s", block, suffix);
    }

private:
    Tensor<T> scaled_norm(const Tensor<T>& x, const std::string& prefix) const {
        Tensor<T> y = layer_norm_lastdim(x, T(1e-5));
        return add(mul(y, params_.at(prefix + ".g")), params_.at(prefix + ".b"));
    }

    static Tensor<T> split_heads(const Tensor<T>& x, int s, int heads, int head_dim) {
        return permute(reshape(x, {s, heads, head_dim}), {1, 0, 2});
    }

    void init_params(uint64_t seed) {
        RngStream rng(seed, 0xd17);
        const int d = cfg_.embed_dim;
        const int dl = cfg_.latent_dim;
        const double base_std = 0.02;
        const double resid_std = base_std / std::sqrt(2.0 * cfg_.depth);

        auto normal_tensor = [&](Shape shape, double stddev) {
            std::vector<T> v(static_cast<size_t>(shape_numel(shape)));
            for (auto& x : v) {
                x = static_cast<T>(stddev * rng.normal());
            }
            return Tensor<T>::from_vector(std::move(shape), std::move(v));
        };
        auto const_tensor = [&](Shape shape, T fill) { return Tensor<T>::filled(std::move(shape), fill); };

        for (const Modality m : cfg_.modalities) {
            params_.add(pname(m, "in_proj.w"), normal_tensor({dl, d}, base_std));
            params_.add(pname(m, "in_proj.b"), const_tensor({d}, T(0)));
            // Output projections start at zero: a fresh model predicts zero
            // noise, and the paper-style residual target keeps early training
            // stable.
            params_.add(pname(m, "out_proj.w"), const_tensor({d, dl}, T(0)));
            params_.add(pname(m, "out_proj.b"), const_tensor({dl}, T(0)));
        }
        params_.add("modality_emb", normal_tensor({kNumModalities, d}, base_std));
        params_.add("prompt_emb", normal_tensor({cfg_.prompt_vocab, d}, base_std));
        params_.add("time_mlp.w1", normal_tensor({d, d}, base_std));
        params_.add("time_mlp.b1", const_tensor({d}, T(0)));
        params_.add("time_mlp.w2", normal_tensor({d, d}, base_std));
        params_.add("time_mlp.b2", const_tensor({d}, T(0)));
        for (int b = 0; b < cfg_.depth; ++b) {
            params_.add(bname(b, "ln1.g"), const_tensor({d}, T(1)));
            params_.add(bname(b, "ln1.b"), const_tensor({d}, T(0)));
            params_.add(bname(b, "attn.wqkv"), normal_tensor({d, 3 * d}, base_std));
            params_.add(bname(b, "attn.bqkv"), const_tensor({3 * d}, T(0)));
            params_.add(bname(b, "attn.wo"), normal_tensor({d, d}, resid_std));
            params_.add(bname(b, "attn.bo"), const_tensor({d}, T(0)));
            params_.add(bname(b, "ln2.g"), const_tensor({d}, T(1)));
            params_.add(bname(b, "ln2.b"), const_tensor({d}, T(0)));
            params_.add(bname(b, "mlp.w1"), normal_tensor({d, 4 * d}, base_std));
            params_.add(bname(b, "mlp.b1"), const_tensor({4 * d}, T(0)));
            params_.add(bname(b, "mlp.w2"), normal_tensor({4 * d, d}, resid_std));
            params_.add(bname(b, "mlp.b2"), const_tensor({d}, T(0)));
        }
        params_.add("final_ln.g", const_tensor({d}, T(1)));
        params_.add("final_ln.b", const_tensor({d}, T(0)));
    }

    DenoiserConfig cfg_;
    ParamStore<T> params_;
    std::vector<float> spatial_pe_;
};

using Denoiser = DenoiserT<float>;

// Reorders a token sequence; tags travel with the tokens. Used to exercise
// permutation equivariance.
template <typename T>
TokenSequence<T> permute_tokens(const TokenSequence<T>& seq, const std::vector<int>& order) {
    TokenSequence<T> out;
    out.t = seq.t;
    out.x = gather_rows(seq.x, order);
    out.tags.reserve(order.size());
    for (int i : order) {
        out.tags.push_back(seq.tags[static_cast<size_t>(i)]);
    }
    return out;
}

// In-place Gaussian reinitialization of selected parameters (test helper for
// exercising a model with non-zero output projections).
template <typename T>
void randomize_params(ParamStore<T>& params, uint64_t seed, double stddev) {
    RngStream rng(seed, 0xabcd);
    for (auto& [name, param] : params) {
        for (auto& v : param.mutable_values()) {
            v = static_cast<T>(stddev * rng.normal());
        }
    }
}

}  // namespace prism
