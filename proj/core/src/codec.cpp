#include "prism/codec.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "prism/errors.hpp"
#include "prism/rng.hpp"

namespace prism {

Codec::Codec(int patch_size, uint64_t seed)
    : patch_size_(patch_size), latent_dim_(3 * patch_size * patch_size), seed_(seed) {
    if (patch_size < 1) {
        throw ConfigError(strformat("codec: patch size %d must be positive", patch_size));
    }
    // QR of a seeded Gaussian matrix, computed in double and cast down.
    const int d = latent_dim_;
    Eigen::MatrixXd gaussian(d, d);
    RngStream rng(seed, 0xc0dec);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            gaussian(r, c) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    // Fix the sign of each column so the basis is unique for a given seed.
    for (int c = 0; c < d; ++c) {
        if (q(0, c) < 0.0) {
            q.col(c) *= -1.0;
        }
    }
    basis_.resize(static_cast<size_t>(d) * d);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            basis_[static_cast<size_t>(r) * d + c] = static_cast<float>(q(r, c));
        }
    }
}

LatentGrid Codec::encode(const Image& image) const {
    const int p = patch_size_;
    if (image.height % p != 0 || image.width % p != 0) {
        throw ShapeError(strformat("codec: image %dx%d not divisible by patch size %d",
                                   image.height, image.width, p));
    }
    const int gh = image.height / p;
    const int gw = image.width / p;
    const int d = latent_dim_;
    LatentGrid grid(gh, gw, d);

    std::vector<float> patch(static_cast<size_t>(d));
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            // Flatten the patch row-major with interleaved channels.
            int i = 0;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        patch[i++] = image.at(gy * p + py, gx * p + px, c);
                    }
                }
            }
            float* tok = grid.token(gy * gw + gx);
            for (int r = 0; r < d; ++r) {
                const float* row = basis_.data() + static_cast<size_t>(r) * d;
                float acc = 0.0f;
                for (int c = 0; c < d; ++c) {
                    acc += row[c] * patch[c];
                }
                tok[r] = acc;
            }
        }
    }
    return grid;
}

Image Codec::decode(const LatentGrid& grid) const {
    const int p = patch_size_;
    const int d = latent_dim_;
    if (grid.dim != d) {
        throw ShapeError(strformat("codec: grid dim %d != latent dim %d", grid.dim, d));
    }
    Image image(grid.grid_h * p, grid.grid_w * p);

    std::vector<float> patch(static_cast<size_t>(d));
    for (int gy = 0; gy < grid.grid_h; ++gy) {
        for (int gx = 0; gx < grid.grid_w; ++gx) {
            const float* tok = grid.token(gy * grid.grid_w + gx);
            // patch = basis^T * token
            for (int c = 0; c < d; ++c) {
                patch[c] = 0.0f;
            }
            for (int r = 0; r < d; ++r) {
                const float* row = basis_.data() + static_cast<size_t>(r) * d;
                const float t = tok[r];
                for (int c = 0; c < d; ++c) {
                    patch[c] += row[c] * t;
                }
            }
            int i = 0;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        image.at(gy * p + py, gx * p + px, c) = patch[i++];
                    }
                }
            }
        }
    }
    return image;
}

float Codec::orthonormality_error() const {
    const int d = latent_dim_;
    float worst = 0.0f;
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            double acc = 0.0;
            for (int r = 0; r < d; ++r) {
                acc += static_cast<double>(basis_[static_cast<size_t>(r) * d + i]) *
                       static_cast<double>(basis_[static_cast<size_t>(r) * d + j]);
            }
            const double expected = i == j ? 1.0 : 0.0;
            worst = std::max(worst, static_cast<float>(std::abs(acc - expected)));
        }
    }
    return worst;
}

Image clamp01(const Image& img) {
    Image out = img;
    for (float& v : out.data) {
        v = std::min(1.0f, std::max(0.0f, v));
    }
    return out;
}

}  // namespace prism
