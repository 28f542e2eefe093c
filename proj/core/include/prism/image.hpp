#pragma once

#include <cstddef>
#include <vector>

#include "prism/errors.hpp"

namespace prism {

// H x W x 3 float image, row-major with interleaved channels. Values are
// nominally in [0, 1]; decoded model outputs may exceed that range until
// clamped at export.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // size == height * width * 3

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width;
    }
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(strformat("%s: image shape mismatch %dx%d vs %dx%d", where, a.height,
                                   a.width, b.height, b.width));
    }
}

// Clamps every channel to [0, 1]; used at image export only.
Image clamp01(const Image& img);

}  // namespace prism
