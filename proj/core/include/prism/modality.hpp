#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace prism {

// The five jointly generated channels. The enum value doubles as the block
// index in the token sequence and as the channel slot in dataset files.
enum class Modality : int {
    kRgb = 0,
    kAlbedo = 1,
    kNormal = 2,
    kDepth = 3,
    kIrradiance = 4,
};

inline constexpr int kNumModalities = 5;

inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::kRgb, Modality::kAlbedo, Modality::kNormal, Modality::kDepth, Modality::kIrradiance,
};

inline constexpr std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::kRgb: return "rgb";
        case Modality::kAlbedo: return "albedo";
        case Modality::kNormal: return "normal";
        case Modality::kDepth: return "depth";
        case Modality::kIrradiance: return "irradiance";
    }
    return "?";
}

// Parses one of the names above; returns false on unknown input.
bool modality_from_name(std::string_view name, Modality* out);

inline std::vector<Modality> all_modalities() {
    return {kAllModalities.begin(), kAllModalities.end()};
}

}  // namespace prism
