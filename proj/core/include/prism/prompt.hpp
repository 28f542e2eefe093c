#pragma once

#include <array>
#include <string>
#include <vector>

#include "prism/errors.hpp"

namespace prism {

// Discrete attribute vocabulary standing in for a text encoder. A prompt is
// four slots (light direction bin, light color, palette, shape-count bucket);
// each slot value maps into a disjoint range of global token ids. Id 0 is the
// NULL token used for guidance dropout and unconditional passes.
class PromptVocab {
public:
    static constexpr int kNumSlots = 4;
    static constexpr int kNullId = 0;

    enum Slot { kLightDir = 0, kLightColor = 1, kPalette = 2, kShapeCount = 3 };

    static constexpr std::array<int, kNumSlots> slot_sizes() { return {8, 6, 8, 6}; }

    static constexpr int slot_offset(int slot) {
        int off = 1;  // id 0 reserved for NULL
        for (int s = 0; s < slot; ++s) {
            off += slot_sizes()[static_cast<size_t>(s)];
        }
        return off;
    }

    static constexpr int vocab_size() { return slot_offset(kNumSlots); }

    // Slot-local attribute values -> global token ids.
    static std::vector<int> encode(const std::array<int, kNumSlots>& slots) {
        std::vector<int> ids(kNumSlots);
        for (int s = 0; s < kNumSlots; ++s) {
            const int v = slots[static_cast<size_t>(s)];
            if (v < 0 || v >= slot_sizes()[static_cast<size_t>(s)]) {
                throw ConfigError(strformat("prompt: slot %d value %d out of range [0, %d)", s, v,
                                            slot_sizes()[static_cast<size_t>(s)]));
            }
            ids[static_cast<size_t>(s)] = slot_offset(s) + v;
        }
        return ids;
    }

    static std::vector<int> null_prompt() { return std::vector<int>(kNumSlots, kNullId); }

    static const char* slot_name(int slot) {
        switch (slot) {
            case kLightDir: return "light-dir";
            case kLightColor: return "light-color";
            case kPalette: return "palette";
            case kShapeCount: return "shape-count";
        }
        return "?";
    }

    // Human-readable vocabulary listing for the CLI.
    static std::string describe();
};

}  // namespace prism
