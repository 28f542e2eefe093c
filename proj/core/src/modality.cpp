#include "prism/modality.hpp"

namespace prism {

bool modality_from_name(std::string_view name, Modality* out) {
    for (Modality m : kAllModalities) {
        if (modality_name(m) == name) {
            *out = m;
            return true;
        }
    }
    return false;
}

}  // namespace prism
