#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "prism/params.hpp"
#include "prism/rng.hpp"
#include "prism/tensor.hpp"

namespace prism {

struct GradCheckConfig {
    double step = 1e-5;        // central difference half-step
    double tolerance = 1e-4;   // max relative error allowed
    int max_coords = 48;       // coordinates sampled per parameter tensor
    uint64_t seed = 17;        // coordinate sampling seed
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Compares reverse-mode gradients against central finite differences in
// 64-bit. `build_loss` must rebuild the scalar loss from the current
// parameter values on every call; it is invoked O(coords) times.
inline GradCheckReport grad_check(ParamStore<double>& params,
                                  const std::function<Tensor<double>()>& build_loss,
                                  const GradCheckConfig& cfg = {}) {
    Tensor<double> loss = build_loss();
    GradientTable<double> table = backward(loss);

    GradCheckReport report;
    report.tolerance = cfg.tolerance;
    RngStream pick(cfg.seed, 0x9c0ffee);
    for (auto& [name, param] : params) {
        std::vector<double> analytic = table.grad(param);
        std::vector<double>& values = param.mutable_values();
        const int64_t n = static_cast<int64_t>(values.size());

        std::vector<int64_t> coords;
        if (n <= cfg.max_coords) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int i = 0; i < cfg.max_coords; ++i) {
                coords.push_back(pick.uniform_int(static_cast<int>(n)));
            }
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }

        GradCheckEntry entry;
        entry.name = name;
        for (int64_t c : coords) {
            const double original = values[static_cast<size_t>(c)];
            values[static_cast<size_t>(c)] = original + cfg.step;
            const double up = build_loss().item();
            values[static_cast<size_t>(c)] = original - cfg.step;
            const double down = build_loss().item();
            values[static_cast<size_t>(c)] = original;
            const double numeric = (up - down) / (2.0 * cfg.step);
            const double a = analytic[static_cast<size_t>(c)];
            const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-6);
            entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
            ++entry.coords_checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.max_rel_err <= cfg.tolerance;
    return report;
}

}  // namespace prism
