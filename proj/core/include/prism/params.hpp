#pragma once

#include <map>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/tensor.hpp"

namespace prism {

// Named parameter tensors with deterministic (lexicographic) iteration order.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        t.set_requires_grad(true);
        auto [it, inserted] = params_.emplace(name, std::move(t));
        if (!inserted) {
            throw Error(strformat("params: duplicate parameter '%s'", name.c_str()));
        }
        return it->second;
    }

    Tensor<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw Error(strformat("params: unknown parameter '%s'", name.c_str()));
        }
        return it->second;
    }

    const Tensor<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw Error(strformat("params: unknown parameter '%s'", name.c_str()));
        }
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    size_t size() const { return params_.size(); }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [name, t] : params_) {
            n += t.numel();
        }
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor<T>> params_;
};

}  // namespace prism
