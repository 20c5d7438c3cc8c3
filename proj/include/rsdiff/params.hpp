#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rsdiff/errors.hpp"

namespace rsdiff {

template <class T>
struct NamedTensor {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<T> values;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered list of named tensors. Order is fixed at construction and defines the
/// serialization layout; gradients and optimizer moments mirror it tensor for tensor.
template <class T>
class ParamSet {
public:
    std::size_t add(std::string name, std::vector<std::size_t> dims, T fill = T(0)) {
        const auto n = std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
        tensors_.push_back({std::move(name), std::move(dims), std::vector<T>(n, fill)});
        return tensors_.size() - 1;
    }

    std::size_t size() const noexcept { return tensors_.size(); }
    NamedTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
    const NamedTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
    auto begin() noexcept { return tensors_.begin(); }
    auto end() noexcept { return tensors_.end(); }
    auto begin() const noexcept { return tensors_.begin(); }
    auto end() const noexcept { return tensors_.end(); }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i].name == name) return i;
        throw ShapeError("no parameter named " + name);
    }

    std::size_t scalar_count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.values.size();
        return n;
    }

    ParamSet zeros_like() const {
        ParamSet out = *this;
        for (auto& t : out.tensors_) std::fill(t.values.begin(), t.values.end(), T(0));
        return out;
    }

    bool congruent(const ParamSet& other) const noexcept {
        if (other.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (tensors_[i].dims != other.tensors_[i].dims || tensors_[i].name != other.tensors_[i].name) return false;
        return true;
    }

    bool all_finite() const noexcept {
        for (const auto& t : tensors_)
            for (T v : t.values)
                if (!std::isfinite(v)) return false;
        return true;
    }

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& t : tensors_) {
            const auto i = out.add(t.name, t.dims);
            std::transform(t.values.begin(), t.values.end(), out[i].values.begin(),
                           [](T v) { return static_cast<U>(v); });
        }
        return out;
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<NamedTensor<T>> tensors_;
};

}  // namespace rsdiff
