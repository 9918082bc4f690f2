#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ecgmix/errors.hpp"

namespace ecgmix {

// Dense (batch, channel, frame) tensor, row-major with frames contiguous.
template <typename T>
struct tensor3 {
    int b = 0, c = 0, w = 0;
    std::vector<T> v;

    tensor3() = default;
    tensor3(int b_, int c_, int w_) : b(b_), c(c_), w(w_), v(static_cast<std::size_t>(b_) * c_ * w_, T(0)) {}

    T& at(int bi, int ci, int wi) { return v[(static_cast<std::size_t>(bi) * c + ci) * w + wi]; }
    const T& at(int bi, int ci, int wi) const { return v[(static_cast<std::size_t>(bi) * c + ci) * w + wi]; }

    T* row(int bi, int ci) { return v.data() + (static_cast<std::size_t>(bi) * c + ci) * w; }
    const T* row(int bi, int ci) const { return v.data() + (static_cast<std::size_t>(bi) * c + ci) * w; }

    std::size_t size() const { return v.size(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const tensor3& o) const { return b == o.b && c == o.c && w == o.w; }
};

// Dense (rows, cols) matrix; used for pooled hidden vectors and FC activations.
template <typename T>
struct mat {
    int rows = 0, cols = 0;
    std::vector<T> v;

    mat() = default;
    mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

    T& at(int r, int c_) { return v[static_cast<std::size_t>(r) * cols + c_]; }
    const T& at(int r, int c_) const { return v[static_cast<std::size_t>(r) * cols + c_]; }

    T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return v.size(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw shape_error(what);
}

}  // namespace ecgmix
