#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace hkdelay {

// Fixed-width real vectors are stored flat (agent-major) as std::vector<double>;
// these helpers operate on d-dimensional slices.

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline std::span<const double> slice(const std::vector<double>& flat, std::size_t index,
                                     std::size_t dim) {
    return std::span<const double>(flat.data() + index * dim, dim);
}

inline std::span<double> slice(std::vector<double>& flat, std::size_t index, std::size_t dim) {
    return std::span<double>(flat.data() + index * dim, dim);
}

}  // namespace hkdelay
