#pragma once

// Deterministic vector math shared by every other module: sub-vector
// normalization, scaled softmax, Shannon entropy. All functions are pure
// and safe to call concurrently.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gpq/error.hpp"

namespace gpq {

inline constexpr double kZeroVectorTolerance = 1e-12;

// Floor applied to probabilities before they enter a logarithm, keeping
// every loss finite.
inline constexpr double kLogFloor = 1e-30;

// Geometry of a product-quantized feature space: a `total_dim`-dimensional
// vector is viewed as `num_subspaces` contiguous blocks of `sub_dim`
// components, each quantized against `num_codewords` codewords.
struct SubspaceShape {
    std::size_t total_dim = 0;      // D = num_subspaces * sub_dim
    std::size_t num_subspaces = 0;  // M
    std::size_t sub_dim = 0;        // d
    std::size_t num_codewords = 0;  // K, power of two

    static SubspaceShape create(std::size_t num_subspaces, std::size_t sub_dim,
                                std::size_t num_codewords) {
        SubspaceShape s{num_subspaces * sub_dim, num_subspaces, sub_dim, num_codewords};
        s.validate();
        return s;
    }

    void validate() const {
        if (num_subspaces < 1 || sub_dim < 1)
            throw InvalidConfigError("subspace shape requires at least one subspace and one dimension");
        if (total_dim != num_subspaces * sub_dim)
            throw InvalidConfigError("total_dim must equal num_subspaces * sub_dim");
        if (num_codewords < 2 || (num_codewords & (num_codewords - 1)) != 0)
            throw InvalidConfigError("num_codewords must be a power of two >= 2, got " +
                                     std::to_string(num_codewords));
    }

    std::size_t bits_per_index() const {
        std::size_t b = 0;
        for (std::size_t k = num_codewords; k > 1; k >>= 1) ++b;
        return b;
    }

    std::size_t code_bits() const { return num_subspaces * bits_per_index(); }
    std::size_t code_bytes() const { return (code_bits() + 7) / 8; }

    bool operator==(const SubspaceShape&) const = default;
};

// Minimal dense row-major matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgumentError(std::string(what) + " contains a non-finite value");
}

// Scales `v` to unit Euclidean norm in place. Throws ZeroVectorError when the
// norm is below the zero tolerance; `subspace` tags the error for callers
// that normalize per block.
inline void l2_normalize_inplace(std::span<double> v,
                                 std::size_t subspace = ZeroVectorError::npos) {
    double n = l2_norm(v);
    if (n < kZeroVectorTolerance) {
        std::string what = subspace == ZeroVectorError::npos
                               ? std::string("cannot normalize a zero vector")
                               : "zero sub-vector in subspace " + std::to_string(subspace);
        throw ZeroVectorError(what, subspace);
    }
    for (double& x : v) x /= n;
}

inline std::vector<double> l2_normalize(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    l2_normalize_inplace(out);
    return out;
}

// Normalizes each of the M length-d blocks of `x` to unit norm.
inline std::vector<double> intra_normalize(std::span<const double> x, const SubspaceShape& shape) {
    if (x.size() != shape.total_dim)
        throw ShapeMismatchError("intra_normalize: vector length " + std::to_string(x.size()) +
                                 " != total_dim " + std::to_string(shape.total_dim));
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t m = 0; m < shape.num_subspaces; ++m)
        l2_normalize_inplace(std::span<double>(out.data() + m * shape.sub_dim, shape.sub_dim), m);
    return out;
}

// softmax(scale * scores), computed with max-subtraction. scale == 0 yields
// the uniform distribution (the well-defined limit).
inline std::vector<double> scaled_softmax(std::span<const double> scores, double scale) {
    check_finite(scores, "scaled_softmax scores");
    if (!std::isfinite(scale) || scale < 0.0)
        throw InvalidArgumentError("scaled_softmax scale must be finite and >= 0");
    const std::size_t n = scores.size();
    if (n == 0) throw InvalidArgumentError("scaled_softmax on an empty vector");
    std::vector<double> out(n);
    if (scale == 0.0) {
        for (double& p : out) p = 1.0 / static_cast<double>(n);
        return out;
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (double s : scores) hi = std::max(hi, scale * s);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(scale * scores[i] - hi);
        sum += out[i];
    }
    for (double& p : out) p /= sum;
    return out;
}

// Shannon entropy in nats; 0*log(0) is treated as 0.
inline double shannon_entropy(std::span<const double> p) {
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0))
            throw InvalidDistributionError("entropy input has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InvalidDistributionError("entropy input sums to " + std::to_string(sum) + ", expected 1");
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

}  // namespace gpq
