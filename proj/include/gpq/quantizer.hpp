#pragma once

// Codebooks, soft and hard assignment, quantized reconstruction, and the
// bit-level packing of codeword indices into binary codes.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/numerics.hpp"

namespace gpq {

// M codebooks of K unit-norm codewords each, plus the softness scale used
// for differentiable assignment.
struct Codebook {
    SubspaceShape shape;
    std::vector<double> codewords;  // [m][k][component], M*K*d
    double assign_scale = 20.0;     // softmax sharpness for soft assignment

    std::span<const double> codeword(std::size_t m, std::size_t k) const {
        return {codewords.data() + (m * shape.num_codewords + k) * shape.sub_dim, shape.sub_dim};
    }
    std::span<double> codeword(std::size_t m, std::size_t k) {
        return {codewords.data() + (m * shape.num_codewords + k) * shape.sub_dim, shape.sub_dim};
    }

    // All K codewords of subspace m as one contiguous block.
    std::span<const double> subspace(std::size_t m) const {
        return {codewords.data() + m * shape.num_codewords * shape.sub_dim,
                shape.num_codewords * shape.sub_dim};
    }

    // Codewords drawn uniformly on the unit sphere of each subspace.
    static Codebook random_init(const SubspaceShape& shape, double assign_scale,
                                std::uint64_t seed) {
        shape.validate();
        Codebook cb;
        cb.shape = shape;
        cb.assign_scale = assign_scale;
        cb.codewords.resize(shape.num_subspaces * shape.num_codewords * shape.sub_dim);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t m = 0; m < shape.num_subspaces; ++m)
            for (std::size_t k = 0; k < shape.num_codewords; ++k) {
                auto cw = cb.codeword(m, k);
                for (double& x : cw) x = gauss(rng);
                l2_normalize_inplace(cw);
            }
        return cb;
    }

    void validate(double tol = 1e-6) const {
        shape.validate();
        if (codewords.size() != shape.num_subspaces * shape.num_codewords * shape.sub_dim)
            throw ShapeMismatchError("codebook array size does not match its shape");
        check_finite(codewords, "codebook");
        for (std::size_t m = 0; m < shape.num_subspaces; ++m)
            for (std::size_t k = 0; k < shape.num_codewords; ++k)
                if (std::abs(l2_norm(codeword(m, k)) - 1.0) > tol)
                    throw InvalidArgumentError("codeword (" + std::to_string(m) + "," +
                                               std::to_string(k) + ") is not unit-norm");
    }
};

// Per-item codeword selection: one index in [0, K) per subspace.
struct Code {
    std::vector<std::uint32_t> indices;

    bool operator==(const Code&) const = default;
};

struct SoftAssignment {
    std::vector<double> quantized;  // convex combination of codewords, length d
    std::vector<double> weights;    // softmax assignment weights, length K
};

// Differentiable assignment of one sub-vector against K codewords:
// weights = softmax(scale * cosine similarities), quantized = weighted sum.
inline SoftAssignment soft_assign(std::span<const double> sub,
                                  std::span<const double> codewords,
                                  std::size_t sub_dim, double scale) {
    if (sub.size() != sub_dim || codewords.size() % sub_dim != 0)
        throw ShapeMismatchError("soft_assign: inconsistent sub-vector/codeword sizes");
    const std::size_t K = codewords.size() / sub_dim;
    std::vector<double> sims(K);
    for (std::size_t k = 0; k < K; ++k)
        sims[k] = dot(sub, codewords.subspan(k * sub_dim, sub_dim));
    SoftAssignment out;
    out.weights = scaled_softmax(sims, scale);
    out.quantized.assign(sub_dim, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double w = out.weights[k];
        auto cw = codewords.subspan(k * sub_dim, sub_dim);
        for (std::size_t j = 0; j < sub_dim; ++j) out.quantized[j] += w * cw[j];
    }
    return out;
}

struct SoftAssignGrad {
    std::vector<double> d_sub;        // length d
    std::vector<double> d_codewords;  // length K*d
};

// Backpropagates d_quantized through soft_assign. `weights` must be the
// forward assignment weights for (sub, codewords, scale).
inline SoftAssignGrad soft_assign_backward(std::span<const double> sub,
                                           std::span<const double> codewords,
                                           std::size_t sub_dim, double scale,
                                           std::span<const double> weights,
                                           std::span<const double> d_quantized) {
    const std::size_t K = codewords.size() / sub_dim;
    if (weights.size() != K || d_quantized.size() != sub_dim)
        throw ShapeMismatchError("soft_assign_backward: inconsistent gradient sizes");
    SoftAssignGrad g;
    g.d_sub.assign(sub_dim, 0.0);
    g.d_codewords.assign(K * sub_dim, 0.0);

    // d_weight[k] = d_quantized . codeword_k
    std::vector<double> d_weight(K);
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        d_weight[k] = dot(d_quantized, codewords.subspan(k * sub_dim, sub_dim));
        mean += weights[k] * d_weight[k];
    }
    // Softmax Jacobian: d_sim[k] = scale * w_k * (d_weight[k] - sum_j w_j d_weight[j])
    for (std::size_t k = 0; k < K; ++k) {
        const double d_sim = scale * weights[k] * (d_weight[k] - mean);
        auto cw = codewords.subspan(k * sub_dim, sub_dim);
        auto d_cw = std::span<double>(g.d_codewords).subspan(k * sub_dim, sub_dim);
        for (std::size_t j = 0; j < sub_dim; ++j) {
            g.d_sub[j] += d_sim * cw[j];
            // direct convex-combination term plus the similarity term
            d_cw[j] += weights[k] * d_quantized[j] + d_sim * sub[j];
        }
    }
    return g;
}

struct SoftQuantization {
    std::vector<double> quantized;  // length D
    std::vector<double> weights;    // length M*K, per-subspace assignment weights
};

// Concatenation of per-subspace soft assignments.
inline SoftQuantization soft_quantize(std::span<const double> feature, const Codebook& cb) {
    const auto& s = cb.shape;
    if (feature.size() != s.total_dim)
        throw ShapeMismatchError("soft_quantize: feature length != codebook total_dim");
    SoftQuantization out;
    out.quantized.resize(s.total_dim);
    out.weights.resize(s.num_subspaces * s.num_codewords);
    for (std::size_t m = 0; m < s.num_subspaces; ++m) {
        auto sa = soft_assign(feature.subspan(m * s.sub_dim, s.sub_dim), cb.subspace(m),
                              s.sub_dim, cb.assign_scale);
        std::copy(sa.quantized.begin(), sa.quantized.end(), out.quantized.begin() + m * s.sub_dim);
        std::copy(sa.weights.begin(), sa.weights.end(),
                  out.weights.begin() + m * s.num_codewords);
    }
    return out;
}

// Index of the most cosine-similar codeword; ties break to the lowest index.
inline std::size_t hard_assign(std::span<const double> sub, std::span<const double> codewords,
                               std::size_t sub_dim) {
    if (sub.size() != sub_dim || codewords.empty() || codewords.size() % sub_dim != 0)
        throw ShapeMismatchError("hard_assign: inconsistent sub-vector/codeword sizes");
    const std::size_t K = codewords.size() / sub_dim;
    std::size_t best = 0;
    double best_sim = dot(sub, codewords.subspan(0, sub_dim));
    for (std::size_t k = 1; k < K; ++k) {
        double sim = dot(sub, codewords.subspan(k * sub_dim, sub_dim));
        if (sim > best_sim) {
            best_sim = sim;
            best = k;
        }
    }
    return best;
}

inline Code encode(std::span<const double> feature, const Codebook& cb) {
    const auto& s = cb.shape;
    if (feature.size() != s.total_dim)
        throw ShapeMismatchError("encode: feature length != codebook total_dim");
    Code code;
    code.indices.resize(s.num_subspaces);
    for (std::size_t m = 0; m < s.num_subspaces; ++m)
        code.indices[m] = static_cast<std::uint32_t>(
            hard_assign(feature.subspan(m * s.sub_dim, s.sub_dim), cb.subspace(m), s.sub_dim));
    return code;
}

// Concatenation of the selected codewords.
inline std::vector<double> reconstruct(const Code& code, const Codebook& cb) {
    const auto& s = cb.shape;
    if (code.indices.size() != s.num_subspaces)
        throw ShapeMismatchError("reconstruct: code length != num_subspaces");
    std::vector<double> out(s.total_dim);
    for (std::size_t m = 0; m < s.num_subspaces; ++m) {
        if (code.indices[m] >= s.num_codewords)
            throw IndexOutOfRangeError("reconstruct: sub-index " + std::to_string(code.indices[m]) +
                                       " out of range in subspace " + std::to_string(m));
        auto cw = cb.codeword(m, code.indices[m]);
        std::copy(cw.begin(), cw.end(), out.begin() + m * s.sub_dim);
    }
    return out;
}

// Packs the M sub-indices at log2(K) bits each, concatenated in subspace
// order, bits filled least-significant-first within each byte; the final
// byte is zero-padded.
inline std::vector<std::uint8_t> pack(const Code& code, const SubspaceShape& shape) {
    if (code.indices.size() != shape.num_subspaces)
        throw ShapeMismatchError("pack: code length != num_subspaces");
    const std::size_t bits = shape.bits_per_index();
    std::vector<std::uint8_t> out(shape.code_bytes(), 0);
    std::size_t bit_pos = 0;
    for (std::uint32_t idx : code.indices) {
        if (idx >= shape.num_codewords)
            throw IndexOutOfRangeError("pack: sub-index " + std::to_string(idx) + " out of range");
        for (std::size_t b = 0; b < bits; ++b, ++bit_pos)
            if ((idx >> b) & 1u) out[bit_pos >> 3] |= static_cast<std::uint8_t>(1u << (bit_pos & 7));
    }
    return out;
}

inline Code unpack(std::span<const std::uint8_t> bytes, const SubspaceShape& shape) {
    if (bytes.size() != shape.code_bytes())
        throw MalformedBytesError("unpack: expected " + std::to_string(shape.code_bytes()) +
                                  " bytes, got " + std::to_string(bytes.size()));
    const std::size_t bits = shape.bits_per_index();
    Code code;
    code.indices.assign(shape.num_subspaces, 0);
    std::size_t bit_pos = 0;
    for (std::uint32_t& idx : code.indices)
        for (std::size_t b = 0; b < bits; ++b, ++bit_pos)
            if ((bytes[bit_pos >> 3] >> (bit_pos & 7)) & 1u) idx |= 1u << b;
    return code;
}

}  // namespace gpq
