#pragma once

// Reference feature extractor: raw input -> affine -> tanh -> affine ->
// intra-normalized feature. Backward propagates two gradient streams, one
// of which is sign-flipped at the pre-normalization boundary (gradient
// reversal). Any object providing this encode/backward contract can stand
// in for the reference encoder.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/io.hpp"
#include "gpq/numerics.hpp"

namespace gpq {

struct EncoderParams {
    std::size_t input_dim = 0, hidden_dim = 0, output_dim = 0;
    Matrix w1;               // hidden x input
    std::vector<double> b1;  // hidden
    Matrix w2;               // output x hidden
    std::vector<double> b2;  // output

    // Uniform init in [-s, s] with s = 1/sqrt(fan_in), per layer.
    static EncoderParams init(std::size_t input_dim, std::size_t hidden_dim,
                              std::size_t output_dim, std::uint64_t seed) {
        if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
            throw InvalidConfigError("encoder dimensions must be positive");
        EncoderParams p;
        p.input_dim = input_dim;
        p.hidden_dim = hidden_dim;
        p.output_dim = output_dim;
        p.w1 = Matrix(hidden_dim, input_dim);
        p.b1.assign(hidden_dim, 0.0);
        p.w2 = Matrix(output_dim, hidden_dim);
        p.b2.assign(output_dim, 0.0);
        std::mt19937_64 rng(seed);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        std::uniform_real_distribution<double> u1(-s1, s1), u2(-s2, s2);
        for (double& x : p.w1.data) x = u1(rng);
        for (double& x : p.b1) x = u1(rng);
        for (double& x : p.w2.data) x = u2(rng);
        for (double& x : p.b2) x = u2(rng);
        return p;
    }
};

// Forward activations kept for the backward pass.
struct EncoderCache {
    std::vector<double> input;    // raw input
    std::vector<double> hidden;   // tanh(w1 * input + b1)
    std::vector<double> prenorm;  // w2 * hidden + b2
    std::vector<double> feature;  // intra-normalized prenorm
};

struct GradientBundle {
    Matrix d_w1;
    std::vector<double> d_b1;
    Matrix d_w2;
    std::vector<double> d_b2;
    std::vector<double> d_prenorm;  // gradient w.r.t. the pre-normalization output

    static GradientBundle zeros_like(const EncoderParams& p) {
        GradientBundle g;
        g.d_w1 = Matrix(p.hidden_dim, p.input_dim);
        g.d_b1.assign(p.hidden_dim, 0.0);
        g.d_w2 = Matrix(p.output_dim, p.hidden_dim);
        g.d_b2.assign(p.output_dim, 0.0);
        g.d_prenorm.assign(p.output_dim, 0.0);
        return g;
    }

    void accumulate(const GradientBundle& other) {
        auto axpy = [](std::vector<double>& a, const std::vector<double>& b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        };
        axpy(d_w1.data, other.d_w1.data);
        axpy(d_b1, other.d_b1);
        axpy(d_w2.data, other.d_w2.data);
        axpy(d_b2, other.d_b2);
        axpy(d_prenorm, other.d_prenorm);
    }
};

inline EncoderCache encode(const EncoderParams& p, std::span<const double> raw,
                           const SubspaceShape& shape) {
    if (raw.size() != p.input_dim)
        throw ShapeMismatchError("encode: raw input length " + std::to_string(raw.size()) +
                                 " != encoder input_dim " + std::to_string(p.input_dim));
    if (p.output_dim != shape.total_dim)
        throw ShapeMismatchError("encode: encoder output_dim != shape total_dim");
    EncoderCache c;
    c.input.assign(raw.begin(), raw.end());
    c.hidden.resize(p.hidden_dim);
    for (std::size_t i = 0; i < p.hidden_dim; ++i)
        c.hidden[i] = std::tanh(dot(p.w1.row(i), raw) + p.b1[i]);
    c.prenorm.resize(p.output_dim);
    for (std::size_t i = 0; i < p.output_dim; ++i)
        c.prenorm[i] = dot(p.w2.row(i), c.hidden) + p.b2[i];
    c.feature = intra_normalize(c.prenorm, shape);
    return c;
}

namespace detail {

// Jacobian of per-block l2 normalization: for y = v/|v| per block,
// g_v = (g_y - (g_y . y) y) / |v|. The result is orthogonal to y.
inline std::vector<double> normalization_backward(const EncoderCache& cache,
                                                  std::span<const double> d_feature,
                                                  std::size_t sub_dim) {
    const std::size_t D = cache.prenorm.size();
    std::vector<double> d_prenorm(D);
    for (std::size_t m = 0; m * sub_dim < D; ++m) {
        auto v = std::span<const double>(cache.prenorm).subspan(m * sub_dim, sub_dim);
        auto y = std::span<const double>(cache.feature).subspan(m * sub_dim, sub_dim);
        auto gy = d_feature.subspan(m * sub_dim, sub_dim);
        const double n = l2_norm(v);
        const double proj = dot(gy, y);
        for (std::size_t j = 0; j < sub_dim; ++j)
            d_prenorm[m * sub_dim + j] = (gy[j] - proj * y[j]) / n;
    }
    return d_prenorm;
}

}  // namespace detail

// Backward through the encoder for one input. `upstream` flows through
// the chain unchanged; `reversal` also flows through the normalization
// Jacobian but its sign is flipped at the pre-normalization boundary, so
// the returned parameter gradients are those of (upstream path) minus
// (reversal path). Either span may be empty (treated as zero).
inline GradientBundle encoder_backward(const EncoderParams& p, const EncoderCache& cache,
                                       std::span<const double> upstream,
                                       std::span<const double> reversal,
                                       std::size_t sub_dim) {
    const std::size_t D = p.output_dim;
    if ((!upstream.empty() && upstream.size() != D) || (!reversal.empty() && reversal.size() != D))
        throw ShapeMismatchError("encoder_backward: gradient length != output_dim");
    if (cache.prenorm.size() != D || cache.input.size() != p.input_dim ||
        cache.hidden.size() != p.hidden_dim)
        throw ShapeMismatchError("encoder_backward: cache does not match encoder params");

    std::vector<double> d_feature(D, 0.0);
    for (std::size_t i = 0; i < upstream.size(); ++i) d_feature[i] += upstream[i];
    for (std::size_t i = 0; i < reversal.size(); ++i) d_feature[i] -= reversal[i];

    GradientBundle g = GradientBundle::zeros_like(p);
    g.d_prenorm = detail::normalization_backward(cache, d_feature, sub_dim);

    // second affine layer
    std::vector<double> d_hidden(p.hidden_dim, 0.0);
    for (std::size_t i = 0; i < D; ++i) {
        const double gi = g.d_prenorm[i];
        g.d_b2[i] = gi;
        auto w2_row = p.w2.row(i);
        auto d_w2_row = g.d_w2.row(i);
        for (std::size_t j = 0; j < p.hidden_dim; ++j) {
            d_w2_row[j] = gi * cache.hidden[j];
            d_hidden[j] += gi * w2_row[j];
        }
    }
    // tanh and first affine layer
    for (std::size_t i = 0; i < p.hidden_dim; ++i) {
        const double gu = d_hidden[i] * (1.0 - cache.hidden[i] * cache.hidden[i]);
        g.d_b1[i] = gu;
        auto d_w1_row = g.d_w1.row(i);
        for (std::size_t j = 0; j < p.input_dim; ++j) d_w1_row[j] = gu * cache.input[j];
    }
    return g;
}

// --- checkpoint format: magic "GPQE", version u16, dims u32 x3, then all
// parameters in declaration order as little-endian float32 ---

inline constexpr char kEncoderMagic[4] = {'G', 'P', 'Q', 'E'};
inline constexpr std::uint16_t kEncoderVersion = 1;

inline void save_encoder(const EncoderParams& p, ByteWriter& w) {
    w.write_magic(kEncoderMagic);
    w.write_u16(kEncoderVersion);
    w.write_u32(static_cast<std::uint32_t>(p.input_dim));
    w.write_u32(static_cast<std::uint32_t>(p.hidden_dim));
    w.write_u32(static_cast<std::uint32_t>(p.output_dim));
    for (double x : p.w1.data) w.write_f32(static_cast<float>(x));
    for (double x : p.b1) w.write_f32(static_cast<float>(x));
    for (double x : p.w2.data) w.write_f32(static_cast<float>(x));
    for (double x : p.b2) w.write_f32(static_cast<float>(x));
}

inline EncoderParams load_encoder(ByteReader& r) {
    r.expect_magic(kEncoderMagic, "GPQE encoder checkpoint");
    r.expect_version(kEncoderVersion, "GPQE encoder checkpoint");
    const std::size_t input = r.read_u32();
    const std::size_t hidden = r.read_u32();
    const std::size_t output = r.read_u32();
    if (input < 1 || hidden < 1 || output < 1)
        throw MalformedBytesError("GPQE checkpoint has zero dimensions");
    EncoderParams p;
    p.input_dim = input;
    p.hidden_dim = hidden;
    p.output_dim = output;
    p.w1 = Matrix(hidden, input);
    p.b1.resize(hidden);
    p.w2 = Matrix(output, hidden);
    p.b2.resize(output);
    for (double& x : p.w1.data) x = r.read_f32();
    for (double& x : p.b1) x = r.read_f32();
    for (double& x : p.w2.data) x = r.read_f32();
    for (double& x : p.b2) x = r.read_f32();
    return p;
}

inline void save_encoder(const EncoderParams& p, const std::string& path) {
    auto out = open_output(path);
    ByteWriter w(out);
    save_encoder(p, w);
}

inline EncoderParams load_encoder(const std::string& path) {
    auto in = open_input(path);
    ByteReader r(in);
    return load_encoder(r);
}

}  // namespace gpq
