#pragma once

// Training objectives: batch metric loss over feature/quantized similarity,
// per-subspace cosine classification, per-subspace prediction entropy, and
// the combined objective with its mini-max gradient routing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/numerics.hpp"
#include "gpq/quantizer.hpp"

namespace gpq {

// Per-subspace class prototypes: M matrices of Nc unit-norm columns, plus
// the logit scale used by the classification and entropy losses.
struct Prototypes {
    std::size_t num_subspaces = 0, sub_dim = 0, num_classes = 0;
    std::vector<double> weights;  // [m][class][component], M*Nc*d
    double class_scale = 4.0;     // logit sharpness

    std::span<const double> prototype(std::size_t m, std::size_t l) const {
        return {weights.data() + (m * num_classes + l) * sub_dim, sub_dim};
    }
    std::span<double> prototype(std::size_t m, std::size_t l) {
        return {weights.data() + (m * num_classes + l) * sub_dim, sub_dim};
    }

    static Prototypes random_init(std::size_t num_subspaces, std::size_t sub_dim,
                                  std::size_t num_classes, double class_scale,
                                  std::uint64_t seed) {
        if (num_subspaces < 1 || sub_dim < 1 || num_classes < 1)
            throw InvalidConfigError("prototypes require positive dimensions");
        Prototypes p;
        p.num_subspaces = num_subspaces;
        p.sub_dim = sub_dim;
        p.num_classes = num_classes;
        p.class_scale = class_scale;
        p.weights.resize(num_subspaces * num_classes * sub_dim);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t m = 0; m < num_subspaces; ++m)
            for (std::size_t l = 0; l < num_classes; ++l) {
                auto col = p.prototype(m, l);
                for (double& x : col) x = gauss(rng);
                l2_normalize_inplace(col);
            }
        return p;
    }
};

// One training batch: equally many labeled and unlabeled intra-normalized
// features; labels are multi-hot rows over num_classes.
struct LabeledBatch {
    std::vector<std::vector<double>> labeled_features;
    std::vector<std::vector<double>> labels;
    std::vector<std::vector<double>> unlabeled_features;
};

struct NpqLossResult {
    double loss = 0.0;
    Matrix d_features;   // B x D
    Matrix d_quantized;  // B x D
};

// Cross entropy between the softmax over each anchor's similarity row
// S_b = [x_b . q_1, ..., x_b . q_B] and that anchor's normalized
// label-agreement row. Returns the batch mean and gradients w.r.t. the
// features and the quantized vectors (treated as independent inputs).
inline NpqLossResult npq_loss(const std::vector<std::vector<double>>& features,
                              const std::vector<std::vector<double>>& quantized,
                              const std::vector<std::vector<double>>& labels) {
    const std::size_t B = features.size();
    if (B < 2) throw DegenerateBatchError("npq_loss needs a batch of at least 2");
    if (quantized.size() != B || labels.size() != B)
        throw ShapeMismatchError("npq_loss: features/quantized/labels counts differ");
    const std::size_t D = features[0].size();
    for (std::size_t b = 0; b < B; ++b)
        if (features[b].size() != D || quantized[b].size() != D)
            throw ShapeMismatchError("npq_loss: inconsistent feature dimension");
    for (std::size_t b = 1; b < B; ++b)
        if (labels[b].size() != labels[0].size())
            throw ShapeMismatchError("npq_loss: label rows have different widths");

    NpqLossResult out;
    out.d_features = Matrix(B, D);
    out.d_quantized = Matrix(B, D);

    std::vector<double> sims(B), target(B);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < B; ++j) sims[j] = dot(features[b], quantized[j]);
        auto probs = scaled_softmax(sims, 1.0);

        double agree_sum = 0.0;
        for (std::size_t j = 0; j < B; ++j) {
            target[j] = dot(labels[b], labels[j]);
            agree_sum += target[j];
        }
        if (agree_sum <= 0.0)
            throw DegenerateBatchError("anchor " + std::to_string(b) +
                                       " has zero label agreement with the whole batch");
        for (double& t : target) t /= agree_sum;

        for (std::size_t j = 0; j < B; ++j) {
            if (target[j] > 0.0) out.loss -= target[j] * std::log(std::max(probs[j], kLogFloor));
            // d loss / d S_bj, already carrying the 1/B batch mean
            const double g = (probs[j] - target[j]) / static_cast<double>(B);
            auto d_x = out.d_features.row(b);
            auto d_q = out.d_quantized.row(j);
            for (std::size_t i = 0; i < D; ++i) {
                d_x[i] += g * quantized[j][i];
                d_q[i] += g * features[b][i];
            }
        }
    }
    out.loss /= static_cast<double>(B);
    return out;
}

struct PointLossResult {
    double loss = 0.0;
    std::vector<double> d_feature;     // D
    std::vector<double> d_prototypes;  // M*Nc*d, matching Prototypes::weights
};

namespace detail {

inline void check_proto_shapes(std::span<const double> feature, const Prototypes& proto) {
    if (feature.size() != proto.num_subspaces * proto.sub_dim)
        throw ShapeMismatchError("feature length does not match prototype shape");
}

// Adds `weight` times the loss gradients into the output arrays; returns the
// unweighted loss. `target` must sum to 1.
inline double cls_term(std::span<const double> feature, std::span<const double> target,
                       const Prototypes& proto, double weight, std::span<double> d_feature,
                       std::span<double> d_prototypes) {
    const std::size_t M = proto.num_subspaces, d = proto.sub_dim, Nc = proto.num_classes;
    const double beta = proto.class_scale;
    double loss = 0.0;
    std::vector<double> logits(Nc);
    for (std::size_t m = 0; m < M; ++m) {
        auto x = feature.subspan(m * d, d);
        for (std::size_t l = 0; l < Nc; ++l) logits[l] = dot(proto.prototype(m, l), x);
        auto probs = scaled_softmax(logits, beta);
        for (std::size_t l = 0; l < Nc; ++l) {
            if (target[l] > 0.0) loss -= target[l] * std::log(std::max(probs[l], kLogFloor));
            if (weight == 0.0) continue;
            // d loss_m / d logit_l = beta * (p_l - y_l), averaged over M
            const double g = weight * beta * (probs[l] - target[l]) / static_cast<double>(M);
            auto col = proto.prototype(m, l);
            auto d_col = d_prototypes.subspan((m * Nc + l) * d, d);
            for (std::size_t j = 0; j < d; ++j) {
                d_feature[m * d + j] += g * col[j];
                d_col[j] += g * x[j];
            }
        }
    }
    return loss / static_cast<double>(M);
}

inline double sem_term(std::span<const double> feature, const Prototypes& proto, double weight,
                       std::span<double> d_feature, std::span<double> d_prototypes) {
    const std::size_t M = proto.num_subspaces, d = proto.sub_dim, Nc = proto.num_classes;
    const double beta = proto.class_scale;
    double loss = 0.0;
    std::vector<double> logits(Nc);
    for (std::size_t m = 0; m < M; ++m) {
        auto x = feature.subspan(m * d, d);
        for (std::size_t l = 0; l < Nc; ++l) logits[l] = dot(proto.prototype(m, l), x);
        auto probs = scaled_softmax(logits, beta);
        double entropy = 0.0;
        for (double p : probs)
            if (p > 0.0) entropy -= p * std::log(p);
        loss += entropy;
        if (weight == 0.0) continue;
        for (std::size_t l = 0; l < Nc; ++l) {
            // d entropy / d logit_l = -p_l (log p_l + entropy), averaged over M
            const double lp = std::log(std::max(probs[l], kLogFloor));
            const double g = -weight * beta * probs[l] * (lp + entropy) / static_cast<double>(M);
            auto col = proto.prototype(m, l);
            auto d_col = d_prototypes.subspan((m * Nc + l) * d, d);
            for (std::size_t j = 0; j < d; ++j) {
                d_feature[m * d + j] += g * col[j];
                d_col[j] += g * x[j];
            }
        }
    }
    return loss / static_cast<double>(M);
}

inline std::vector<double> normalized_target(std::span<const double> label) {
    double sum = 0.0;
    for (double y : label) sum += y;
    if (sum <= 0.0) throw InvalidDistributionError("label row has no set entries");
    std::vector<double> t(label.begin(), label.end());
    for (double& y : t) y /= sum;
    return t;
}

}  // namespace detail

// Mean over subspaces of cross entropy between softmax(scale * W_m^T x_m)
// and the (normalized) label.
inline PointLossResult cls_loss(std::span<const double> feature, std::span<const double> label,
                                const Prototypes& proto) {
    detail::check_proto_shapes(feature, proto);
    if (label.size() != proto.num_classes)
        throw ShapeMismatchError("cls_loss: label length != num_classes");
    auto target = detail::normalized_target(label);
    PointLossResult out;
    out.d_feature.assign(feature.size(), 0.0);
    out.d_prototypes.assign(proto.weights.size(), 0.0);
    out.loss = detail::cls_term(feature, target, proto, 1.0, out.d_feature, out.d_prototypes);
    return out;
}

// Mean over subspaces of the Shannon entropy of softmax(scale * W_m^T x_m).
inline PointLossResult sem_loss(std::span<const double> feature, const Prototypes& proto) {
    detail::check_proto_shapes(feature, proto);
    PointLossResult out;
    out.d_feature.assign(feature.size(), 0.0);
    out.d_prototypes.assign(proto.weights.size(), 0.0);
    out.loss = detail::sem_term(feature, proto, 1.0, out.d_feature, out.d_prototypes);
    return out;
}

// Gradients of the combined objective, routed per parameter group. The
// codebook and the prototypes receive plain gradients of
//   total = npq + lambda_cls * cls_mean - lambda_sem * sem_mean
// (so the prototypes ascend the entropy). The per-item encoder gradients are
// split into an upstream part (labeled items) and a reversal part (unlabeled
// items, gradient of the -lambda_sem term) whose sign the encoder flips at
// its pre-normalization boundary, turning the encoder's entropy update into
// a descent.
struct TotalObjectiveResult {
    double total = 0.0, npq = 0.0, cls = 0.0, sem = 0.0;
    Matrix d_labeled;                  // B x D, upstream grads for labeled items
    Matrix d_unlabeled_reversal;       // B x D, reversal grads for unlabeled items
    std::vector<double> d_codebook;    // matching Codebook::codewords
    std::vector<double> d_prototypes;  // matching Prototypes::weights
};

inline TotalObjectiveResult total_objective(const LabeledBatch& batch, const Codebook& cb,
                                            const Prototypes& proto, double lambda_cls,
                                            double lambda_sem) {
    const std::size_t B = batch.labeled_features.size();
    if (batch.unlabeled_features.size() != B || batch.labels.size() != B)
        throw ShapeMismatchError("total_objective: batch sides must have equal counts");
    for (const auto& label : batch.labels)
        if (label.size() != proto.num_classes)
            throw ShapeMismatchError("total_objective: label width != prototype classes");
    if (lambda_cls < 0.0 || lambda_sem < 0.0)
        throw InvalidArgumentError("loss weights must be non-negative");
    const auto& shape = cb.shape;
    const std::size_t D = shape.total_dim;

    TotalObjectiveResult out;
    out.d_labeled = Matrix(B, D);
    out.d_unlabeled_reversal = Matrix(B, D);
    out.d_codebook.assign(cb.codewords.size(), 0.0);
    out.d_prototypes.assign(proto.weights.size(), 0.0);

    // metric loss over soft-quantized labeled items
    std::vector<SoftQuantization> sq(B);
    std::vector<std::vector<double>> quantized(B);
    for (std::size_t b = 0; b < B; ++b) {
        sq[b] = soft_quantize(batch.labeled_features[b], cb);
        quantized[b] = sq[b].quantized;
    }
    auto npq = npq_loss(batch.labeled_features, quantized, batch.labels);
    out.npq = npq.loss;
    out.d_labeled = npq.d_features;

    // chain the quantized-vector gradients through the soft assignment
    for (std::size_t b = 0; b < B; ++b) {
        auto d_q = npq.d_quantized.row(b);
        auto x = std::span<const double>(batch.labeled_features[b]);
        for (std::size_t m = 0; m < shape.num_subspaces; ++m) {
            auto g = soft_assign_backward(
                x.subspan(m * shape.sub_dim, shape.sub_dim), cb.subspace(m), shape.sub_dim,
                cb.assign_scale,
                std::span<const double>(sq[b].weights)
                    .subspan(m * shape.num_codewords, shape.num_codewords),
                d_q.subspan(m * shape.sub_dim, shape.sub_dim));
            auto d_x = out.d_labeled.row(b);
            for (std::size_t j = 0; j < shape.sub_dim; ++j)
                d_x[m * shape.sub_dim + j] += g.d_sub[j];
            double* d_cb = out.d_codebook.data() + m * shape.num_codewords * shape.sub_dim;
            for (std::size_t i = 0; i < g.d_codewords.size(); ++i) d_cb[i] += g.d_codewords[i];
        }
    }

    // classification on labeled items, entropy on unlabeled items
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto target = detail::normalized_target(batch.labels[b]);
        out.cls += inv_b * detail::cls_term(batch.labeled_features[b], target, proto,
                                            lambda_cls * inv_b, out.d_labeled.row(b),
                                            out.d_prototypes);
        // The reversal row carries d(-lambda_sem * sem_mean)/d feature; the
        // prototype gradient gets the same signed term directly.
        out.sem += inv_b * detail::sem_term(batch.unlabeled_features[b], proto,
                                            -lambda_sem * inv_b,
                                            out.d_unlabeled_reversal.row(b), out.d_prototypes);
    }
    out.total = out.npq + lambda_cls * out.cls - lambda_sem * out.sem;
    return out;
}

}  // namespace gpq
