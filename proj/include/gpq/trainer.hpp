#pragma once

// Semi-supervised training loop: deterministic batch assembly, ADAM with
// exponential learning-rate decay and unit-norm re-projection, gradient
// routing into the encoder's reversal hook, and the post-training
// prototype-to-codeword soft update.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gpq/encoder.hpp"
#include "gpq/error.hpp"
#include "gpq/io.hpp"
#include "gpq/numerics.hpp"
#include "gpq/objectives.hpp"
#include "gpq/quantizer.hpp"

namespace gpq {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

struct TrainConfig {
    double assign_scale = 20.0;       // soft-assignment sharpness (alpha)
    double class_scale = 4.0;         // classifier logit sharpness (beta)
    std::size_t num_codewords = 16;   // K
    std::size_t sub_dim = 12;         // d
    std::size_t num_subspaces = 8;    // M; code length is M*log2(K) bits
    std::size_t hidden_dim = 128;     // encoder hidden width
    double lambda_cls = 0.1;
    double lambda_sem = 0.1;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double decay_rate = 0.9;
    std::size_t decay_interval = 500;  // steps per decay_rate exponent unit
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    // When false the classifier is absent: prototypes receive no updates and
    // no codeword update from prototypes is applied.
    bool classifier_enabled = true;
    bool proto_update_each_epoch = false;

    SubspaceShape shape() const {
        return SubspaceShape::create(num_subspaces, sub_dim, num_codewords);
    }

    void validate() const {
        shape().validate();
        if (assign_scale < 0 || class_scale < 0) throw InvalidConfigError("scales must be >= 0");
        if (lambda_cls < 0 || lambda_sem < 0) throw InvalidConfigError("lambdas must be >= 0");
        if (learning_rate <= 0 || adam_eps <= 0) throw InvalidConfigError("learning rate and eps must be > 0");
        if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
            throw InvalidConfigError("adam betas must lie in [0, 1)");
        if (decay_rate <= 0 || decay_rate > 1) throw InvalidConfigError("decay_rate must be in (0, 1]");
        if (decay_interval < 1) throw InvalidConfigError("decay_interval must be >= 1");
        if (batch_size < 2) throw InvalidConfigError("batch_size must be >= 2");
        if (hidden_dim < 1) throw InvalidConfigError("hidden_dim must be >= 1");
    }
};

struct AdamSlot {
    std::vector<double> m, v;

    static AdamSlot sized(std::size_t n) {
        AdamSlot s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        return s;
    }
};

struct AdamState {
    AdamSlot w1, b1, w2, b2, codebook, prototypes;
};

struct ModelState {
    EncoderParams encoder;
    Codebook codebook;
    Prototypes prototypes;
    AdamState adam;
    std::uint64_t step = 0;

    // Sub-seeds are derived independently per component so that, e.g., the
    // codebook draw does not shift when the classifier is absent.
    static ModelState init(std::size_t input_dim, std::size_t num_classes,
                           const TrainConfig& cfg) {
        cfg.validate();
        ModelState s;
        const auto shape = cfg.shape();
        s.encoder = EncoderParams::init(input_dim, cfg.hidden_dim, shape.total_dim,
                                        splitmix64(cfg.seed ^ 0x656e63ull));
        s.codebook = Codebook::random_init(shape, cfg.assign_scale,
                                           splitmix64(cfg.seed ^ 0x636f6465ull));
        s.prototypes = Prototypes::random_init(shape.num_subspaces, shape.sub_dim, num_classes,
                                               cfg.class_scale,
                                               splitmix64(cfg.seed ^ 0x70726f74ull));
        s.adam.w1 = AdamSlot::sized(s.encoder.w1.data.size());
        s.adam.b1 = AdamSlot::sized(s.encoder.b1.size());
        s.adam.w2 = AdamSlot::sized(s.encoder.w2.data.size());
        s.adam.b2 = AdamSlot::sized(s.encoder.b2.size());
        s.adam.codebook = AdamSlot::sized(s.codebook.codewords.size());
        s.adam.prototypes = AdamSlot::sized(s.prototypes.weights.size());
        return s;
    }
};

// One optimizer step's worth of gradients. An empty prototypes array means
// the classifier is absent and its parameters are left untouched.
struct StepGradients {
    GradientBundle encoder;
    std::vector<double> codebook;
    std::vector<double> prototypes;
};

struct BatchPlan {
    std::vector<std::size_t> labeled;    // indices into the labeled set
    std::vector<std::size_t> unlabeled;  // indices into the unlabeled set
};

// Deterministic epoch plan: the labeled set is shuffled and cut into
// batch_size groups (remainder dropped), covering each labeled item at most
// once; the unlabeled side is consumed from repeated reshuffles so a smaller
// pool recycles.
inline std::vector<BatchPlan> make_batches(std::size_t labeled_count, std::size_t unlabeled_count,
                                           std::size_t batch_size, std::uint64_t seed,
                                           std::size_t epoch = 0) {
    if (labeled_count == 0 || unlabeled_count == 0)
        throw EmptyDatasetError("make_batches: both labeled and unlabeled sets must be non-empty");
    if (batch_size < 1 || batch_size > labeled_count || batch_size > unlabeled_count)
        throw InvalidConfigError("make_batches: batch_size must be in [1, min(labeled, unlabeled)]");
    std::mt19937_64 rng(splitmix64(seed) ^ splitmix64(epoch + 1));

    std::vector<std::size_t> labeled(labeled_count);
    for (std::size_t i = 0; i < labeled_count; ++i) labeled[i] = i;
    std::shuffle(labeled.begin(), labeled.end(), rng);

    const std::size_t num_batches = labeled_count / batch_size;
    std::vector<std::size_t> unlabeled;
    unlabeled.reserve(num_batches * batch_size + unlabeled_count);
    std::vector<std::size_t> pool(unlabeled_count);
    for (std::size_t i = 0; i < unlabeled_count; ++i) pool[i] = i;
    while (unlabeled.size() < num_batches * batch_size) {
        std::shuffle(pool.begin(), pool.end(), rng);
        unlabeled.insert(unlabeled.end(), pool.begin(), pool.end());
    }

    std::vector<BatchPlan> plans(num_batches);
    for (std::size_t b = 0; b < num_batches; ++b) {
        plans[b].labeled.assign(labeled.begin() + b * batch_size,
                                labeled.begin() + (b + 1) * batch_size);
        plans[b].unlabeled.assign(unlabeled.begin() + b * batch_size,
                                  unlabeled.begin() + (b + 1) * batch_size);
    }
    return plans;
}

namespace detail {

inline void adam_update(std::span<double> param, std::span<const double> grad, AdamSlot& slot,
                        double lr, std::uint64_t t, const TrainConfig& cfg) {
    if (param.size() != grad.size() || slot.m.size() != param.size())
        throw ShapeMismatchError("adam_update: gradient shape does not match parameter");
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        slot.m[i] = cfg.adam_beta1 * slot.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
        slot.v[i] = cfg.adam_beta2 * slot.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
}

inline void require_finite(std::span<const double> g, const char* what) {
    for (double x : g)
        if (!std::isfinite(x))
            throw NonFiniteGradientError(std::string("non-finite gradient in ") + what);
}

}  // namespace detail

inline double decayed_learning_rate(const TrainConfig& cfg, std::uint64_t completed_steps) {
    return cfg.learning_rate * std::pow(cfg.decay_rate, static_cast<double>(completed_steps) /
                                                            static_cast<double>(cfg.decay_interval));
}

// Standard ADAM with bias correction; after the update, codewords and
// prototype columns are re-projected to unit norm.
inline void adam_step(ModelState& state, const StepGradients& grads, const TrainConfig& cfg) {
    detail::require_finite(grads.encoder.d_w1.data, "encoder w1");
    detail::require_finite(grads.encoder.d_b1, "encoder b1");
    detail::require_finite(grads.encoder.d_w2.data, "encoder w2");
    detail::require_finite(grads.encoder.d_b2, "encoder b2");
    detail::require_finite(grads.codebook, "codebook");
    detail::require_finite(grads.prototypes, "prototypes");

    const double lr = decayed_learning_rate(cfg, state.step);
    const std::uint64_t t = state.step + 1;
    detail::adam_update(state.encoder.w1.data, grads.encoder.d_w1.data, state.adam.w1, lr, t, cfg);
    detail::adam_update(state.encoder.b1, grads.encoder.d_b1, state.adam.b1, lr, t, cfg);
    detail::adam_update(state.encoder.w2.data, grads.encoder.d_w2.data, state.adam.w2, lr, t, cfg);
    detail::adam_update(state.encoder.b2, grads.encoder.d_b2, state.adam.b2, lr, t, cfg);
    detail::adam_update(state.codebook.codewords, grads.codebook, state.adam.codebook, lr, t, cfg);
    for (std::size_t m = 0; m < state.codebook.shape.num_subspaces; ++m)
        for (std::size_t k = 0; k < state.codebook.shape.num_codewords; ++k)
            l2_normalize_inplace(state.codebook.codeword(m, k));

    if (!grads.prototypes.empty()) {
        detail::adam_update(state.prototypes.weights, grads.prototypes, state.adam.prototypes, lr,
                            t, cfg);
        for (std::size_t m = 0; m < state.prototypes.num_subspaces; ++m)
            for (std::size_t l = 0; l < state.prototypes.num_classes; ++l)
                l2_normalize_inplace(state.prototypes.prototype(m, l));
    }
    state.step = t;
}

// Raw-input batch; features are produced by the encoder inside the step.
struct RawBatch {
    std::vector<std::vector<double>> labeled_inputs;
    std::vector<std::vector<double>> labels;
    std::vector<std::vector<double>> unlabeled_inputs;
};

struct StepResult {
    double total = 0.0, npq = 0.0, cls = 0.0, sem = 0.0;
    StepGradients gradients;
};

// Runs the full forward pass and routes all gradients: plain objective
// gradients into codebook/prototypes, upstream gradients into the encoder
// for labeled items, and the entropy path through the encoder's reversal
// hook for unlabeled items.
inline StepResult compute_step_gradients(const ModelState& state, const RawBatch& raw,
                                         const TrainConfig& cfg) {
    const std::size_t B = raw.labeled_inputs.size();
    if (raw.labels.size() != B || raw.unlabeled_inputs.size() != B)
        throw ShapeMismatchError("compute_step_gradients: batch sides must have equal counts");
    const auto shape = state.codebook.shape;

    LabeledBatch batch;
    batch.labels = raw.labels;
    batch.labeled_features.resize(B);
    batch.unlabeled_features.resize(B);
    std::vector<EncoderCache> labeled_cache(B), unlabeled_cache(B);
    for (std::size_t b = 0; b < B; ++b) {
        labeled_cache[b] = encode(state.encoder, raw.labeled_inputs[b], shape);
        batch.labeled_features[b] = labeled_cache[b].feature;
        unlabeled_cache[b] = encode(state.encoder, raw.unlabeled_inputs[b], shape);
        batch.unlabeled_features[b] = unlabeled_cache[b].feature;
    }

    auto obj = total_objective(batch, state.codebook, state.prototypes, cfg.lambda_cls,
                               cfg.lambda_sem);

    StepResult out;
    out.total = obj.total;
    out.npq = obj.npq;
    out.cls = obj.cls;
    out.sem = obj.sem;
    out.gradients.codebook = std::move(obj.d_codebook);
    out.gradients.prototypes = std::move(obj.d_prototypes);
    out.gradients.encoder = GradientBundle::zeros_like(state.encoder);
    for (std::size_t b = 0; b < B; ++b) {
        out.gradients.encoder.accumulate(encoder_backward(
            state.encoder, labeled_cache[b], obj.d_labeled.row(b), {}, shape.sub_dim));
        out.gradients.encoder.accumulate(encoder_backward(state.encoder, unlabeled_cache[b], {},
                                                          obj.d_unlabeled_reversal.row(b),
                                                          shape.sub_dim));
    }
    return out;
}

// Replaces every codeword by its soft assignment against the sub-prototypes
// of the same subspace, re-normalized to unit norm. Returns a new codebook.
inline Codebook update_codewords_from_prototypes(const Codebook& cb, const Prototypes& proto,
                                                 double assign_scale) {
    if (proto.num_subspaces != cb.shape.num_subspaces || proto.sub_dim != cb.shape.sub_dim)
        throw ShapeMismatchError("update_codewords_from_prototypes: prototype/codebook shapes differ");
    Codebook out = cb;
    for (std::size_t m = 0; m < cb.shape.num_subspaces; ++m) {
        std::span<const double> protos{proto.weights.data() + m * proto.num_classes * proto.sub_dim,
                                       proto.num_classes * proto.sub_dim};
        for (std::size_t k = 0; k < cb.shape.num_codewords; ++k) {
            auto sa = soft_assign(cb.codeword(m, k), protos, cb.shape.sub_dim, assign_scale);
            auto target = out.codeword(m, k);
            std::copy(sa.quantized.begin(), sa.quantized.end(), target.begin());
            l2_normalize_inplace(target);
        }
    }
    return out;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double npq = 0.0, cls = 0.0, sem = 0.0, total = 0.0;
};

struct TrainingSet {
    std::vector<std::vector<double>> labeled_inputs;
    std::vector<std::vector<double>> labels;  // multi-hot rows, one per labeled input
    std::vector<std::vector<double>> unlabeled_inputs;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochMetrics> log;
};

inline TrainResult train(const TrainingSet& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.labeled_inputs.empty() || data.unlabeled_inputs.empty())
        throw EmptyDatasetError("train: labeled and unlabeled sets must be non-empty");
    if (data.labels.size() != data.labeled_inputs.size())
        throw ShapeMismatchError("train: one label row per labeled input required");
    const std::size_t input_dim = data.labeled_inputs[0].size();
    const std::size_t num_classes = data.labels[0].size();

    TrainResult result;
    result.state = ModelState::init(input_dim, num_classes, cfg);
    const std::uint64_t batch_seed = splitmix64(cfg.seed ^ 0x62617463ull);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto plans = make_batches(data.labeled_inputs.size(), data.unlabeled_inputs.size(),
                                  cfg.batch_size, batch_seed, epoch);
        EpochMetrics metrics{epoch + 1, 0.0, 0.0, 0.0, 0.0};
        for (const auto& plan : plans) {
            RawBatch raw;
            raw.labeled_inputs.reserve(plan.labeled.size());
            raw.labels.reserve(plan.labeled.size());
            raw.unlabeled_inputs.reserve(plan.unlabeled.size());
            for (std::size_t i : plan.labeled) {
                raw.labeled_inputs.push_back(data.labeled_inputs[i]);
                raw.labels.push_back(data.labels[i]);
            }
            for (std::size_t i : plan.unlabeled)
                raw.unlabeled_inputs.push_back(data.unlabeled_inputs[i]);

            auto step = compute_step_gradients(result.state, raw, cfg);
            if (!std::isfinite(step.total))
                throw NonFiniteGradientError("training objective diverged (non-finite loss)");
            if (!cfg.classifier_enabled) step.gradients.prototypes.clear();
            adam_step(result.state, step.gradients, cfg);

            metrics.npq += step.npq;
            metrics.cls += step.cls;
            metrics.sem += step.sem;
            metrics.total += step.total;
        }
        const double inv = 1.0 / static_cast<double>(plans.size());
        metrics.npq *= inv;
        metrics.cls *= inv;
        metrics.sem *= inv;
        metrics.total *= inv;
        result.log.push_back(metrics);

        if (cfg.proto_update_each_epoch && cfg.classifier_enabled)
            result.state.codebook = update_codewords_from_prototypes(
                result.state.codebook, result.state.prototypes, cfg.assign_scale);
    }
    return result;
}

// --- model checkpoint: magic "GPQM", version u16, the encoder checkpoint,
// then codebook and prototype blocks with float32 arrays ---

inline constexpr char kModelMagic[4] = {'G', 'P', 'Q', 'M'};
inline constexpr std::uint16_t kModelVersion = 1;

inline void save_model(const EncoderParams& encoder, const Codebook& cb, const Prototypes& proto,
                       const std::string& path) {
    auto out = open_output(path);
    ByteWriter w(out);
    w.write_magic(kModelMagic);
    w.write_u16(kModelVersion);
    save_encoder(encoder, w);
    const auto& s = cb.shape;
    w.write_u32(static_cast<std::uint32_t>(s.num_subspaces));
    w.write_u32(static_cast<std::uint32_t>(s.num_codewords));
    w.write_u32(static_cast<std::uint32_t>(s.sub_dim));
    w.write_u32(static_cast<std::uint32_t>(s.total_dim));
    w.write_f32(static_cast<float>(cb.assign_scale));
    for (double x : cb.codewords) w.write_f32(static_cast<float>(x));
    w.write_u32(static_cast<std::uint32_t>(proto.num_subspaces));
    w.write_u32(static_cast<std::uint32_t>(proto.num_classes));
    w.write_u32(static_cast<std::uint32_t>(proto.sub_dim));
    w.write_u32(static_cast<std::uint32_t>(proto.num_subspaces * proto.sub_dim));
    w.write_f32(static_cast<float>(proto.class_scale));
    for (double x : proto.weights) w.write_f32(static_cast<float>(x));
}

struct LoadedModel {
    EncoderParams encoder;
    Codebook codebook;
    Prototypes prototypes;
};

inline LoadedModel load_model(const std::string& path) {
    auto in = open_input(path);
    ByteReader r(in);
    r.expect_magic(kModelMagic, "GPQM model checkpoint");
    r.expect_version(kModelVersion, "GPQM model checkpoint");
    LoadedModel model;
    model.encoder = load_encoder(r);

    const std::size_t m = r.read_u32(), k = r.read_u32(), d = r.read_u32(), total = r.read_u32();
    if (total != m * d) throw MalformedBytesError("GPQM codebook dims are inconsistent");
    model.codebook.shape = SubspaceShape::create(m, d, k);
    model.codebook.assign_scale = r.read_f32();
    model.codebook.codewords.resize(m * k * d);
    for (double& x : model.codebook.codewords) x = r.read_f32();

    const std::size_t pm = r.read_u32(), nc = r.read_u32(), pd = r.read_u32();
    (void)r.read_u32();
    if (pm != m || pd != d) throw MalformedBytesError("GPQM prototype dims do not match codebook");
    if (nc == 0) throw MalformedBytesError("GPQM has zero prototype classes");
    model.prototypes.num_subspaces = pm;
    model.prototypes.num_classes = nc;
    model.prototypes.sub_dim = pd;
    model.prototypes.class_scale = r.read_f32();
    model.prototypes.weights.resize(pm * nc * pd);
    for (double& x : model.prototypes.weights) x = r.read_f32();
    return model;
}

}  // namespace gpq
