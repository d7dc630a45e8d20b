// Acceptance suite: one pass/fail line per criterion. Exit code 0 only if
// every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gpq/gpq.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace gpq;

namespace {

struct Harness {
    int failures = 0;

    void run(int number, const std::string& name, const std::function<std::string()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool pass = true;
        try {
            detail = body();
        } catch (const std::exception& e) {
            pass = false;
            detail = std::string("exception: ") + e.what();
        }
        if (!detail.empty() && detail.rfind("FAIL:", 0) == 0) {
            pass = false;
            detail = detail.substr(5);
        }
        const auto secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count() /
                          1000.0;
        std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", pass ? "PASS" : "FAIL", number,
                    name.c_str(), secs, detail.empty() ? "" : " - ", detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient fidelity

std::string criterion_gradients() {
    const double tol = 1e-4;
    double worst = 0.0;
    auto track = [&worst](double err) { worst = std::max(worst, err); };

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed * 977 + 3);
        TrainConfig cfg;
        cfg.num_subspaces = 2;
        cfg.sub_dim = 3;
        cfg.num_codewords = 4;
        cfg.hidden_dim = 6;
        cfg.seed = seed + 500;
        cfg.lambda_cls = 0.4;
        cfg.lambda_sem = 0.3;
        auto state = ModelState::init(8, 3, cfg);
        const auto shape = state.codebook.shape;

        std::normal_distribution<double> gauss(0.0, 1.0);
        RawBatch raw;
        for (std::size_t b = 0; b < 4; ++b) {
            std::vector<double> x(8), u(8), label(3, 0.0);
            for (double& v : x) v = gauss(rng);
            for (double& v : u) v = gauss(rng);
            label[b % 3] = 1.0;
            raw.labeled_inputs.push_back(x);
            raw.unlabeled_inputs.push_back(u);
            raw.labels.push_back(label);
        }

        // objective as a pure function of the current parameters; sem_sign
        // selects the plain total (-1) or the encoder's post-reversal view (+1)
        auto forward = [&](double l1, double l2, double sem_sign) {
            LabeledBatch batch;
            batch.labels = raw.labels;
            for (std::size_t b = 0; b < raw.labeled_inputs.size(); ++b) {
                batch.labeled_features.push_back(
                    encode(state.encoder, raw.labeled_inputs[b], shape).feature);
                batch.unlabeled_features.push_back(
                    encode(state.encoder, raw.unlabeled_inputs[b], shape).feature);
            }
            auto res = total_objective(batch, state.codebook, state.prototypes, l1, l2);
            return res.npq + l1 * res.cls + sem_sign * l2 * res.sem;
        };

        // npq alone, cls alone, sem alone, and the full routed objective
        const std::pair<double, double> lambdas[] = {
            {0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {cfg.lambda_cls, cfg.lambda_sem}};
        for (auto [l1, l2] : lambdas) {
            TrainConfig c = cfg;
            c.lambda_cls = l1;
            c.lambda_sem = l2;
            auto step = compute_step_gradients(state, raw, c);
            auto plain = [&, l1 = l1, l2 = l2]() { return forward(l1, l2, -1.0); };
            auto flipped = [&, l1 = l1, l2 = l2]() { return forward(l1, l2, +1.0); };

            track(testsupport::gradient_rel_error(
                step.gradients.codebook,
                testsupport::finite_difference(state.codebook.codewords, plain)));
            if (l1 > 0 || l2 > 0)
                track(testsupport::gradient_rel_error(
                    step.gradients.prototypes,
                    testsupport::finite_difference(state.prototypes.weights, plain)));
            track(testsupport::gradient_rel_error(
                step.gradients.encoder.d_w1.data,
                testsupport::finite_difference(state.encoder.w1.data, flipped)));
            track(testsupport::gradient_rel_error(
                step.gradients.encoder.d_b1,
                testsupport::finite_difference(state.encoder.b1, flipped)));
            track(testsupport::gradient_rel_error(
                step.gradients.encoder.d_w2.data,
                testsupport::finite_difference(state.encoder.w2.data, flipped)));
            track(testsupport::gradient_rel_error(
                step.gradients.encoder.d_b2,
                testsupport::finite_difference(state.encoder.b2, flipped)));
        }
    }
    if (worst >= tol) return fmt("FAIL:worst relative error %.2e >= 1e-4", worst);
    return fmt("worst relative error %.2e over 5 seeds", worst);
}

// ---------------------------------------------------------------------------
// criterion 2: soft assignment converges to the hard codeword

std::string criterion_soft_hard_limit() {
    // A finite scale cannot resolve near-ties: the residual mass off the best
    // codeword is about (K-1)e^(-200 g) for a top-2 similarity gap g, so
    // draws are accepted only when g >= 0.06, which makes the 1e-3 bound
    // provable rather than probabilistic.
    std::mt19937_64 rng(12345);
    const std::size_t K = 16, d = 12;
    double worst = 0.0;
    int accepted = 0;
    while (accepted < 1000) {
        std::vector<double> cws(K * d);
        for (std::size_t k = 0; k < K; ++k) {
            auto v = testsupport::random_unit_vector(rng, d);
            std::copy(v.begin(), v.end(), cws.begin() + k * d);
        }
        auto x = testsupport::random_unit_vector(rng, d);
        double best = -2.0, second = -2.0;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const double s = dot(x, std::span<const double>(cws).subspan(k * d, d));
            if (s > best) {
                second = best;
                best = s;
                best_k = k;
            } else if (s > second) {
                second = s;
            }
        }
        if (best - second < 0.06) continue;
        ++accepted;
        auto sa = soft_assign(x, cws, d, 200.0);
        double err = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            err += (sa.quantized[j] - cws[best_k * d + j]) *
                   (sa.quantized[j] - cws[best_k * d + j]);
        worst = std::max(worst, std::sqrt(err));
    }
    if (worst >= 1e-3) return fmt("FAIL:worst distance %.2e >= 1e-3", worst);
    return fmt("worst distance %.2e over 1000 inputs (top-2 gap >= 0.06)", worst);
}

// ---------------------------------------------------------------------------
// criterion 3: LUT equals direct scoring; rankings match brute force

std::string criterion_lut_oracle() {
    std::mt19937_64 rng(777);
    auto shape = SubspaceShape::create(8, 12, 16);
    auto cb = Codebook::random_init(shape, 20.0, 999);
    std::vector<std::vector<double>> features;
    for (int i = 0; i < 1000; ++i)
        features.push_back(testsupport::random_intra_normalized(rng, shape));
    auto index = build_index(features, cb);

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto q = testsupport::random_intra_normalized(rng, shape);
        auto lut = compute_lut(q, cb);

        std::vector<SearchHit> oracle(index.count);
        for (std::size_t i = 0; i < index.count; ++i) {
            auto code = unpack(index.packed_code(i), shape);
            const double direct = dot(q, reconstruct(code, cb));
            worst = std::max(worst, std::abs(asymmetric_score(code, lut) - direct));
            oracle[i] = {i, direct};
        }
        std::sort(oracle.begin(), oracle.end(), [](const SearchHit& a, const SearchHit& b) {
            return a.score > b.score || (a.score == b.score && a.id < b.id);
        });
        auto hits = search_topk(q, index, 50);
        for (std::size_t r = 0; r < 50; ++r)
            if (hits[r].id != oracle[r].id)
                return fmt("FAIL:rank %zu differs from brute force (query %d)", r, trial);
    }
    if (worst >= 1e-6) return fmt("FAIL:worst LUT/direct gap %.2e >= 1e-6", worst);
    return fmt("worst LUT/direct gap %.2e; top-50 exact on 100 queries", worst);
}

// ---------------------------------------------------------------------------
// criterion 4: encoding attains the exhaustive optimum

std::string criterion_encoding_optimality() {
    std::mt19937_64 rng(4242);
    auto shape = SubspaceShape::create(2, 4, 4);
    auto cb = Codebook::random_init(shape, 20.0, 31);
    for (int trial = 0; trial < 500; ++trial) {
        auto x = testsupport::random_intra_normalized(rng, shape);
        auto best = encode(x, cb);
        const double chosen = dot(x, reconstruct(best, cb));
        for (std::uint32_t a = 0; a < 4; ++a)
            for (std::uint32_t b = 0; b < 4; ++b) {
                Code candidate{{a, b}};
                if (dot(x, reconstruct(candidate, cb)) > chosen + 1e-12)
                    return fmt("FAIL:input %d: code (%u,%u) beats encode()", trial, a, b);
            }
    }
    return "500 inputs, all 16 codes enumerated";
}

// ---------------------------------------------------------------------------
// criterion 5: bit formats round-trip; index files round-trip with errors

std::string criterion_bit_formats() {
    std::mt19937_64 rng(55);
    for (std::size_t m : {3, 6, 8, 12}) {
        auto shape = SubspaceShape::create(m, 4, 16);
        std::uniform_int_distribution<std::uint32_t> pick(0, 15);
        for (int trial = 0; trial < 1000; ++trial) {
            Code code;
            for (std::size_t i = 0; i < m; ++i) code.indices.push_back(pick(rng));
            auto bytes = pack(code, shape);
            if (bytes.size() != shape.code_bytes()) return "FAIL:packed size mismatch";
            if (!(unpack(bytes, shape) == code))
                return fmt("FAIL:round trip broken at M=%zu", m);
        }
        bool rejected = false;
        try {
            std::vector<std::uint8_t> wrong(shape.code_bytes() + 1, 0);
            unpack(wrong, shape);
        } catch (const MalformedBytesError&) {
            rejected = true;
        }
        if (!rejected) return "FAIL:unpack accepted a wrong byte count";
    }

    // index persistence round trip plus the corruption error paths
    auto shape = SubspaceShape::create(8, 12, 16);
    auto cb = Codebook::random_init(shape, 20.0, 66);
    std::vector<std::vector<double>> features;
    for (int i = 0; i < 64; ++i)
        features.push_back(testsupport::random_intra_normalized(rng, shape));
    auto index = build_index(features, cb);
    const auto dir = fs::temp_directory_path();
    const auto path = (dir / "gpq_acceptance_index.gpqi").string();
    save_index(index, path);
    auto loaded = load_index(path);
    const auto path2 = (dir / "gpq_acceptance_index2.gpqi").string();
    save_index(loaded, path2);
    const auto bytes = read_file_bytes(path);
    if (bytes != read_file_bytes(path2)) return "FAIL:save/load/save is not byte-identical";

    auto overwrite = [](const std::string& p, const std::vector<std::uint8_t>& b) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(b.data()),
                  static_cast<std::streamsize>(b.size()));
    };
    auto corrupt = bytes;
    corrupt[0] = 'X';
    overwrite(path, corrupt);
    try {
        load_index(path);
        return "FAIL:bad magic accepted";
    } catch (const BadMagicError&) {
    }
    corrupt = bytes;
    corrupt[4] = 9;
    overwrite(path, corrupt);
    try {
        load_index(path);
        return "FAIL:bad version accepted";
    } catch (const VersionMismatchError&) {
    }
    corrupt = bytes;
    corrupt.resize(corrupt.size() - 10);
    overwrite(path, corrupt);
    try {
        load_index(path);
        return "FAIL:truncation accepted";
    } catch (const TruncatedError& e) {
        if (e.offset == 0 || e.offset > bytes.size()) return "FAIL:bad truncation offset";
    }
    fs::remove(path);
    fs::remove(path2);
    return "4 bit lengths x 1000 codes; save/load byte-identical; 3 error paths";
}

// ---------------------------------------------------------------------------
// criterion 6: entropy mini-max directionality through the routed gradients

std::string criterion_minimax_direction() {
    TrainConfig cfg;
    cfg.num_subspaces = 3;
    cfg.sub_dim = 4;
    cfg.num_codewords = 4;
    cfg.hidden_dim = 10;
    cfg.seed = 2024;
    cfg.lambda_cls = 0.0;
    cfg.lambda_sem = 1.0;
    auto state = ModelState::init(7, 4, cfg);
    const auto shape = state.codebook.shape;

    std::mt19937_64 rng(31337);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RawBatch raw;
    for (std::size_t b = 0; b < 4; ++b) {
        std::vector<double> x(7), u(7), label(4, 0.0);
        for (double& v : x) v = gauss(rng);
        for (double& v : u) v = gauss(rng);
        label[b % 4] = 1.0;
        raw.labeled_inputs.push_back(x);
        raw.unlabeled_inputs.push_back(u);
        raw.labels.push_back(label);
    }

    auto sem_mean = [&](const EncoderParams& enc, const Prototypes& proto) {
        double sum = 0.0;
        for (const auto& u : raw.unlabeled_inputs)
            sum += sem_loss(encode(enc, u, shape).feature, proto).loss;
        return sum / static_cast<double>(raw.unlabeled_inputs.size());
    };

    const double base = sem_mean(state.encoder, state.prototypes);
    auto step = compute_step_gradients(state, raw, cfg);
    const double eta = 1e-4;

    // a plain minimizing step on the prototypes' routed gradient is entropy ascent
    Prototypes stepped_proto = state.prototypes;
    for (std::size_t i = 0; i < stepped_proto.weights.size(); ++i)
        stepped_proto.weights[i] -= eta * step.gradients.prototypes[i];
    const double after_proto = sem_mean(state.encoder, stepped_proto);
    if (after_proto < base - 1e-8)
        return fmt("FAIL:prototype step decreased the entropy (%.6f -> %.6f)", base, after_proto);

    // the same minimizing step on the encoder's reversed gradient is entropy descent
    EncoderParams stepped_enc = state.encoder;
    for (std::size_t i = 0; i < stepped_enc.w1.data.size(); ++i)
        stepped_enc.w1.data[i] -= eta * step.gradients.encoder.d_w1.data[i];
    for (std::size_t i = 0; i < stepped_enc.b1.size(); ++i)
        stepped_enc.b1[i] -= eta * step.gradients.encoder.d_b1[i];
    for (std::size_t i = 0; i < stepped_enc.w2.data.size(); ++i)
        stepped_enc.w2.data[i] -= eta * step.gradients.encoder.d_w2.data[i];
    for (std::size_t i = 0; i < stepped_enc.b2.size(); ++i)
        stepped_enc.b2[i] -= eta * step.gradients.encoder.d_b2[i];
    const double after_enc = sem_mean(stepped_enc, state.prototypes);
    if (after_enc > base + 1e-8)
        return fmt("FAIL:encoder step increased the entropy (%.6f -> %.6f)", base, after_enc);

    return fmt("entropy %.6f: prototypes -> %.6f (up), encoder -> %.6f (down)", base,
               after_proto, after_enc);
}

// ---------------------------------------------------------------------------
// criterion 7: desk-scale semi-supervised benefit

struct BenefitRun {
    double gpq = 0.0, ablation = 0.0, baseline = 0.0;
};

BenefitRun run_benefit_seed(std::uint64_t seed, double spread, double lr, std::size_t epochs) {
    auto ds = synth_gaussian_mixture(10, 600, 96, spread, seed);
    auto split = split_protocol1(ds, 50, 100, seed);
    RelevanceJudge judge;
    judge.mode = RelevanceJudge::Mode::single_label;
    for (std::size_t i = 0; i < ds.size(); ++i) judge.labels.emplace(i, ds.labels[i]);

    TrainingSet set;
    for (auto id : split.labeled_train) {
        auto r = ds.vectors.row(id);
        set.labeled_inputs.emplace_back(r.begin(), r.end());
        std::vector<double> lab(ds.num_classes, 0.0);
        for (std::size_t c = 0; c < ds.num_classes; ++c) lab[c] = ds.labels[id][c];
        set.labels.push_back(lab);
    }
    for (auto id : split.unlabeled_train) {
        auto r = ds.vectors.row(id);
        set.unlabeled_inputs.emplace_back(r.begin(), r.end());
    }

    TrainConfig cfg;  // library defaults carry alpha 20, beta 4, K 16, d 12,
                      // lambda 0.1, adam beta1 0.5
    cfg.num_subspaces = 12;  // 48-bit codes
    cfg.hidden_dim = 128;
    cfg.batch_size = 64;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.seed = seed;

    auto eval_state = [&](const ModelState& state, const Codebook& cb) {
        std::vector<std::vector<double>> db;
        db.reserve(split.database.size());
        for (auto id : split.database)
            db.push_back(encode(state.encoder, ds.vectors.row(id), cb.shape).feature);
        auto index = build_index(db, cb, split.database);
        QuerySet q;
        q.ids = split.query;
        for (auto id : split.query)
            q.features.push_back(encode(state.encoder, ds.vectors.row(id), cb.shape).feature);
        return mean_ap(q, index, judge);
    };

    BenefitRun out;
    auto full = train(set, cfg);
    auto cb = update_codewords_from_prototypes(full.state.codebook, full.state.prototypes,
                                               cfg.assign_scale);
    out.gpq = eval_state(full.state, cb);

    TrainConfig hcfg = cfg;
    hcfg.lambda_cls = 0.0;
    hcfg.lambda_sem = 0.0;
    hcfg.classifier_enabled = false;
    auto ablation = train(set, hcfg);
    out.ablation = eval_state(ablation.state, ablation.state.codebook);

    auto base_shape = SubspaceShape::create(12, ds.dim / 12, 16);
    std::vector<std::vector<double>> raw_db;
    raw_db.reserve(split.database.size());
    for (auto id : split.database)
        raw_db.push_back(intra_normalize(ds.vectors.row(id), base_shape));
    auto base_cb = pq_baseline_train(raw_db, base_shape, 25, seed);
    auto base_index = build_index(raw_db, base_cb, split.database);
    QuerySet bq;
    bq.ids = split.query;
    for (auto id : split.query)
        bq.features.push_back(intra_normalize(ds.vectors.row(id), base_shape));
    out.baseline = mean_ap(bq, base_index, judge);
    return out;
}

std::string criterion_semi_supervised_benefit() {
    BenefitRun mean;
    for (std::uint64_t seed : {0, 1, 2}) {
        auto run = run_benefit_seed(seed, 0.15, 2e-4, 150);
        mean.gpq += run.gpq / 3.0;
        mean.ablation += run.ablation / 3.0;
        mean.baseline += run.baseline / 3.0;
    }
    const double margin_baseline = mean.gpq - mean.baseline;
    const double margin_ablation = mean.gpq - mean.ablation;
    const std::string detail =
        fmt("mAP gpq=%.4f ablation=%.4f baseline=%.4f; margins: vs-baseline %+.4f, "
            "vs-ablation %+.4f (required >= +0.02 each)",
            mean.gpq, mean.ablation, mean.baseline, margin_baseline, margin_ablation);
    if (margin_baseline >= 0.02 && margin_ablation >= 0.02) return detail;
    return "FAIL:" + detail;
}

// Not a criterion: the same pipeline on a harder mixture, where the ablation
// does not saturate the metric. Shows the headroom-dependent margin.
void report_hard_mixture_reference() {
    BenefitRun mean;
    for (std::uint64_t seed : {0, 1, 2}) {
        auto run = run_benefit_seed(seed, 0.25, 1e-3, 200);
        mean.gpq += run.gpq / 3.0;
        mean.ablation += run.ablation / 3.0;
        mean.baseline += run.baseline / 3.0;
    }
    std::printf("[INFO] reference at spread 0.25: mAP gpq=%.4f ablation=%.4f baseline=%.4f; "
                "margins: vs-baseline %+.4f, vs-ablation %+.4f\n",
                mean.gpq, mean.ablation, mean.baseline, mean.gpq - mean.baseline,
                mean.gpq - mean.ablation);
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// criterion 8: mAP correctness

std::string criterion_map_correctness() {
    std::mt19937_64 rng(808);
    RelevanceJudge judge;
    judge.mode = RelevanceJudge::Mode::single_label;
    for (std::size_t i = 0; i < 40; ++i) {
        std::vector<std::uint8_t> row(4, 0);
        row[i % 4] = 1;
        judge.labels.emplace(i, row);
    }
    std::vector<std::uint64_t> ranked(40);
    for (std::size_t i = 0; i < 40; ++i) ranked[i] = i;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::shuffle(ranked.begin(), ranked.end(), rng);
        const std::uint64_t query = trial % 40;
        const double got = average_precision(ranked, judge, query);
        const double want = testsupport::brute_force_average_precision(ranked, judge, query);
        worst = std::max(worst, std::abs(got - want));
    }
    if (worst >= 1e-12) return fmt("FAIL:worst AP gap %.2e >= 1e-12", worst);

    // random rankings on balanced 10-class data score near the 0.1 prior
    RelevanceJudge judge10;
    judge10.mode = RelevanceJudge::Mode::single_label;
    const std::size_t db = 500, queries = 1000;
    for (std::size_t i = 0; i < db + queries; ++i) {
        std::vector<std::uint8_t> row(10, 0);
        row[i % 10] = 1;
        judge10.labels.emplace(i, row);
    }
    std::vector<std::uint64_t> ranking(db);
    for (std::size_t i = 0; i < db; ++i) ranking[i] = i;
    double sum = 0.0;
    for (std::size_t q = 0; q < queries; ++q) {
        std::shuffle(ranking.begin(), ranking.end(), rng);
        sum += average_precision(ranking, judge10, db + q);
    }
    const double map = sum / static_cast<double>(queries);
    if (map < 0.07 || map > 0.13)
        return fmt("FAIL:random-ranking mAP %.4f outside 0.1 +- 0.03", map);
    return fmt("200 rankings within 1e-12 of oracle (worst %.1e); random mAP %.4f", worst, map);
}

// ---------------------------------------------------------------------------
// criterion 9: byte-for-byte pipeline determinism through the CLI

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GPQ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string criterion_determinism() {
    const auto root = fs::temp_directory_path() / "gpq_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string data = (root / "d.gpqd").string();
    const std::string split = (root / "s.txt").string();
    if (run_cli("synth --out " + data + " --classes 10 --per-class 60 --dim 48 --seed 11") != 0)
        return "FAIL:synth failed";
    if (run_cli("split --data " + data + " --out " + split +
                " --labels-per-class 10 --query-per-class 10 --seed 11") != 0)
        return "FAIL:split failed";

    for (const char* tag : {"a", "b"}) {
        const std::string prefix = (root / tag).string();
        if (run_cli("train --data " + data + " --split " + split + " --out " + prefix +
                    ".gpqm --log " + prefix +
                    ".log --bits 24 --sub-dim 6 --hidden 32 --epochs 5 --batch 16 --seed 11") !=
            0)
            return "FAIL:train failed";
        if (run_cli("build --model " + prefix + ".gpqm --data " + data + " --split " + split +
                    " --out " + prefix + ".gpqi") != 0)
            return "FAIL:build failed";
        if (run_cli("eval --index " + prefix + ".gpqi --model " + prefix + ".gpqm --data " +
                    data + " --split " + split + " --out " + prefix + ".report") != 0)
            return "FAIL:eval failed";
    }
    for (const char* ext : {".gpqm", ".log", ".gpqi", ".report"}) {
        if (read_file_bytes((root / "a").string() + ext) !=
            read_file_bytes((root / "b").string() + ext))
            return fmt("FAIL:%s differs between identical runs", ext);
    }
    fs::remove_all(root);
    return "model, metrics log, index, and report identical across two runs";
}

}  // namespace

int main() {
    Harness h;
    h.run(1, "gradient fidelity vs central finite differences", criterion_gradients);
    h.run(2, "soft assignment converges to the hard codeword", criterion_soft_hard_limit);
    h.run(3, "LUT scoring matches direct reconstruction", criterion_lut_oracle);
    h.run(4, "encoding attains the exhaustive optimum", criterion_encoding_optimality);
    h.run(5, "bit formats and index files round-trip", criterion_bit_formats);
    h.run(6, "entropy mini-max gradient routing", criterion_minimax_direction);
    h.run(7, "desk-scale semi-supervised benefit", criterion_semi_supervised_benefit);
    report_hard_mixture_reference();
    h.run(8, "average precision correctness", criterion_map_correctness);
    h.run(9, "pipeline determinism", criterion_determinism);
    if (h.failures > 0) {
        std::printf("%d criterion(s) failed\n", h.failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
