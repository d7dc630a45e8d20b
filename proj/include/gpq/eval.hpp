#pragma once

// Retrieval quality metrics and the label-free product-quantization
// baseline (per-subspace spherical k-means).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/index.hpp"
#include "gpq/numerics.hpp"
#include "gpq/quantizer.hpp"

namespace gpq {

// Relevance oracle over a label table. Single-label mode requires identical
// label rows; multi-label mode requires at least one shared set bit.
struct RelevanceJudge {
    enum class Mode { single_label, multi_label };

    Mode mode = Mode::single_label;
    std::unordered_map<std::uint64_t, std::vector<std::uint8_t>> labels;

    const std::vector<std::uint8_t>& labels_of(std::uint64_t id) const {
        auto it = labels.find(id);
        if (it == labels.end())
            throw UnknownIdError("no label row for id " + std::to_string(id));
        return it->second;
    }

    bool relevant(std::uint64_t query_id, std::uint64_t item_id) const {
        const auto& a = labels_of(query_id);
        const auto& b = labels_of(item_id);
        if (a.size() != b.size()) throw ShapeMismatchError("label rows have different widths");
        if (mode == Mode::single_label) return a == b;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] && b[i]) return true;
        return false;
    }
};

// AP over a ranking: mean of precision@i at every relevant hit, normalized
// by the total relevant count. With a cutoff only the first `cutoff`
// positions contribute and the normalizer becomes min(R, cutoff). Returns 0
// when nothing is relevant.
inline double average_precision(std::span<const std::uint64_t> ranked, const RelevanceJudge& judge,
                                std::uint64_t query_id, std::size_t cutoff = 0) {
    std::size_t total_relevant = 0;
    for (std::uint64_t id : ranked)
        if (judge.relevant(query_id, id)) ++total_relevant;
    const std::size_t limit = cutoff == 0 ? ranked.size() : std::min(cutoff, ranked.size());
    const std::size_t denom = cutoff == 0 ? total_relevant : std::min(total_relevant, cutoff);
    if (denom == 0) return 0.0;

    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < limit; ++i) {
        if (judge.relevant(query_id, ranked[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(denom);
}

inline double precision_at_k(std::span<const std::uint64_t> ranked, const RelevanceJudge& judge,
                             std::uint64_t query_id, std::size_t k) {
    if (k < 1) throw InvalidArgumentError("precision_at_k: k must be >= 1");
    const std::size_t limit = std::min(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < limit; ++i)
        if (judge.relevant(query_id, ranked[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

struct QuerySet {
    std::vector<std::uint64_t> ids;
    std::vector<std::vector<double>> features;  // intra-normalized, one per id
};

namespace detail {

inline std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("GPQ_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

}  // namespace detail

// Ranks every query against the full index and averages the APs. Queries are
// processed in parallel (capped by GPQ_THREADS) into fixed slots, so the
// result does not depend on the thread count.
inline double mean_ap(const QuerySet& queries, const RetrievalIndex& index,
                      const RelevanceJudge& judge, std::size_t cutoff = 0) {
    if (queries.ids.size() != queries.features.size())
        throw ShapeMismatchError("mean_ap: query id/feature counts differ");
    if (queries.ids.empty()) throw EmptyDatasetError("mean_ap: no queries");
    const std::size_t n = queries.ids.size();
    std::vector<double> ap(n, 0.0);

    auto run_range = [&](std::size_t begin, std::size_t end) {
        std::vector<std::uint64_t> ranked;
        for (std::size_t q = begin; q < end; ++q) {
            auto hits = search_topk(queries.features[q], index, std::max<std::size_t>(index.count, 1));
            ranked.resize(hits.size());
            for (std::size_t i = 0; i < hits.size(); ++i) ranked[i] = hits[i].id;
            ap[q] = average_precision(ranked, judge, queries.ids[q], cutoff);
        }
    };

    const std::size_t workers = detail::worker_count(n);
    if (workers <= 1) {
        run_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run_range, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    double sum = 0.0;
    for (double a : ap) sum += a;
    return sum / static_cast<double>(n);
}

// Per-subspace spherical k-means (Lloyd iterations on cosine similarity):
// assign each sub-vector to its most similar codeword, recompute each
// codeword as the normalized mean of its members, reseed empty clusters from
// the point farthest from its assigned codeword. Codewords are initialized
// from K distinct data sub-vectors.
inline Codebook pq_baseline_train(const std::vector<std::vector<double>>& features,
                                  const SubspaceShape& shape, std::size_t iterations,
                                  std::uint64_t seed) {
    shape.validate();
    const std::size_t n = features.size();
    if (n < shape.num_codewords)
        throw TooFewItemsError("pq_baseline_train: need at least K items, got " +
                               std::to_string(n));
    for (const auto& f : features)
        if (f.size() != shape.total_dim)
            throw ShapeMismatchError("pq_baseline_train: feature length != shape total_dim");

    const std::size_t K = shape.num_codewords, d = shape.sub_dim;
    Codebook cb;
    cb.shape = shape;
    cb.codewords.resize(shape.num_subspaces * K * d);
    std::mt19937_64 rng(seed);

    for (std::size_t m = 0; m < shape.num_subspaces; ++m) {
        // init: K distinct item indices
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t k = 0; k < K; ++k) {
            auto src = std::span<const double>(features[perm[k]]).subspan(m * d, d);
            auto dst = cb.codeword(m, k);
            std::copy(src.begin(), src.end(), dst.begin());
            l2_normalize_inplace(dst);
        }

        std::vector<std::size_t> assign(n);
        std::vector<double> best_sim(n);
        for (std::size_t it = 0; it < iterations; ++it) {
            for (std::size_t i = 0; i < n; ++i) {
                auto sub = std::span<const double>(features[i]).subspan(m * d, d);
                assign[i] = hard_assign(sub, cb.subspace(m), d);
                best_sim[i] = dot(sub, cb.codeword(m, assign[i]));
            }
            std::vector<double> sums(K * d, 0.0);
            std::vector<std::size_t> counts(K, 0);
            for (std::size_t i = 0; i < n; ++i) {
                auto sub = std::span<const double>(features[i]).subspan(m * d, d);
                for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += sub[j];
                ++counts[assign[i]];
            }
            for (std::size_t k = 0; k < K; ++k) {
                auto cw = cb.codeword(m, k);
                if (counts[k] == 0) {
                    // reseed from the point farthest from its codeword
                    std::size_t farthest = 0;
                    for (std::size_t i = 1; i < n; ++i)
                        if (best_sim[i] < best_sim[farthest]) farthest = i;
                    auto src = std::span<const double>(features[farthest]).subspan(m * d, d);
                    std::copy(src.begin(), src.end(), cw.begin());
                    best_sim[farthest] = 1.0;  // do not reuse for another empty cluster
                } else if (l2_norm({sums.data() + k * d, d}) >= kZeroVectorTolerance) {
                    std::copy(sums.begin() + k * d, sums.begin() + (k + 1) * d, cw.begin());
                }  // members cancel exactly: keep the previous codeword
                l2_normalize_inplace(cw);
            }
        }
    }
    return cb;
}

// Mean cosine similarity of every sub-vector to its assigned codeword; the
// monitored objective of pq_baseline_train.
inline double quantization_objective(const std::vector<std::vector<double>>& features,
                                     const Codebook& cb) {
    const auto& s = cb.shape;
    double sum = 0.0;
    for (const auto& f : features)
        for (std::size_t m = 0; m < s.num_subspaces; ++m) {
            auto sub = std::span<const double>(f).subspan(m * s.sub_dim, s.sub_dim);
            sum += dot(sub, cb.codeword(m, hard_assign(sub, cb.subspace(m), s.sub_dim)));
        }
    return sum / static_cast<double>(features.size() * s.num_subspaces);
}

}  // namespace gpq
