#pragma once

// Retrieval database: packed binary codes plus the codebook, scanned with a
// per-query lookup table of sub-vector/codeword similarities. Indexes are
// immutable after build/load; any number of readers may search concurrently.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/io.hpp"
#include "gpq/numerics.hpp"
#include "gpq/quantizer.hpp"

namespace gpq {

struct RetrievalIndex {
    Codebook codebook;
    std::vector<std::uint8_t> codes;  // count * code_bytes, concatenated
    std::size_t count = 0;
    std::vector<std::uint64_t> ids;  // optional; empty means ids are 0..count-1

    std::size_t bytes_per_code() const { return codebook.shape.code_bytes(); }

    std::span<const std::uint8_t> packed_code(std::size_t i) const {
        return {codes.data() + i * bytes_per_code(), bytes_per_code()};
    }

    std::uint64_t item_id(std::size_t i) const { return ids.empty() ? i : ids[i]; }
};

// Per-query table: entry [m][k] is the cosine similarity between the query's
// m-th sub-vector and codeword k of subspace m.
struct Lut {
    std::size_t num_subspaces = 0, num_codewords = 0;
    std::vector<double> table;  // M*K, row-major by subspace

    double at(std::size_t m, std::size_t k) const { return table[m * num_codewords + k]; }
};

inline RetrievalIndex build_index(const std::vector<std::vector<double>>& features,
                                  const Codebook& cb,
                                  std::vector<std::uint64_t> ids = {}) {
    if (!ids.empty() && ids.size() != features.size())
        throw ShapeMismatchError("build_index: id count != feature count");
    RetrievalIndex index;
    index.codebook = cb;
    index.count = features.size();
    index.ids = std::move(ids);
    index.codes.reserve(index.count * cb.shape.code_bytes());
    for (const auto& f : features) {
        auto packed = pack(encode(f, cb), cb.shape);
        index.codes.insert(index.codes.end(), packed.begin(), packed.end());
    }
    return index;
}

inline Lut compute_lut(std::span<const double> query, const Codebook& cb) {
    const auto& s = cb.shape;
    if (query.size() != s.total_dim)
        throw ShapeMismatchError("compute_lut: query length != codebook total_dim");
    Lut lut;
    lut.num_subspaces = s.num_subspaces;
    lut.num_codewords = s.num_codewords;
    lut.table.resize(s.num_subspaces * s.num_codewords);
    for (std::size_t m = 0; m < s.num_subspaces; ++m) {
        auto sub = query.subspan(m * s.sub_dim, s.sub_dim);
        for (std::size_t k = 0; k < s.num_codewords; ++k)
            lut.table[m * s.num_codewords + k] = dot(sub, cb.codeword(m, k));
    }
    return lut;
}

// Sum of the LUT entries selected by the code; equals the dot product of the
// query with the reconstruction of the code.
inline double asymmetric_score(const Code& code, const Lut& lut) {
    if (code.indices.size() != lut.num_subspaces)
        throw ShapeMismatchError("asymmetric_score: code length != LUT subspaces");
    double score = 0.0;
    for (std::size_t m = 0; m < lut.num_subspaces; ++m) {
        if (code.indices[m] >= lut.num_codewords)
            throw IndexOutOfRangeError("asymmetric_score: sub-index out of range");
        score += lut.at(m, code.indices[m]);
    }
    return score;
}

struct SearchHit {
    std::uint64_t id = 0;
    double score = 0.0;
};

// Exhaustive LUT scan over all items, sorted by descending score with ties
// broken by ascending id. Returns min(k, count) hits.
inline std::vector<SearchHit> search_topk(std::span<const double> query,
                                          const RetrievalIndex& index, std::size_t k) {
    if (k < 1) throw InvalidArgumentError("search_topk: k must be >= 1");
    if (index.count == 0) return {};
    const Lut lut = compute_lut(query, index.codebook);
    std::vector<SearchHit> hits(index.count);
    Code code;
    for (std::size_t i = 0; i < index.count; ++i) {
        code = unpack(index.packed_code(i), index.codebook.shape);
        hits[i] = {index.item_id(i), asymmetric_score(code, lut)};
    }
    const std::size_t n = std::min(k, index.count);
    auto better = [](const SearchHit& a, const SearchHit& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    };
    std::partial_sort(hits.begin(), hits.begin() + n, hits.end(), better);
    hits.resize(n);
    return hits;
}

// --- index file format (all integers little-endian): magic "GPQI",
// version u16, M u32, K u32, d u32, D u32, count u64, codebooks as M*K*d
// float32 (subspace-major, codeword-major, component-minor), packed codes
// (count records of code_bytes each), then id-table flag u8 and, when set,
// count u64 ids ---

inline constexpr char kIndexMagic[4] = {'G', 'P', 'Q', 'I'};
inline constexpr std::uint16_t kIndexVersion = 1;

inline void save_index(const RetrievalIndex& index, const std::string& path) {
    auto out = open_output(path);
    ByteWriter w(out);
    const auto& s = index.codebook.shape;
    w.write_magic(kIndexMagic);
    w.write_u16(kIndexVersion);
    w.write_u32(static_cast<std::uint32_t>(s.num_subspaces));
    w.write_u32(static_cast<std::uint32_t>(s.num_codewords));
    w.write_u32(static_cast<std::uint32_t>(s.sub_dim));
    w.write_u32(static_cast<std::uint32_t>(s.total_dim));
    w.write_u64(index.count);
    for (double x : index.codebook.codewords) w.write_f32(static_cast<float>(x));
    if (!index.codes.empty()) w.write_bytes(index.codes.data(), index.codes.size());
    if (index.ids.empty()) {
        w.write_u8(0);
    } else {
        w.write_u8(1);
        for (std::uint64_t id : index.ids) w.write_u64(id);
    }
}

inline RetrievalIndex load_index(const std::string& path) {
    auto in = open_input(path);
    ByteReader r(in);
    r.expect_magic(kIndexMagic, "GPQI index");
    r.expect_version(kIndexVersion, "GPQI index");
    const std::size_t m = r.read_u32(), k = r.read_u32(), d = r.read_u32(), total = r.read_u32();
    if (total != m * d) throw MalformedBytesError("GPQI header dims are inconsistent");
    RetrievalIndex index;
    index.codebook.shape = SubspaceShape::create(m, d, k);
    index.count = r.read_u64();
    if (index.count > (std::uint64_t{1} << 40))
        throw MalformedBytesError("GPQI item count is implausibly large");
    index.codebook.codewords.resize(m * k * d);
    for (double& x : index.codebook.codewords) x = r.read_f32();
    index.codes.resize(index.count * index.codebook.shape.code_bytes());
    if (!index.codes.empty()) r.read_bytes(index.codes.data(), index.codes.size());
    if (r.read_u8() != 0) {
        index.ids.resize(index.count);
        for (std::uint64_t& id : index.ids) id = r.read_u64();
    }
    return index;
}

}  // namespace gpq
