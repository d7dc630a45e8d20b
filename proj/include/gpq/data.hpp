#pragma once

// Dataset ingestion (binary feature files and CSV), synthetic mixture
// generation for desk-scale experiments, and the two semi-supervised split
// protocols.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gpq/error.hpp"
#include "gpq/io.hpp"
#include "gpq/numerics.hpp"

namespace gpq {

// Raw vectors with multi-hot labels; item ids are row indices.
struct Dataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    Matrix vectors;                                 // N x dim
    std::vector<std::vector<std::uint8_t>> labels;  // N rows of num_classes 0/1 flags

    std::size_t size() const { return labels.size(); }

    // Lowest set label, used as the grouping class for single-label protocols.
    std::size_t primary_class(std::size_t i) const {
        for (std::size_t c = 0; c < num_classes; ++c)
            if (labels[i][c]) return c;
        throw InvalidDistributionError("item " + std::to_string(i) + " has no labels");
    }
};

struct ProtocolSplit {
    int protocol = 1;
    std::vector<std::uint64_t> labeled_train;
    std::vector<std::uint64_t> unlabeled_train;
    std::vector<std::uint64_t> database;
    std::vector<std::uint64_t> query;
};

// Gaussian mixture around random unit class means. Means are redrawn until
// all pairwise cosine similarities fall below 0.9.
inline Dataset synth_gaussian_mixture(std::size_t num_classes, std::size_t per_class,
                                      std::size_t dim, double spread, std::uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || dim < 1)
        throw InvalidConfigError("synth_gaussian_mixture: counts and dim must be positive");
    if (spread < 0.0 || !std::isfinite(spread))
        throw InvalidConfigError("synth_gaussian_mixture: spread must be finite and >= 0");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> means(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (;;) {
            std::vector<double> mean(dim);
            for (double& x : mean) x = gauss(rng);
            l2_normalize_inplace(mean);
            bool separated = true;
            for (std::size_t o = 0; o < c && separated; ++o)
                if (dot(mean, means[o]) >= 0.9) separated = false;
            if (separated) {
                means[c] = std::move(mean);
                break;
            }
        }
    }

    Dataset ds;
    ds.dim = dim;
    ds.num_classes = num_classes;
    ds.vectors = Matrix(num_classes * per_class, dim);
    ds.labels.assign(num_classes * per_class, std::vector<std::uint8_t>(num_classes, 0));
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            auto dst = ds.vectors.row(row);
            for (std::size_t j = 0; j < dim; ++j) dst[j] = means[c][j] + spread * gauss(rng);
            ds.labels[row][c] = 1;
        }
    return ds;
}

// Per class: `labels_per_class` items become labeled training data,
// `query_per_class` become queries, and the remainder becomes the retrieval
// database, which doubles as the unlabeled training pool.
inline ProtocolSplit split_protocol1(const Dataset& ds, std::size_t labels_per_class,
                                     std::size_t query_per_class, std::uint64_t seed) {
    std::vector<std::vector<std::uint64_t>> per_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        per_class[ds.primary_class(i)].push_back(i);

    std::mt19937_64 rng(seed);
    ProtocolSplit split;
    split.protocol = 1;
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        auto& items = per_class[c];
        if (items.size() < labels_per_class + query_per_class)
            throw InsufficientItemsError("class " + std::to_string(c) + " has " +
                                         std::to_string(items.size()) +
                                         " items, need labels_per_class + query_per_class");
        std::shuffle(items.begin(), items.end(), rng);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < labels_per_class; ++i)
            split.labeled_train.push_back(items[pos++]);
        for (std::size_t i = 0; i < query_per_class; ++i) split.query.push_back(items[pos++]);
        for (; pos < items.size(); ++pos) split.database.push_back(items[pos]);
    }
    split.unlabeled_train = split.database;
    return split;
}

// Unseen-category protocol: 75% of the classes are "seen". Each class is
// halved; the seen train halves form the labeled training set, the seen test
// halves plus the unseen train halves form the database (and the unlabeled
// training pool), and the unseen test halves form the queries.
inline ProtocolSplit split_protocol2(const Dataset& ds, std::uint64_t seed) {
    if (ds.num_classes < 4)
        throw InsufficientClassesError("protocol 2 needs at least 4 classes");
    std::mt19937_64 rng(seed);

    std::vector<std::size_t> class_order(ds.num_classes);
    for (std::size_t c = 0; c < ds.num_classes; ++c) class_order[c] = c;
    std::shuffle(class_order.begin(), class_order.end(), rng);
    const std::size_t num_seen = std::max<std::size_t>(1, ds.num_classes * 3 / 4);
    std::vector<bool> seen(ds.num_classes, false);
    for (std::size_t i = 0; i < num_seen; ++i) seen[class_order[i]] = true;

    std::vector<std::vector<std::uint64_t>> per_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        per_class[ds.primary_class(i)].push_back(i);

    ProtocolSplit split;
    split.protocol = 2;
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        auto& items = per_class[c];
        if (items.size() < 2)
            throw InsufficientItemsError("class " + std::to_string(c) +
                                         " has fewer than 2 items");
        std::shuffle(items.begin(), items.end(), rng);
        const std::size_t half = (items.size() + 1) / 2;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const bool train_part = i < half;
            if (seen[c]) {
                if (train_part)
                    split.labeled_train.push_back(items[i]);
                else
                    split.database.push_back(items[i]);
            } else {
                if (train_part)
                    split.database.push_back(items[i]);
                else
                    split.query.push_back(items[i]);
            }
        }
    }
    split.unlabeled_train = split.database;
    return split;
}

// --- feature file format: magic "GPQD", version u16, N u64, dim u32,
// num_classes u32, N*dim float32 row-major, then N label bitmaps of
// ceil(num_classes/8) bytes each, bits filled least-significant-first ---

inline constexpr char kDatasetMagic[4] = {'G', 'P', 'Q', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
    auto out = open_output(path);
    ByteWriter w(out);
    w.write_magic(kDatasetMagic);
    w.write_u16(kDatasetVersion);
    w.write_u64(ds.size());
    w.write_u32(static_cast<std::uint32_t>(ds.dim));
    w.write_u32(static_cast<std::uint32_t>(ds.num_classes));
    for (double x : ds.vectors.data) w.write_f32(static_cast<float>(x));
    const std::size_t label_bytes = (ds.num_classes + 7) / 8;
    std::vector<std::uint8_t> bitmap(label_bytes);
    for (const auto& row : ds.labels) {
        std::fill(bitmap.begin(), bitmap.end(), 0);
        for (std::size_t c = 0; c < ds.num_classes; ++c)
            if (row[c]) bitmap[c >> 3] |= static_cast<std::uint8_t>(1u << (c & 7));
        w.write_bytes(bitmap.data(), bitmap.size());
    }
}

inline Dataset load_dataset_binary(const std::string& path) {
    auto in = open_input(path);
    ByteReader r(in);
    r.expect_magic(kDatasetMagic, "GPQD feature file");
    r.expect_version(kDatasetVersion, "GPQD feature file");
    Dataset ds;
    const std::size_t n = r.read_u64();
    ds.dim = r.read_u32();
    ds.num_classes = r.read_u32();
    if (ds.dim == 0) throw MalformedBytesError("GPQD file has zero feature dimension");
    if (n > (std::uint64_t{1} << 40))
        throw MalformedBytesError("GPQD item count is implausibly large");
    ds.vectors = Matrix(n, ds.dim);
    for (double& x : ds.vectors.data) x = r.read_f32();
    const std::size_t label_bytes = (ds.num_classes + 7) / 8;
    ds.labels.assign(n, std::vector<std::uint8_t>(ds.num_classes, 0));
    std::vector<std::uint8_t> bitmap(label_bytes);
    for (auto& row : ds.labels) {
        r.read_bytes(bitmap.data(), bitmap.size());
        for (std::size_t c = 0; c < ds.num_classes; ++c)
            row[c] = (bitmap[c >> 3] >> (c & 7)) & 1u;
    }
    return ds;
}

// CSV: header row, then one line per item: id, feature components, and a
// final column of semicolon-separated concept indices (may be empty).
inline Dataset load_dataset_csv(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw MalformedBytesError("CSV file is empty: " + path);
    std::size_t columns = 1;
    for (char ch : line)
        if (ch == ',') ++columns;
    if (columns < 3)
        throw MalformedBytesError("CSV needs id, at least one feature, and a label column");
    const std::size_t dim = columns - 2;

    std::vector<std::vector<double>> rows;
    std::vector<std::vector<std::size_t>> concepts;
    std::size_t max_concept = 0;
    bool any_concept = false;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        // a trailing empty label column is dropped by getline
        if (cells.size() == columns - 1) cells.push_back("");
        if (cells.size() != columns)
            throw MalformedBytesError("CSV line " + std::to_string(line_no) + " has " +
                                      std::to_string(cells.size()) + " columns, expected " +
                                      std::to_string(columns));
        std::vector<double> vec(dim);
        try {
            for (std::size_t j = 0; j < dim; ++j) vec[j] = std::stod(cells[1 + j]);
        } catch (const std::exception&) {
            throw MalformedBytesError("CSV line " + std::to_string(line_no) +
                                      " has a non-numeric feature");
        }
        rows.push_back(std::move(vec));
        std::vector<std::size_t> cs;
        std::stringstream ls(cells.back());
        std::string tok;
        while (std::getline(ls, tok, ';')) {
            if (tok.empty()) continue;
            try {
                cs.push_back(static_cast<std::size_t>(std::stoul(tok)));
            } catch (const std::exception&) {
                throw MalformedBytesError("CSV line " + std::to_string(line_no) +
                                          " has a non-numeric concept index");
            }
            max_concept = std::max(max_concept, cs.back());
            any_concept = true;
        }
        concepts.push_back(std::move(cs));
    }

    Dataset ds;
    ds.dim = dim;
    ds.num_classes = any_concept ? max_concept + 1 : 0;
    ds.vectors = Matrix(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), ds.vectors.row(i).begin());
    ds.labels.assign(rows.size(), std::vector<std::uint8_t>(ds.num_classes, 0));
    for (std::size_t i = 0; i < concepts.size(); ++i)
        for (std::size_t c : concepts[i]) ds.labels[i][c] = 1;
    return ds;
}

// Dispatches on the file's magic bytes; anything that is not a GPQD file is
// parsed as CSV.
inline Dataset load_dataset(const std::string& path) {
    {
        auto in = open_input(path);
        char magic[4] = {0, 0, 0, 0};
        in.read(magic, 4);
        if (in.gcount() == 4 && std::memcmp(magic, kDatasetMagic, 4) == 0)
            return load_dataset_binary(path);
    }
    return load_dataset_csv(path);
}

// --- split files: a small line-based text format ---

inline void save_split(const ProtocolSplit& split, const std::string& path) {
    auto out = open_output(path);
    out << "gpq-split v1\n";
    out << "protocol=" << split.protocol << "\n";
    auto write_ids = [&out](const char* name, const std::vector<std::uint64_t>& ids) {
        out << name << ":";
        for (std::uint64_t id : ids) out << ' ' << id;
        out << "\n";
    };
    write_ids("labeled_train", split.labeled_train);
    write_ids("unlabeled_train", split.unlabeled_train);
    write_ids("database", split.database);
    write_ids("query", split.query);
    if (!out) throw IoError("cannot write split file: " + path);
}

inline ProtocolSplit load_split(const std::string& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line) || line != "gpq-split v1")
        throw BadMagicError("not a gpq split file: " + path);
    ProtocolSplit split;
    bool have_protocol = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("protocol=", 0) == 0) {
            try {
                split.protocol = std::stoi(line.substr(9));
            } catch (const std::exception&) {
                throw MalformedBytesError("split file has a malformed protocol line");
            }
            have_protocol = true;
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw MalformedBytesError("split file has a malformed line: " + line);
        const std::string name = line.substr(0, colon);
        std::vector<std::uint64_t>* target = nullptr;
        if (name == "labeled_train") target = &split.labeled_train;
        else if (name == "unlabeled_train") target = &split.unlabeled_train;
        else if (name == "database") target = &split.database;
        else if (name == "query") target = &split.query;
        else throw MalformedBytesError("split file has an unknown section: " + name);
        std::stringstream ss(line.substr(colon + 1));
        std::uint64_t id;
        while (ss >> id) target->push_back(id);
    }
    if (!have_protocol) throw MalformedBytesError("split file is missing the protocol line");
    return split;
}

}  // namespace gpq
