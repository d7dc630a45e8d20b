// Command-line front-end for the gpq retrieval pipeline:
//   synth -> split -> train -> build -> query / eval
//
// Exit codes: 0 ok, 2 usage/config, 3 io/corrupt file, 4 training
// divergence, 5 shape/consistency mismatch.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpq/gpq.hpp"
#include "gpq/version.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitShape = 5;

class PhaseTimer {
public:
    void start(const std::string& phase) {
        phase_ = phase;
        begin_ = std::chrono::steady_clock::now();
    }
    void stop() {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - begin_)
                            .count();
        timings_[phase_] = static_cast<double>(ms);
    }
    const std::map<std::string, double>& timings() const { return timings_; }

private:
    std::string phase_;
    std::chrono::steady_clock::time_point begin_;
    std::map<std::string, double> timings_;
};

std::uint64_t file_size(const std::string& path) {
    std::error_code ec;
    const auto n = std::filesystem::file_size(path, ec);
    return ec ? 0 : static_cast<std::uint64_t>(n);
}

// Every command writes a manifest next to its primary output describing the
// resolved configuration and the files it read and wrote.
void write_manifest(const std::string& command, const std::string& primary_output,
                    const json& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const PhaseTimer& timer) {
    json m;
    m["command"] = command;
    m["version"] = gpq::kVersionString;
    m["config"] = config;
    m["inputs"] = json::array();
    for (const auto& p : inputs) m["inputs"].push_back({{"path", p}, {"bytes", file_size(p)}});
    m["outputs"] = json::array();
    for (const auto& p : outputs) m["outputs"].push_back({{"path", p}, {"bytes", file_size(p)}});
    m["timings_ms"] = timer.timings();
    std::ofstream out(primary_output + ".manifest.json");
    if (!out) throw gpq::IoError("cannot write manifest for " + primary_output);
    out << m.dump(2) << "\n";
}

std::string format_fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::vector<double> row_to_vector(const gpq::Matrix& m, std::size_t i) {
    auto r = m.row(i);
    return {r.begin(), r.end()};
}

std::vector<double> label_row(const gpq::Dataset& ds, std::size_t i) {
    std::vector<double> out(ds.num_classes);
    for (std::size_t c = 0; c < ds.num_classes; ++c) out[c] = ds.labels[i][c];
    return out;
}

// Encoder features for the given dataset rows.
std::vector<std::vector<double>> encode_rows(const gpq::EncoderParams& encoder,
                                             const gpq::SubspaceShape& shape,
                                             const gpq::Dataset& ds,
                                             const std::vector<std::uint64_t>& ids) {
    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (std::uint64_t id : ids) {
        if (id >= ds.size())
            throw gpq::UnknownIdError("id " + std::to_string(id) + " not in dataset");
        out.push_back(gpq::encode(encoder, ds.vectors.row(id), shape).feature);
    }
    return out;
}

bool dataset_is_single_label(const gpq::Dataset& ds) {
    for (const auto& row : ds.labels) {
        int bits = 0;
        for (auto b : row) bits += b != 0;
        if (bits != 1) return false;
    }
    return true;
}

gpq::RelevanceJudge make_judge(const gpq::Dataset& ds) {
    gpq::RelevanceJudge judge;
    judge.mode = dataset_is_single_label(ds) ? gpq::RelevanceJudge::Mode::single_label
                                             : gpq::RelevanceJudge::Mode::multi_label;
    for (std::size_t i = 0; i < ds.size(); ++i) judge.labels.emplace(i, ds.labels[i]);
    return judge;
}

// --- command bodies -------------------------------------------------------

struct SynthArgs {
    std::string out;
    std::size_t classes = 10, per_class = 600, dim = 96;
    double spread = 0.15;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
    PhaseTimer timer;
    timer.start("generate");
    auto ds = gpq::synth_gaussian_mixture(a.classes, a.per_class, a.dim, a.spread, a.seed);
    timer.stop();
    timer.start("write");
    gpq::save_dataset(ds, a.out);
    timer.stop();
    write_manifest("synth", a.out,
                   {{"classes", a.classes},
                    {"per_class", a.per_class},
                    {"dim", a.dim},
                    {"spread", a.spread},
                    {"seed", a.seed}},
                   {}, {a.out}, timer);
    std::cout << "wrote " << a.out << ": " << ds.size() << " items, dim " << ds.dim << ", "
              << ds.num_classes << " classes\n";
    return kExitOk;
}

struct SplitArgs {
    std::string data, out;
    int protocol = 1;
    std::size_t labels_per_class = 50, query_per_class = 100;
    std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a) {
    PhaseTimer timer;
    timer.start("load");
    auto ds = gpq::load_dataset(a.data);
    timer.stop();
    timer.start("split");
    gpq::ProtocolSplit split =
        a.protocol == 1
            ? gpq::split_protocol1(ds, a.labels_per_class, a.query_per_class, a.seed)
            : gpq::split_protocol2(ds, a.seed);
    timer.stop();
    timer.start("write");
    gpq::save_split(split, a.out);
    timer.stop();
    write_manifest("split", a.out,
                   {{"protocol", a.protocol},
                    {"labels_per_class", a.labels_per_class},
                    {"query_per_class", a.query_per_class},
                    {"seed", a.seed}},
                   {a.data}, {a.out}, timer);
    std::cout << "wrote " << a.out << ": " << split.labeled_train.size() << " labeled, "
              << split.unlabeled_train.size() << " unlabeled, " << split.database.size()
              << " database, " << split.query.size() << " query\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data, split, out, log;
    gpq::TrainConfig cfg;
    std::size_t bits = 0;  // 0: use cfg.num_subspaces as given
};

int cmd_train(TrainArgs& a) {
    if (a.bits != 0) {
        const std::size_t per_index =
            gpq::SubspaceShape::create(1, 1, a.cfg.num_codewords).bits_per_index();
        if (a.bits % per_index != 0)
            throw gpq::InvalidConfigError("--bits must be a multiple of log2(K)");
        a.cfg.num_subspaces = a.bits / per_index;
    }
    a.cfg.validate();

    PhaseTimer timer;
    timer.start("load");
    auto ds = gpq::load_dataset(a.data);
    auto split = gpq::load_split(a.split);
    gpq::TrainingSet set;
    for (std::uint64_t id : split.labeled_train) {
        set.labeled_inputs.push_back(row_to_vector(ds.vectors, id));
        set.labels.push_back(label_row(ds, id));
    }
    for (std::uint64_t id : split.unlabeled_train)
        set.unlabeled_inputs.push_back(row_to_vector(ds.vectors, id));
    timer.stop();

    timer.start("train");
    auto result = gpq::train(set, a.cfg);
    timer.stop();

    timer.start("write");
    gpq::save_model(result.state.encoder, result.state.codebook, result.state.prototypes, a.out);
    std::vector<std::string> outputs{a.out};
    if (!a.log.empty()) {
        std::ofstream log(a.log);
        if (!log) throw gpq::IoError("cannot write metrics log: " + a.log);
        for (const auto& e : result.log)
            log << "epoch=" << e.epoch << " npq=" << format_fixed(e.npq, 9)
                << " cls=" << format_fixed(e.cls, 9) << " sem=" << format_fixed(e.sem, 9)
                << " total=" << format_fixed(e.total, 9) << "\n";
        outputs.push_back(a.log);
    }
    timer.stop();

    write_manifest("train", a.out,
                   {{"bits", a.cfg.shape().code_bits()},
                    {"num_subspaces", a.cfg.num_subspaces},
                    {"num_codewords", a.cfg.num_codewords},
                    {"sub_dim", a.cfg.sub_dim},
                    {"hidden", a.cfg.hidden_dim},
                    {"alpha", a.cfg.assign_scale},
                    {"beta", a.cfg.class_scale},
                    {"lambda1", a.cfg.lambda_cls},
                    {"lambda2", a.cfg.lambda_sem},
                    {"lr", a.cfg.learning_rate},
                    {"batch", a.cfg.batch_size},
                    {"epochs", a.cfg.epochs},
                    {"seed", a.cfg.seed}},
                   {a.data, a.split}, outputs, timer);
    const auto& last = result.log.back();
    std::cout << "trained " << a.cfg.epochs << " epochs: npq=" << format_fixed(last.npq)
              << " cls=" << format_fixed(last.cls) << " sem=" << format_fixed(last.sem)
              << " total=" << format_fixed(last.total) << "; wrote " << a.out << "\n";
    return kExitOk;
}

struct BuildArgs {
    std::string model, data, split, out;
    std::string proto_update = "on";
};

int cmd_build(const BuildArgs& a) {
    PhaseTimer timer;
    timer.start("load");
    auto model = gpq::load_model(a.model);
    auto ds = gpq::load_dataset(a.data);
    auto split = gpq::load_split(a.split);
    timer.stop();

    gpq::Codebook cb = model.codebook;
    if (a.proto_update == "on")
        cb = gpq::update_codewords_from_prototypes(cb, model.prototypes, cb.assign_scale);

    timer.start("encode");
    auto features = encode_rows(model.encoder, cb.shape, ds, split.database);
    timer.stop();
    timer.start("index");
    auto index = gpq::build_index(features, cb, split.database);
    gpq::save_index(index, a.out);
    timer.stop();

    write_manifest("build", a.out, {{"proto_update", a.proto_update}},
                   {a.model, a.data, a.split}, {a.out}, timer);
    std::cout << "wrote " << a.out << ": " << index.count << " items, "
              << index.bytes_per_code() << " bytes/code\n";
    return kExitOk;
}

struct QueryArgs {
    std::string index, model, data, split, ids;
    std::size_t k = 10;
};

int cmd_query(const QueryArgs& a) {
    auto index = gpq::load_index(a.index);
    auto model = gpq::load_model(a.model);
    auto ds = gpq::load_dataset(a.data);

    std::vector<std::uint64_t> query_ids;
    if (!a.ids.empty()) {
        std::stringstream ss(a.ids);
        std::string tok;
        while (std::getline(ss, tok, ',')) query_ids.push_back(std::stoull(tok));
    } else if (!a.split.empty()) {
        query_ids = gpq::load_split(a.split).query;
    } else {
        throw gpq::InvalidConfigError("query needs --split or --ids");
    }

    for (std::uint64_t id : query_ids) {
        if (id >= ds.size())
            throw gpq::UnknownIdError("query id " + std::to_string(id) + " not in dataset");
        auto feature =
            gpq::encode(model.encoder, ds.vectors.row(id), index.codebook.shape).feature;
        auto hits = index.count == 0 ? std::vector<gpq::SearchHit>{}
                                     : gpq::search_topk(feature, index, a.k);
        std::cout << "# query " << id << "\n";
        for (std::size_t r = 0; r < hits.size(); ++r)
            std::cout << (r + 1) << "\t" << hits[r].id << "\t" << format_fixed(hits[r].score)
                      << "\n";
    }
    return kExitOk;
}

struct EvalArgs {
    std::string index, model, data, split, out, baseline;
    std::vector<std::size_t> precision_ks;
    std::size_t cutoff = 0;
    std::size_t baseline_iters = 25;
    std::uint64_t baseline_seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    PhaseTimer timer;
    timer.start("load");
    auto index = gpq::load_index(a.index);
    auto model = gpq::load_model(a.model);
    auto ds = gpq::load_dataset(a.data);
    auto split = gpq::load_split(a.split);
    auto judge = make_judge(ds);
    timer.stop();

    timer.start("encode");
    gpq::QuerySet queries;
    queries.ids = split.query;
    queries.features = encode_rows(model.encoder, index.codebook.shape, ds, split.query);
    timer.stop();

    timer.start("evaluate");
    const double map = gpq::mean_ap(queries, index, judge, a.cutoff);
    std::vector<std::pair<std::size_t, double>> precisions;
    for (std::size_t k : a.precision_ks) {
        double sum = 0.0;
        for (std::size_t q = 0; q < queries.ids.size(); ++q) {
            auto hits = gpq::search_topk(queries.features[q], index, k);
            std::vector<std::uint64_t> ranked(hits.size());
            for (std::size_t i = 0; i < hits.size(); ++i) ranked[i] = hits[i].id;
            sum += gpq::precision_at_k(ranked, judge, queries.ids[q], k);
        }
        precisions.emplace_back(k, sum / static_cast<double>(queries.ids.size()));
    }
    timer.stop();

    std::vector<std::string> lines;
    lines.push_back("map=" + format_fixed(map));
    for (auto [k, p] : precisions)
        lines.push_back("precision_at_" + std::to_string(k) + "=" + format_fixed(p));

    // Label-free baseline: per-subspace k-means codebooks on the raw
    // intra-normalized vectors at the same code length.
    if (a.baseline == "pq") {
        timer.start("baseline");
        const std::size_t m = index.codebook.shape.num_subspaces;
        const std::size_t k = index.codebook.shape.num_codewords;
        if (ds.dim % m != 0)
            throw gpq::ShapeMismatchError("dataset dim " + std::to_string(ds.dim) +
                                          " is not divisible into " + std::to_string(m) +
                                          " subspaces for the pq baseline");
        auto base_shape = gpq::SubspaceShape::create(m, ds.dim / m, k);
        std::vector<std::vector<double>> db_features;
        db_features.reserve(split.database.size());
        for (std::uint64_t id : split.database)
            db_features.push_back(gpq::intra_normalize(ds.vectors.row(id), base_shape));
        auto base_cb =
            gpq::pq_baseline_train(db_features, base_shape, a.baseline_iters, a.baseline_seed);
        auto base_index = gpq::build_index(db_features, base_cb, split.database);
        gpq::QuerySet base_queries;
        base_queries.ids = split.query;
        base_queries.features.reserve(split.query.size());
        for (std::uint64_t id : split.query)
            base_queries.features.push_back(gpq::intra_normalize(ds.vectors.row(id), base_shape));
        const double base_map = gpq::mean_ap(base_queries, base_index, judge, a.cutoff);
        lines.push_back("map_baseline=" + format_fixed(base_map));
        timer.stop();
    }
    lines.push_back("queries=" + std::to_string(queries.ids.size()));
    lines.push_back("database=" + std::to_string(index.count));

    // human-readable table, then the machine-readable key=value block
    std::printf("%-18s %s\n", "metric", "value");
    for (const auto& line : lines) {
        const auto eq = line.find('=');
        std::printf("%-18s %s\n", line.substr(0, eq).c_str(), line.substr(eq + 1).c_str());
    }
    std::cout << "\n";
    for (const auto& line : lines) std::cout << line << "\n";
    if (!a.out.empty()) {
        std::ofstream out(a.out);
        if (!out) throw gpq::IoError("cannot write report: " + a.out);
        for (const auto& line : lines) out << line << "\n";
        write_manifest("eval", a.out, {{"cutoff", a.cutoff}, {"baseline", a.baseline}},
                       {a.index, a.model, a.data, a.split}, {a.out}, timer);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gpq: semi-supervised product-quantization retrieval"};
    app.require_subcommand(1);
    app.set_version_flag("--version", gpq::kVersionString);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic mixture dataset");
    synth_cmd->add_option("--out", synth.out, "output feature file")->required();
    synth_cmd->add_option("--classes", synth.classes, "number of classes");
    synth_cmd->add_option("--per-class", synth.per_class, "items per class");
    synth_cmd->add_option("--dim", synth.dim, "raw vector dimension");
    synth_cmd->add_option("--spread", synth.spread, "gaussian noise sigma");
    synth_cmd->add_option("--seed", synth.seed, "generation seed");

    SplitArgs split;
    auto* split_cmd = app.add_subcommand("split", "derive a protocol split");
    split_cmd->add_option("--data", split.data, "feature file")->required();
    split_cmd->add_option("--out", split.out, "output split file")->required();
    split_cmd->add_option("--protocol", split.protocol, "1 or 2")->check(CLI::IsMember({1, 2}));
    split_cmd->add_option("--labels-per-class", split.labels_per_class, "protocol 1 only");
    split_cmd->add_option("--query-per-class", split.query_per_class, "protocol 1 only");
    split_cmd->add_option("--seed", split.seed, "shuffle seed");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train the quantization network");
    train_cmd->add_option("--data", train.data, "feature file")->required();
    train_cmd->add_option("--split", train.split, "split file")->required();
    train_cmd->add_option("--out", train.out, "output model checkpoint")->required();
    train_cmd->add_option("--log", train.log, "per-epoch metrics log");
    train_cmd->add_option("--bits", train.bits, "code length; sets M = bits/log2(K)");
    train_cmd->add_option("--M", train.cfg.num_subspaces, "number of subspaces");
    train_cmd->add_option("--K", train.cfg.num_codewords, "codewords per codebook");
    train_cmd->add_option("--sub-dim", train.cfg.sub_dim, "sub-vector dimension");
    train_cmd->add_option("--hidden", train.cfg.hidden_dim, "encoder hidden width");
    train_cmd->add_option("--epochs", train.cfg.epochs, "training epochs");
    train_cmd->add_option("--batch", train.cfg.batch_size, "labeled/unlabeled pairs per batch");
    train_cmd->add_option("--lr", train.cfg.learning_rate, "initial learning rate");
    train_cmd->add_option("--alpha", train.cfg.assign_scale, "soft assignment scale");
    train_cmd->add_option("--beta", train.cfg.class_scale, "classifier scale");
    train_cmd->add_option("--lambda1", train.cfg.lambda_cls, "classification weight");
    train_cmd->add_option("--lambda2", train.cfg.lambda_sem, "entropy weight");
    train_cmd->add_option("--decay-rate", train.cfg.decay_rate, "lr decay factor");
    train_cmd->add_option("--decay-interval", train.cfg.decay_interval, "steps per decay unit");
    train_cmd->add_option("--seed", train.cfg.seed, "training seed");
    train_cmd->add_flag("--proto-update-each-epoch", train.cfg.proto_update_each_epoch,
                        "refresh codewords from prototypes after every epoch");

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "encode the database into an index");
    build_cmd->add_option("--model", build.model, "model checkpoint")->required();
    build_cmd->add_option("--data", build.data, "feature file")->required();
    build_cmd->add_option("--split", build.split, "split file (database ids)")->required();
    build_cmd->add_option("--out", build.out, "output index file")->required();
    build_cmd->add_option("--proto-update", build.proto_update,
                          "embed prototypes into codewords before encoding (on|off)")
        ->check(CLI::IsMember({"on", "off"}));

    QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "rank database items for queries");
    query_cmd->add_option("--index", query.index, "index file")->required();
    query_cmd->add_option("--model", query.model, "model checkpoint")->required();
    query_cmd->add_option("--data", query.data, "feature file")->required();
    query_cmd->add_option("--split", query.split, "split file (query ids)");
    query_cmd->add_option("--ids", query.ids, "comma-separated query ids");
    query_cmd->add_option("-k,--k", query.k, "results per query");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "measure retrieval quality");
    eval_cmd->add_option("--index", eval.index, "index file")->required();
    eval_cmd->add_option("--model", eval.model, "model checkpoint")->required();
    eval_cmd->add_option("--data", eval.data, "feature file")->required();
    eval_cmd->add_option("--split", eval.split, "split file")->required();
    eval_cmd->add_option("--out", eval.out, "report file");
    eval_cmd->add_option("-k,--precision-at", eval.precision_ks, "precision@k values to report");
    eval_cmd->add_option("--cutoff", eval.cutoff, "AP cutoff (0 = full ranking)");
    eval_cmd->add_option("--baseline", eval.baseline, "also evaluate a baseline (pq)")
        ->check(CLI::IsMember({"pq"}));
    eval_cmd->add_option("--baseline-iters", eval.baseline_iters, "baseline k-means iterations");
    eval_cmd->add_option("--baseline-seed", eval.baseline_seed, "baseline init seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth);
        if (split_cmd->parsed()) return cmd_split(split);
        if (train_cmd->parsed()) return cmd_train(train);
        if (build_cmd->parsed()) return cmd_build(build);
        if (query_cmd->parsed()) return cmd_query(query);
        if (eval_cmd->parsed()) return cmd_eval(eval);
    } catch (const gpq::NonFiniteGradientError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const gpq::ShapeMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const gpq::IndexOutOfRangeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const gpq::UnknownIdError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const gpq::ZeroVectorError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const gpq::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gpq::BadMagicError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gpq::VersionMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gpq::TruncatedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gpq::MalformedBytesError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gpq::Error& e) {
        // config/data preconditions: insufficient items, bad values, ...
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}
