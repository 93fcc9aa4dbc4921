#include "cqe/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "binary_io.hpp"
#include "cqe/common.hpp"
#include "cqe/config.hpp"
#include "cqe/corpus.hpp"
#include "cqe/cqe_core.hpp"
#include "cqe/dense_index.hpp"
#include "cqe/eval_metrics.hpp"
#include "cqe/fusion.hpp"
#include "cqe/sparse_index.hpp"
#include "cqe/synthetic.hpp"
#include "cqe/trainer.hpp"

namespace cqe {

namespace {

constexpr std::uint64_t kDefaultReferenceSeed = 7;

/// Raw flag values. Options that override config fields are read through
/// their CLI::Option handles so that "not given" stays distinguishable.
struct Options {
    std::string config;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    std::string output;

    std::string corpus, index, store, queries, matrices, encoder, sessions, qids, qrels, labels, heldout, trace;
    std::string teacher_table, sparse_run, dense_run, baseline, session_id = "live";
    std::vector<std::string> runs;
    double k1 = 0, b = 0, gamma = 0, alpha = 0, rrf_k = 0, tau = 0, lr = 0;
    std::size_t batch_size = 0, steps = 0, cutoff = 0, dim = 32, topics = 10, passages_per_topic = 10;
    std::uint64_t ref_seed = kDefaultReferenceSeed;
    std::string metric = "ndcg";
    bool hard_negatives = false, soft_labels = false, per_query = false;
};

struct Handles {
    CLI::Option* seed = nullptr;
    CLI::Option* k = nullptr;
    // Several subcommands may register the same flag name.
    std::map<std::string, std::vector<CLI::Option*>> by_name;

    bool given(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) return false;
        return std::any_of(it->second.begin(), it->second.end(), [](const CLI::Option* opt) { return opt->count() > 0; });
    }
};

std::string fmt(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

void emit(const std::string& text, const Options& o, std::ostream& out) {
    if (o.output.empty()) {
        out << text;
    } else {
        binary::write_file(o.output, text);
    }
}

std::filesystem::path need(const std::string& flag_value, const std::filesystem::path& config_value,
                           const char* flag, const char* command) {
    if (!flag_value.empty()) return flag_value;
    if (!config_value.empty()) return config_value;
    throw InvalidArgument(std::string(command) + " needs " + flag);
}

std::filesystem::path need(const std::string& flag_value, const char* flag, const char* command) {
    return need(flag_value, {}, flag, command);
}

std::set<std::string> load_id_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open id list " + path.string());
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string id;
        if (ss >> id) ids.insert(id);
    }
    return ids;
}

/// `qid \t text` per line.
std::vector<std::pair<std::string, std::string>> load_queries_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open query file " + path.string());
    std::vector<std::pair<std::string, std::string>> queries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw IoError("expected 'qid<TAB>text' at " + path.string() + ":" + std::to_string(line_no));
        }
        queries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return queries;
}

EngineConfig resolve_config(const Options& o, const Handles& h) {
    EngineConfig c;
    if (auto path = resolve_config_path(o.config)) c = load_engine_config(*path);

    if (h.given("corpus")) c.paths.corpus = o.corpus;
    if (h.given("index")) c.paths.sparse_index = o.index;
    if (h.given("store")) c.paths.dense_store = o.store;
    if (h.given("matrices")) c.paths.query_matrices = o.matrices;
    if (h.given("qrels")) c.paths.qrels = o.qrels;
    if (h.given("k1")) c.bm25.k1 = o.k1;
    if (h.given("b")) c.bm25.b = o.b;
    if (h.given("alpha")) c.fusion.alpha = o.alpha;
    if (h.given("rrf-k")) c.fusion.rrf_k = o.rrf_k;
    if (h.given("tau")) c.train.tau = o.tau;
    if (h.given("lr")) c.train.learning_rate = o.lr;
    if (h.given("batch-size")) c.train.batch_size = o.batch_size;
    if (h.given("steps")) c.train.steps = o.steps;
    if (h.given("hard-negatives")) c.train.use_hard_negatives = o.hard_negatives;
    if (h.given("soft-labels")) c.train.use_soft_labels = o.soft_labels;
    if (h.seed->count() > 0) c.train.seed = o.seed;
    if (h.k->count() > 0) c.k = o.k;
    c.validate();
    c.validate_paths();
    return c;
}

/// Token matrices per turn, from a matrices file or by encoding sessions.
std::vector<QueryMatrix> query_matrices(const Options& o, const EngineConfig& c, const char* command) {
    std::vector<QueryMatrix> out;
    if (!o.encoder.empty()) {
        if (o.sessions.empty()) throw InvalidArgument(std::string(command) + ": --encoder needs --sessions");
        if (!o.matrices.empty()) throw InvalidArgument(std::string(command) + ": give --matrices or --encoder, not both");
        const auto encoder = ToyQueryEncoder::load(o.encoder);
        for (const auto& input : turn_inputs(load_sessions(o.sessions))) {
            out.push_back({input.qid, encoder.encode(input)});
        }
    } else if (!c.paths.query_matrices.empty()) {
        out = load_query_matrices(c.paths.query_matrices);
    } else {
        throw InvalidArgument(std::string(command) + " needs --matrices or --encoder with --sessions");
    }
    if (!o.qids.empty()) {
        const auto keep = load_id_set(o.qids);
        std::erase_if(out, [&](const QueryMatrix& m) { return !keep.contains(m.qid); });
    }
    std::stable_sort(out.begin(), out.end(), [](const QueryMatrix& a, const QueryMatrix& b) { return a.qid < b.qid; });
    return out;
}

void truncate(RankedList& list, std::size_t k) {
    if (list.entries.size() > k) list.entries.resize(k);
}

std::string run_text(const Run& run) {
    std::string text;
    for (const auto& [qid, list] : run) text += format_run_lines(qid, list);
    return text;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_index_sparse(const Options& o, const EngineConfig& c, std::ostream& out) {
    const auto corpus = load_corpus(need(o.corpus, c.paths.corpus, "--corpus", "index-sparse"));
    const auto index = InvertedIndex::build(corpus, c.bm25);
    index.save(need(o.output, "--output", "index-sparse"));
    out << "indexed " << index.doc_count() << " passages, " << index.postings().size() << " terms\n";
    return 0;
}

int cmd_search_sparse(const Options& o, const EngineConfig& c, std::ostream& out) {
    const auto index = InvertedIndex::load(need(o.index, c.paths.sparse_index, "--index", "search-sparse"));
    Run run;
    for (const auto& [qid, text] : load_queries_tsv(need(o.queries, "--queries", "search-sparse"))) {
        run[qid] = index.search(tokenize(text), c.k, "bm25");
    }
    emit(run_text(run), o, out);
    return 0;
}

int cmd_search_dense(const Options& o, const EngineConfig& c, std::ostream& out) {
    const auto store = PassageEmbeddingStore::load(need(o.store, c.paths.dense_store, "--store", "search-dense"));
    Run run;
    for (const auto& m : query_matrices(o, c, "search-dense")) run[m.qid] = store.search(pool(m.matrix), c.k, "cqe-dense");
    emit(run_text(run), o, out);
    return 0;
}

RankedList fuse_pair(const std::string& qid, const RankedList& sparse, const RankedList& dense,
                     const FusionConfig& fusion, std::size_t k) {
    RankedList fused;
    if (sparse.empty() && dense.empty()) {
        fused.tag = "cqe-hybrid";
    } else if (sparse.empty() || dense.empty()) {
        logging::warn("query " + qid + ": one input list is empty; using the other alone");
        fused = sparse.empty() ? dense : sparse;
        fused.tag = "cqe-hybrid";
    } else {
        fused = hybrid_combine(sparse, dense, fusion, "cqe-hybrid");
    }
    truncate(fused, k);
    return fused;
}

int cmd_search_hybrid(const Options& o, const EngineConfig& c, const Handles& h, std::ostream& out) {
    Run run;
    if (!o.sparse_run.empty() || !o.dense_run.empty()) {
        if (o.sparse_run.empty() || o.dense_run.empty()) {
            throw InvalidArgument("search-hybrid needs both --sparse-run and --dense-run");
        }
        const auto sparse = load_run(o.sparse_run);
        const auto dense = load_run(o.dense_run);
        std::set<std::string> qids;
        for (const auto& [qid, l] : sparse) qids.insert(qid);
        for (const auto& [qid, l] : dense) qids.insert(qid);
        const RankedList none;
        for (const auto& qid : qids) {
            auto s = sparse.find(qid);
            auto d = dense.find(qid);
            run[qid] = fuse_pair(qid, s == sparse.end() ? none : s->second, d == dense.end() ? none : d->second,
                                 c.fusion, c.k);
        }
    } else {
        const auto index = InvertedIndex::load(need(o.index, c.paths.sparse_index, "--index", "search-hybrid"));
        const auto store = PassageEmbeddingStore::load(need(o.store, c.paths.dense_store, "--store", "search-hybrid"));
        auto rewrite = c.hybrid_rewrite();
        if (h.given("gamma")) rewrite.gamma = o.gamma;
        for (const auto& m : query_matrices(o, c, "search-hybrid")) {
            const auto sparse = index.search(decontextualize(m.matrix, rewrite), c.k, "bm25");
            const auto dense = store.search(pool(m.matrix), c.k, "cqe-dense");
            run[m.qid] = fuse_pair(m.qid, sparse, dense, c.fusion, c.k);
        }
    }
    emit(run_text(run), o, out);
    return 0;
}

int cmd_rewrite(const Options& o, const EngineConfig& c, const Handles& h, std::ostream& out) {
    auto rewrite = c.rewrite;
    if (h.given("gamma")) rewrite.gamma = o.gamma;
    std::string text;
    for (const auto& m : query_matrices(o, c, "rewrite")) {
        text += m.qid + "\t" + join_tokens(decontextualize(m.matrix, rewrite)) + "\n";
    }
    emit(text, o, out);
    return 0;
}

int cmd_fuse_rrf(const Options& o, const EngineConfig& c, std::ostream& out) {
    if (o.runs.size() < 2) throw InvalidArgument("fuse-rrf needs at least two --run files");
    std::vector<Run> runs;
    for (const auto& path : o.runs) runs.push_back(load_run(path));
    std::set<std::string> qids;
    for (const auto& r : runs) {
        for (const auto& [qid, l] : r) qids.insert(qid);
    }
    Run fused;
    for (const auto& qid : qids) {
        std::vector<RankedList> lists;
        for (const auto& r : runs) {
            auto it = r.find(qid);
            if (it != r.end()) lists.push_back(it->second);
        }
        auto list = rrf(lists, c.fusion, "rrf");
        truncate(list, c.k);
        fused[qid] = std::move(list);
    }
    emit(run_text(fused), o, out);
    return 0;
}

int cmd_build_weak_labels(const Options& o, const EngineConfig& c, std::ostream& out) {
    const auto corpus = load_corpus(need(o.corpus, c.paths.corpus, "--corpus", "build-weak-labels"));
    const auto sessions = load_sessions(need(o.sessions, "--sessions", "build-weak-labels"));
    const auto output = need(o.output, "--output", "build-weak-labels");
    const auto index = c.paths.sparse_index.empty() ? InvertedIndex::build(corpus, c.bm25)
                                                    : InvertedIndex::load(c.paths.sparse_index);
    WeakLabelSet labels;
    if (!o.teacher_table.empty()) {
        labels = build_weak_labels(corpus, sessions, index, TableTeacher::load(o.teacher_table));
    } else {
        const auto store =
            PassageEmbeddingStore::load(need(o.store, c.paths.dense_store, "--store or --teacher-table", "build-weak-labels"));
        const CosineTeacher teacher(ReferenceEmbedder(store.dim(), o.ref_seed), store);
        labels = build_weak_labels(corpus, sessions, index, teacher);
    }
    save_weak_labels(labels, output);
    out << "labelled " << labels.size() << " turns\n";
    return 0;
}

int cmd_train_toy(const Options& o, const EngineConfig& c, std::ostream& out) {
    auto labels = load_weak_labels(need(o.labels, "--labels", "train-toy"));
    const auto sessions = load_sessions(need(o.sessions, "--sessions", "train-toy"));
    const auto store = PassageEmbeddingStore::load(need(o.store, c.paths.dense_store, "--store", "train-toy"));
    const auto output = need(o.output, "--output", "train-toy");
    if (!o.heldout.empty()) {
        const auto heldout = load_id_set(o.heldout);
        std::erase_if(labels, [&](const WeakLabel& l) { return heldout.contains(l.qid); });
    }

    const auto initial =
        ToyQueryEncoder::from_reference(session_vocabulary(sessions), ReferenceEmbedder(store.dim(), o.ref_seed));
    TrainResult result{initial, {}};
    if (c.train.steps > 0) result = train(initial, labels, sessions, store, c.train);
    result.encoder.save(output);

    if (!o.trace.empty()) {
        std::string trace;
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
            trace += std::to_string(i) + "\t" + fmt(result.loss_trace[i], 9) + "\n";
        }
        binary::write_file(o.trace, trace);
    }
    out << "trained " << result.loss_trace.size() << " steps on " << labels.size() << " labelled turns";
    if (!result.loss_trace.empty()) out << ", final loss " << fmt(result.loss_trace.back(), 6);
    out << "\n";
    return 0;
}

MetricReport evaluate(const Run& run, const Qrels& qrels, const std::string& metric, std::size_t cutoff,
                      bool cutoff_given, std::string& label) {
    if (metric == "ndcg@3") {
        if (cutoff_given && cutoff != 3) throw InvalidArgument("--metric ndcg@3 fixes the cutoff at 3");
        label = "ndcg@3";
        return ndcg(run, qrels, 3);
    }
    const std::size_t depth = cutoff_given ? cutoff : 1000;
    if (metric == "ndcg") {
        label = "ndcg@" + std::to_string(depth);
        return ndcg(run, qrels, depth);
    }
    if (metric == "recall") {
        label = "recall@" + std::to_string(depth);
        return recall_at(run, qrels, depth, 2);
    }
    throw InvalidArgument("unknown metric '" + metric + "' (expected ndcg, ndcg@3 or recall)");
}

int cmd_eval(const Options& o, const EngineConfig& c, const Handles& h, std::ostream& out) {
    const auto run = load_run(need(o.runs.empty() ? std::string() : o.runs.front(), "--run", "eval"));
    const auto qrels = load_qrels(need(o.qrels, c.paths.qrels, "--qrels", "eval"));
    std::string label;
    const auto report = evaluate(run, qrels, o.metric, o.cutoff, h.given("cutoff"), label);
    std::string text;
    if (o.per_query) {
        for (const auto& [qid, v] : report.per_query) text += label + "\t" + qid + "\t" + fmt(v, 4) + "\n";
    }
    text += label + "\tall\t" + fmt(report.mean, 4) + "\n";
    emit(text, o, out);
    return 0;
}

int cmd_compare(const Options& o, const EngineConfig& c, const Handles& h, std::ostream& out) {
    if (o.runs.size() != 1) throw InvalidArgument("compare needs exactly one --run (the system) and --baseline");
    const auto system_run = load_run(o.runs.front());
    const auto baseline_run = load_run(need(o.baseline, "--baseline", "compare"));
    const auto qrels = load_qrels(need(o.qrels, c.paths.qrels, "--qrels", "compare"));
    std::string label;
    auto sys = evaluate(system_run, qrels, o.metric, o.cutoff, h.given("cutoff"), label);
    auto base = evaluate(baseline_run, qrels, o.metric, o.cutoff, h.given("cutoff"), label);

    // Restrict both to the queries they share.
    for (auto it = sys.per_query.begin(); it != sys.per_query.end();) {
        if (!base.per_query.contains(it->first)) {
            logging::warn("query " + it->first + " missing from the baseline; excluded");
            it = sys.per_query.erase(it);
        } else {
            ++it;
        }
    }
    for (auto it = base.per_query.begin(); it != base.per_query.end();) {
        if (!sys.per_query.contains(it->first)) {
            logging::warn("query " + it->first + " missing from the system run; excluded");
            it = base.per_query.erase(it);
        } else {
            ++it;
        }
    }
    if (sys.per_query.size() < 2) throw InvalidArgument("compare needs at least two shared queries");
    const auto wt = win_tie(sys, base);
    const auto [a, b] = align_reports(sys, base);
    const auto t = paired_t_test(a, b);
    double mean_a = 0, mean_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i] / static_cast<double>(a.size());
        mean_b += b[i] / static_cast<double>(b.size());
    }

    std::string text;
    text += "metric\t" + label + "\n";
    text += "queries\t" + std::to_string(a.size()) + "\n";
    text += "system\t" + fmt(mean_a, 4) + "\n";
    text += "baseline\t" + fmt(mean_b, 4) + "\n";
    text += "wins\t" + std::to_string(wt.wins) + "\n";
    text += "ties\t" + std::to_string(wt.ties) + "\n";
    text += "losses\t" + std::to_string(wt.losses) + "\n";
    text += "t\t" + fmt(t.t, 4) + "\n";
    text += "p\t" + fmt(t.p_two_sided, 6) + "\n";
    emit(text, o, out);
    return 0;
}

int cmd_converse(const Options& o, const EngineConfig& c, std::istream& in, std::ostream& out, std::ostream& err) {
    const auto store = PassageEmbeddingStore::load(need(o.store, c.paths.dense_store, "--store", "converse"));
    std::optional<InvertedIndex> index;
    if (!c.paths.sparse_index.empty()) index = InvertedIndex::load(c.paths.sparse_index);

    std::optional<ToyQueryEncoder> encoder;
    std::map<std::string, TokenEmbeddingMatrix> by_qid;
    if (!o.encoder.empty()) {
        encoder = ToyQueryEncoder::load(o.encoder);
        if (encoder->dim() != store.dim()) throw InvalidArgument("encoder and passage store dims differ");
    } else if (!c.paths.query_matrices.empty()) {
        for (auto& m : load_query_matrices(c.paths.query_matrices)) by_qid.emplace(m.qid, std::move(m.matrix));
    } else {
        throw InvalidArgument("converse needs --encoder or --matrices");
    }

    const auto rewrite_config = index ? c.hybrid_rewrite() : c.rewrite;
    std::vector<std::string> context;
    std::size_t turn = 0;
    std::string line;
    int status = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        line = line.substr(first, line.find_last_not_of(" \t") - first + 1);
        if (line == "quit" || line == "exit") break;
        if (line == "reset") {
            context.clear();
            turn = 0;
            out << "context cleared\n";
            continue;
        }

        const auto qid = o.session_id + "_" + std::to_string(turn + 1);
        const auto query = tokenize(line);
        TokenEmbeddingMatrix matrix;
        try {
            if (encoder) {
                matrix = encoder->encode(context, query);
            } else {
                auto it = by_qid.find(qid);
                if (it == by_qid.end()) throw InvalidArgument("no token matrix for turn " + qid);
                matrix = it->second;
            }
            if (matrix.empty()) throw InvalidArgument("turn " + qid + " has no tokens");
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            status = 1;
            continue;
        }

        const auto rewritten = decontextualize(matrix, rewrite_config);
        auto dense = store.search(pool(matrix), c.k, "cqe-dense");
        RankedList results = dense;
        if (index) results = fuse_pair(qid, index->search(rewritten, c.k, "bm25"), dense, c.fusion, c.k);
        truncate(results, c.k);

        out << "turn " << qid << ": " << line << "\n";
        out << "rewrite: " << join_tokens(rewritten) << "\n";
        out << "norms:";
        for (const auto& n : token_norm_report(matrix)) {
            out << " " << n.token << (n.is_context ? "*" : "") << "=" << fmt(n.l2_norm, 4);
            if (n.normalized_norm) out << "(" << fmt(*n.normalized_norm, 4) << ")";
        }
        out << "\n";
        for (const auto& e : results.entries) out << e.rank << "\t" << e.docid << "\t" << fmt(e.score) << "\n";

        for (const auto& tok : query) context.push_back(tok);
        ++turn;
    }
    return status;
}

int cmd_make_synthetic(const Options& o, const Handles& h, std::ostream& out) {
    SyntheticConfig sc;
    sc.dim = o.dim;
    sc.topics = o.topics;
    sc.passages_per_topic = o.passages_per_topic;
    if (h.seed->count() > 0) sc.seed = o.seed;
    const auto data = make_synthetic_dataset(sc);
    save_synthetic_dataset(data, need(o.output, "--output", "make-synthetic"));
    out << "wrote " << data.corpus.count() << " passages and " << data.sessions.size() << " sessions\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conversational passage retrieval with contextualized query embeddings", "cqe"};
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    Handles h;
    app.add_option("--config", o.config, "JSON engine config (falls back to $CQE_CONFIG)");
    h.seed = app.add_option("--seed", o.seed, "Random seed");
    h.k = app.add_option("--k", o.k, "Retrieval depth");
    app.add_option("--output", o.output, "Output path (stdout when omitted, where allowed)");

    auto opt = [&](CLI::App* sub, const std::string& name, auto& target, const std::string& help) {
        auto* option = sub->add_option("--" + name, target, help);
        h.by_name[name].push_back(option);
        return option;
    };
    auto flag = [&](CLI::App* sub, const std::string& name, bool& target, const std::string& help) {
        h.by_name[name].push_back(sub->add_flag("--" + name, target, help));
    };
    auto query_source = [&](CLI::App* sub) {
        opt(sub, "matrices", o.matrices, "Token matrices (JSON lines, one per turn)");
        opt(sub, "encoder", o.encoder, "Toy encoder manifest; encodes --sessions");
        opt(sub, "sessions", o.sessions, "Sessions (JSON lines)");
        opt(sub, "qids", o.qids, "Restrict to the query ids listed in this file");
    };

    auto* index_sparse = app.add_subcommand("index-sparse", "Build a BM25 index from a corpus");
    opt(index_sparse, "corpus", o.corpus, "Corpus (JSON lines)");
    opt(index_sparse, "k1", o.k1, "BM25 k1");
    opt(index_sparse, "b", o.b, "BM25 b");

    auto* search_sparse = app.add_subcommand("search-sparse", "BM25 retrieval for tab-separated queries");
    opt(search_sparse, "index", o.index, "Sparse index file");
    opt(search_sparse, "queries", o.queries, "Queries, one 'qid<TAB>text' per line");

    auto* search_dense = app.add_subcommand("search-dense", "Dense retrieval with pooled token matrices");
    opt(search_dense, "store", o.store, "Passage embedding manifest");
    query_source(search_dense);

    auto* search_hybrid = app.add_subcommand("search-hybrid", "Sparse/dense score combination");
    opt(search_hybrid, "sparse-run", o.sparse_run, "Existing sparse run");
    opt(search_hybrid, "dense-run", o.dense_run, "Existing dense run");
    opt(search_hybrid, "index", o.index, "Sparse index file");
    opt(search_hybrid, "store", o.store, "Passage embedding manifest");
    opt(search_hybrid, "alpha", o.alpha, "Weight on the sparse score");
    opt(search_hybrid, "gamma", o.gamma, "Norm threshold for the sparse rewrite");
    query_source(search_hybrid);

    auto* rewrite = app.add_subcommand("rewrite", "Emit norm-thresholded query rewrites");
    opt(rewrite, "gamma", o.gamma, "Norm threshold for context tokens");
    query_source(rewrite);

    auto* fuse = app.add_subcommand("fuse-rrf", "Reciprocal rank fusion of runs");
    opt(fuse, "run", o.runs, "Run file (repeat)");
    opt(fuse, "rrf-k", o.rrf_k, "Rank offset");

    auto* weak = app.add_subcommand("build-weak-labels", "Teacher-reranked BM25 pseudo labels");
    opt(weak, "corpus", o.corpus, "Corpus (JSON lines)");
    opt(weak, "sessions", o.sessions, "Sessions with manual rewrites");
    opt(weak, "index", o.index, "Sparse index (built from the corpus when omitted)");
    opt(weak, "store", o.store, "Passage embeddings for the cosine teacher");
    opt(weak, "ref-seed", o.ref_seed, "Reference embedder seed for the cosine teacher");
    opt(weak, "teacher-table", o.teacher_table, "Precomputed teacher scores 'query<TAB>pid<TAB>score'");
    opt(weak, "k1", o.k1, "BM25 k1");
    opt(weak, "b", o.b, "BM25 b");

    auto* train_toy = app.add_subcommand("train-toy", "Fine-tune the toy query encoder");
    opt(train_toy, "labels", o.labels, "Weak labels (JSON lines)");
    opt(train_toy, "sessions", o.sessions, "Sessions (JSON lines)");
    opt(train_toy, "store", o.store, "Frozen passage embeddings");
    opt(train_toy, "heldout", o.heldout, "Query ids excluded from training");
    opt(train_toy, "ref-seed", o.ref_seed, "Reference embedder seed for initialization");
    opt(train_toy, "tau", o.tau, "Softmax temperature");
    opt(train_toy, "lr", o.lr, "Learning rate");
    opt(train_toy, "batch-size", o.batch_size, "Queries per batch");
    opt(train_toy, "steps", o.steps, "Gradient steps (0 saves the initial encoder)");
    flag(train_toy, "hard-negatives", o.hard_negatives, "Draw negatives from the BM25 pool");
    flag(train_toy, "soft-labels", o.soft_labels, "Distil teacher scores instead of one-hot targets");
    opt(train_toy, "trace", o.trace, "Write per-step losses here");

    auto* eval = app.add_subcommand("eval", "Score a run against qrels");
    opt(eval, "run", o.runs, "Run file");
    opt(eval, "qrels", o.qrels, "Qrels file");
    opt(eval, "metric", o.metric, "ndcg, ndcg@3 or recall");
    opt(eval, "cutoff", o.cutoff, "Rank cutoff (default 1000)");
    flag(eval, "per-query", o.per_query, "Also print per-query values");

    auto* compare = app.add_subcommand("compare", "Win/tie counts and paired t-test against a baseline");
    opt(compare, "run", o.runs, "System run");
    opt(compare, "baseline", o.baseline, "Baseline run");
    opt(compare, "qrels", o.qrels, "Qrels file");
    opt(compare, "metric", o.metric, "ndcg, ndcg@3 or recall");
    opt(compare, "cutoff", o.cutoff, "Rank cutoff (default 1000)");

    auto* converse = app.add_subcommand("converse", "Interactive multi-turn retrieval (reads stdin)");
    opt(converse, "store", o.store, "Passage embedding manifest");
    opt(converse, "index", o.index, "Sparse index; enables hybrid results");
    opt(converse, "encoder", o.encoder, "Toy encoder manifest");
    opt(converse, "matrices", o.matrices, "Precomputed token matrices keyed by turn");
    opt(converse, "session-id", o.session_id, "Session id used for turn query ids");

    auto* synthetic = app.add_subcommand("make-synthetic", "Write the planted synthetic dataset");
    opt(synthetic, "dim", o.dim, "Embedding dimension");
    opt(synthetic, "topics", o.topics, "Sessions (one topic each)");
    opt(synthetic, "passages-per-topic", o.passages_per_topic, "Passages per topic");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (synthetic->parsed()) return cmd_make_synthetic(o, h, out);
        const auto config = resolve_config(o, h);
        if (index_sparse->parsed()) return cmd_index_sparse(o, config, out);
        if (search_sparse->parsed()) return cmd_search_sparse(o, config, out);
        if (search_dense->parsed()) return cmd_search_dense(o, config, out);
        if (search_hybrid->parsed()) return cmd_search_hybrid(o, config, h, out);
        if (rewrite->parsed()) return cmd_rewrite(o, config, h, out);
        if (fuse->parsed()) return cmd_fuse_rrf(o, config, out);
        if (weak->parsed()) return cmd_build_weak_labels(o, config, out);
        if (train_toy->parsed()) return cmd_train_toy(o, config, out);
        if (eval->parsed()) return cmd_eval(o, config, h, out);
        if (compare->parsed()) return cmd_compare(o, config, h, out);
        if (converse->parsed()) return cmd_converse(o, config, in, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand\n";
    return 1;
}

}  // namespace cqe
