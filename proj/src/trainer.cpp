#include "cqe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "cqe/common.hpp"

namespace cqe {

// ---------------------------------------------------------------------------
// Randomness

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    if (n == 0) throw InvalidArgument("uniform_index over an empty range");
    const std::uint64_t range = n;
    // Rejection sampling on the largest multiple of n.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
}

double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reference embedder and teachers

ReferenceEmbedder::ReferenceEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw InvalidArgument("reference embedder dim must be > 0");
}

DenseVector ReferenceEmbedder::token_vector(const std::string& token) const {
    std::mt19937_64 rng(fnv1a(token) ^ (seed_ * 0x9E3779B97F4A7C15ull));
    DenseVector v(dim_);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = standard_normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

DenseVector ReferenceEmbedder::embed_tokens(const std::vector<std::string>& tokens) const {
    DenseVector out(dim_, 0.0);
    if (tokens.empty()) return out;
    for (const auto& t : tokens) {
        const auto v = token_vector(t);
        for (std::size_t i = 0; i < dim_; ++i) out[i] += v[i];
    }
    for (auto& x : out) x /= static_cast<double>(tokens.size());
    return out;
}

PassageEmbeddingStore ReferenceEmbedder::embed_corpus(const Corpus& corpus) const {
    std::vector<std::string> ids;
    std::vector<float> values;
    ids.reserve(corpus.count());
    values.reserve(corpus.count() * dim_);
    for (const auto& p : corpus.passages()) {
        ids.push_back(p.id);
        for (double x : embed(p.text)) values.push_back(static_cast<float>(x));
    }
    return PassageEmbeddingStore(dim_, std::move(ids), std::move(values));
}

double CosineTeacher::score(const std::string& query_text, const Passage& passage) const {
    const auto q = embedder_.embed(query_text);
    const auto p = store_->vector(passage.id);
    double qq = 0.0, pp = 0.0, qp = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double pv = p[i];
        qq += q[i] * q[i];
        pp += pv * pv;
        qp += q[i] * pv;
    }
    if (qq == 0.0 || pp == 0.0) return 0.0;
    return qp / (std::sqrt(qq) * std::sqrt(pp));
}

TableTeacher TableTeacher::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open teacher score table " + path.string());
    std::map<std::pair<std::string, std::string>, double> table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw IoError("expected 'query<TAB>passage<TAB>score' at " + path.string() + ":" + std::to_string(line_no));
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            const auto field = line.substr(t2 + 1);
            value = std::stod(field, &used);
            if (used != field.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw IoError("bad teacher score at " + path.string() + ":" + std::to_string(line_no));
        }
        table[{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1)}] = value;
    }
    return TableTeacher(std::move(table));
}

double TableTeacher::score(const std::string& query_text, const Passage& passage) const {
    auto it = table_.find({query_text, passage.id});
    if (it == table_.end()) {
        throw InvalidArgument("no teacher score for passage '" + passage.id + "' under query '" + query_text + "'");
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Weak labels

WeakLabelSet build_weak_labels(const Corpus& corpus, const std::vector<Session>& sessions,
                               const InvertedIndex& index, const TeacherScorer& teacher) {
    WeakLabelSet labels;
    const std::size_t depth = std::min(kRetrievalDepth, corpus.count());
    for (const auto& session : sessions) {
        for (std::size_t t = 0; t < session.turns.size(); ++t) {
            const auto qid = session.qid(t);
            const auto& turn = session.turns[t];
            if (!turn.manual_rewrite) throw InvalidArgument("turn " + qid + " has no manual rewrite");

            const auto bm25 = index.search(tokenize(*turn.manual_rewrite), depth, "bm25");
            if (bm25.size() < kPositivesPerTurn) {
                logging::warn("turn " + qid + ": only " + std::to_string(bm25.size()) +
                          " BM25 candidates, skipped");
                continue;
            }
            std::vector<std::pair<std::string, double>> rescored;
            rescored.reserve(bm25.size());
            for (const auto& e : bm25.entries) {
                rescored.emplace_back(e.docid, teacher.score(*turn.manual_rewrite, corpus.at(e.docid)));
            }
            const auto reranked = make_ranked_list(std::move(rescored), 0, "teacher");

            WeakLabel label;
            label.qid = qid;
            label.rewrite = *turn.manual_rewrite;
            for (std::size_t i = 0; i < kPositivesPerTurn; ++i) label.positives.push_back(reranked.entries[i].docid);
            for (std::size_t i = 0; i < std::min(kPoolDepth, bm25.size()); ++i) {
                label.bm25_pool.push_back(bm25.entries[i].docid);
            }
            for (std::size_t i = 0; i < std::min(kPoolDepth, reranked.size()); ++i) {
                label.teacher_pool.push_back({reranked.entries[i].docid, reranked.entries[i].score});
            }
            labels.push_back(std::move(label));
        }
    }
    return labels;
}

void save_weak_labels(const WeakLabelSet& labels, const std::filesystem::path& path) {
    std::string out;
    for (const auto& l : labels) {
        nlohmann::ordered_json obj;
        obj["qid"] = l.qid;
        obj["rewrite"] = l.rewrite;
        obj["positives"] = l.positives;
        obj["bm25_pool"] = l.bm25_pool;
        auto pool = nlohmann::ordered_json::array();
        for (const auto& s : l.teacher_pool) {
            nlohmann::ordered_json e;
            e["id"] = s.id;
            e["score"] = s.score;
            pool.push_back(std::move(e));
        }
        obj["teacher_pool"] = std::move(pool);
        out += obj.dump();
        out.push_back('\n');
    }
    binary::write_file(path.string(), out);
}

WeakLabelSet load_weak_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weak label file " + path.string());
    WeakLabelSet labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        try {
            const auto obj = nlohmann::json::parse(line);
            WeakLabel l;
            l.qid = obj.at("qid").get<std::string>();
            l.rewrite = obj.at("rewrite").get<std::string>();
            l.positives = obj.at("positives").get<std::vector<std::string>>();
            l.bm25_pool = obj.at("bm25_pool").get<std::vector<std::string>>();
            for (const auto& e : obj.at("teacher_pool")) {
                l.teacher_pool.push_back({e.at("id").get<std::string>(), e.at("score").get<double>()});
            }
            labels.push_back(std::move(l));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed weak label at " + where + ": " + e.what());
        }
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Conversational inputs

TurnInput turn_input(const Session& session, std::size_t turn_index) {
    if (turn_index >= session.turns.size()) {
        throw InvalidArgument("session " + session.session_id + " has no turn " + std::to_string(turn_index + 1));
    }
    TurnInput input;
    input.qid = session.qid(turn_index);
    for (std::size_t t = 0; t < turn_index; ++t) {
        for (auto& tok : tokenize(session.turns[t].raw_utterance)) input.context.push_back(std::move(tok));
    }
    input.query = tokenize(session.turns[turn_index].raw_utterance);
    return input;
}

std::vector<TurnInput> turn_inputs(const std::vector<Session>& sessions) {
    std::vector<TurnInput> out;
    for (const auto& s : sessions) {
        for (std::size_t t = 0; t < s.turns.size(); ++t) out.push_back(turn_input(s, t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Triplet sampling

TripletSampler::TripletSampler(const WeakLabelSet& labels, std::uint64_t seed) : labels_(&labels), rng_(seed) {}

std::vector<std::string> TripletSampler::eligible(std::size_t label_index, bool hard) const {
    const auto& label = (*labels_)[label_index];
    const std::set<std::string> positives(label.positives.begin(), label.positives.end());
    std::vector<std::string> out;
    if (hard) {
        for (const auto& s : label.teacher_pool) {
            if (!positives.contains(s.id)) out.push_back(s.id);
        }
    } else {
        for (const auto& id : label.bm25_pool) {
            if (!positives.contains(id)) out.push_back(id);
        }
    }
    return out;
}

TrainingInstance TripletSampler::sample(std::size_t label_index, bool use_hard_negatives) {
    if (label_index >= labels_->size()) throw InvalidArgument("label index out of range");
    const auto& label = (*labels_)[label_index];
    if (label.positives.empty()) throw InvalidArgument("turn " + label.qid + " has no positives");

    auto& state = pools_[{label_index, use_hard_negatives}];
    if (state.remaining.empty()) {
        state.remaining = eligible(label_index, use_hard_negatives);
        if (state.remaining.empty()) {
            throw InvalidArgument("turn " + label.qid + " has no eligible negatives");
        }
        if (state.used && !state.warned) {
            logging::warn("turn " + label.qid + ": negative pool exhausted, resetting (reported once per turn)");
            state.warned = true;
        }
        state.used = true;
    }

    TrainingInstance inst;
    inst.label_index = label_index;
    inst.positive_id = label.positives[uniform_index(rng_, label.positives.size())];
    const auto pick = uniform_index(rng_, state.remaining.size());
    inst.negative_id = state.remaining[pick];
    state.remaining.erase(state.remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    return inst;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

std::vector<double> log_softmax(std::span<const double> scores, double tau) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores) mx = std::max(mx, s / tau);
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s / tau - mx);
    const double log_z = mx + std::log(sum);
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] / tau - log_z;
    return out;
}

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("temperature tau must be > 0");
}

}  // namespace

std::vector<double> softmax(std::span<const double> scores, double tau) {
    check_tau(tau);
    auto out = log_softmax(scores, tau);
    for (auto& x : out) x = std::exp(x);
    return out;
}

ContrastiveResult contrastive_loss(std::span<const DenseVector> queries, std::span<const DenseVector> passages,
                                   std::span<const std::size_t> positives, double tau) {
    check_tau(tau);
    if (queries.empty()) throw InvalidArgument("contrastive loss needs at least one query");
    if (positives.size() != queries.size()) {
        throw InvalidArgument("every query needs exactly one marked positive");
    }
    const std::size_t dim = queries.front().size();
    for (const auto& p : passages) {
        if (p.size() != dim) throw InvalidArgument("passage dim does not match query dim");
    }
    const double q_count = static_cast<double>(queries.size());

    ContrastiveResult result;
    result.query_gradients.assign(queries.size(), DenseVector(dim, 0.0));
    std::vector<double> scores(passages.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (queries[i].size() != dim) throw InvalidArgument("query dims differ within the batch");
        if (positives[i] >= passages.size()) {
            throw InvalidArgument("query " + std::to_string(i) + " has no positive in the batch");
        }
        for (std::size_t p = 0; p < passages.size(); ++p) scores[p] = dot(queries[i], passages[p]);
        const auto logp = log_softmax(scores, tau);
        // Exact zero for a certain positive keeps loss >= 0 with no -0.0.
        result.loss += logp[positives[i]] == 0.0 ? 0.0 : -logp[positives[i]] / q_count;

        auto& g = result.query_gradients[i];
        for (std::size_t p = 0; p < passages.size(); ++p) {
            const double w = (std::exp(logp[p]) - (p == positives[i] ? 1.0 : 0.0)) / (q_count * tau);
            for (std::size_t c = 0; c < dim; ++c) g[c] += w * passages[p][c];
        }
    }
    return result;
}

DistillResult distill_loss(std::span<const double> student, std::span<const double> teacher, double tau) {
    check_tau(tau);
    if (student.size() != teacher.size()) {
        throw InvalidArgument("distillation needs equal-length score lists (" + std::to_string(student.size()) + " vs " +
                              std::to_string(teacher.size()) + ")");
    }
    if (student.size() < 2) throw InvalidArgument("distillation needs at least 2 scores");
    const auto log_s = log_softmax(student, tau);
    const auto log_t = log_softmax(teacher, tau);

    DistillResult r;
    r.student_gradient.resize(student.size());
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double pt = std::exp(log_t[i]);
        if (pt > 0.0) r.loss += pt * (log_t[i] - log_s[i]);
        r.student_gradient[i] = (std::exp(log_s[i]) - pt) / tau;
    }
    // Rounding can leave a tiny negative value for identical distributions.
    r.loss = std::max(r.loss, 0.0);
    return r;
}

// ---------------------------------------------------------------------------
// Toy query encoder

ToyQueryEncoder::ToyQueryEncoder(std::vector<std::string> vocabulary, std::size_t dim, std::vector<double> table,
                                 std::vector<double> projection)
    : dim_(dim), table_(std::move(table)), projection_(std::move(projection)) {
    if (dim_ == 0) throw InvalidArgument("encoder dim must be > 0");
    vocabulary_.reserve(vocabulary.size() + 1);
    vocabulary_.push_back(kUnknownToken);
    for (auto& t : vocabulary) {
        if (t == kUnknownToken) throw InvalidArgument("vocabulary may not contain the unknown token");
        vocabulary_.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        if (!index_.emplace(vocabulary_[i], i).second) {
            throw InvalidArgument("duplicate vocabulary token '" + vocabulary_[i] + "'");
        }
    }
    if (table_.size() != vocabulary_.size() * dim_) throw InvalidArgument("embedding table has the wrong size");
    if (projection_.size() != dim_ * dim_) throw InvalidArgument("projection has the wrong size");
}

namespace {

std::vector<double> identity(std::size_t dim) {
    std::vector<double> m(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] = 1.0;
    return m;
}

}  // namespace

ToyQueryEncoder ToyQueryEncoder::from_reference(std::vector<std::string> vocabulary,
                                                const ReferenceEmbedder& embedder) {
    const std::size_t dim = embedder.dim();
    std::vector<double> table;
    table.reserve((vocabulary.size() + 1) * dim);
    for (double x : embedder.token_vector(kUnknownToken)) table.push_back(x);
    for (const auto& t : vocabulary) {
        for (double x : embedder.token_vector(t)) table.push_back(x);
    }
    return ToyQueryEncoder(std::move(vocabulary), dim, std::move(table), identity(dim));
}

ToyQueryEncoder ToyQueryEncoder::random(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed,
                                        double scale) {
    std::mt19937_64 rng(seed);
    std::vector<double> table((vocabulary.size() + 1) * dim);
    for (auto& x : table) x = standard_normal(rng) * scale;
    return ToyQueryEncoder(std::move(vocabulary), dim, std::move(table), identity(dim));
}

std::size_t ToyQueryEncoder::token_index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? 0 : it->second;
}

TokenEmbeddingMatrix ToyQueryEncoder::encode(const std::vector<std::string>& context,
                                             const std::vector<std::string>& query) const {
    if (query.empty()) throw InvalidArgument("cannot encode a turn without query tokens");
    std::vector<std::string> tokens;
    tokens.reserve(context.size() + query.size());
    tokens.insert(tokens.end(), context.begin(), context.end());
    tokens.insert(tokens.end(), query.begin(), query.end());

    std::vector<double> values(tokens.size() * dim_, 0.0);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        const double* e = table_.data() + token_index(tokens[r]) * dim_;
        double* out = values.data() + r * dim_;
        for (std::size_t a = 0; a < dim_; ++a) {
            const double* w = projection_.data() + a * dim_;
            for (std::size_t c = 0; c < dim_; ++c) out[c] += e[a] * w[c];
        }
    }
    return TokenEmbeddingMatrix(std::move(tokens), context.size(), dim_, std::move(values));
}

ToyQueryEncoder::Gradients ToyQueryEncoder::zero_gradients() const {
    return {std::vector<double>(table_.size(), 0.0), std::vector<double>(projection_.size(), 0.0)};
}

void ToyQueryEncoder::accumulate_gradient(const TurnInput& input, std::span<const double> pooled_gradient,
                                          Gradients& grads) const {
    if (pooled_gradient.size() != dim_) throw InvalidArgument("gradient dim does not match encoder dim");
    const std::size_t n = input.context.size() + input.query.size();
    if (n == 0) throw InvalidArgument("cannot backpropagate through an empty turn");
    // Pooling hands every row the same gradient g / n.
    std::vector<double> row_grad(dim_);
    for (std::size_t c = 0; c < dim_; ++c) row_grad[c] = pooled_gradient[c] / static_cast<double>(n);
    // d(row)/d(table row) = projection^T applied to the row gradient.
    std::vector<double> table_grad(dim_, 0.0);
    for (std::size_t a = 0; a < dim_; ++a) {
        const double* w = projection_.data() + a * dim_;
        double s = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) s += w[c] * row_grad[c];
        table_grad[a] = s;
    }
    std::vector<double> embedding_sum(dim_, 0.0);
    auto visit = [&](const std::string& token) {
        const auto idx = token_index(token);
        const double* e = table_.data() + idx * dim_;
        double* g = grads.table.data() + idx * dim_;
        for (std::size_t a = 0; a < dim_; ++a) {
            g[a] += table_grad[a];
            embedding_sum[a] += e[a];
        }
    };
    for (const auto& t : input.context) visit(t);
    for (const auto& t : input.query) visit(t);
    for (std::size_t a = 0; a < dim_; ++a) {
        double* g = grads.projection.data() + a * dim_;
        for (std::size_t c = 0; c < dim_; ++c) g[c] += embedding_sum[a] * row_grad[c];
    }
}

void ToyQueryEncoder::apply(const Gradients& grads, double learning_rate) {
    if (learning_rate == 0.0) return;
    for (std::size_t i = 0; i < table_.size(); ++i) table_[i] -= learning_rate * grads.table[i];
    for (std::size_t i = 0; i < projection_.size(); ++i) projection_[i] -= learning_rate * grads.projection[i];
}

void ToyQueryEncoder::save(const std::filesystem::path& manifest_path) const {
    const auto stem = manifest_path.stem().string();
    const std::string table_name = stem + ".table.f64";
    const std::string proj_name = stem + ".proj.f64";
    nlohmann::ordered_json manifest;
    manifest["format"] = "cqe-toy-encoder";
    manifest["version"] = 1;
    manifest["dim"] = dim_;
    manifest["dtype"] = "f64le";
    manifest["table"] = table_name;
    manifest["projection"] = proj_name;
    manifest["vocabulary"] = std::vector<std::string>(vocabulary_.begin() + 1, vocabulary_.end());
    binary::write_file(manifest_path.string(), manifest.dump(2) + "\n");
    write_f64_blob(manifest_path.parent_path() / table_name, table_);
    write_f64_blob(manifest_path.parent_path() / proj_name, projection_);
}

ToyQueryEncoder ToyQueryEncoder::load(const std::filesystem::path& manifest_path) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(binary::read_file(manifest_path.string()));
        if (manifest.at("format").get<std::string>() != "cqe-toy-encoder") {
            throw IoError(manifest_path.string() + ": not a toy encoder checkpoint");
        }
        if (manifest.value("dtype", std::string("f64le")) != "f64le") {
            throw IoError(manifest_path.string() + ": unsupported dtype");
        }
        const auto dim = manifest.at("dim").get<std::size_t>();
        auto vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
        const auto dir = manifest_path.parent_path();
        auto table = read_f64_blob(dir / manifest.at("table").get<std::string>(), (vocabulary.size() + 1) * dim);
        auto proj = read_f64_blob(dir / manifest.at("projection").get<std::string>(), dim * dim);
        return ToyQueryEncoder(std::move(vocabulary), dim, std::move(table), std::move(proj));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path.string() + ": malformed encoder manifest: " + e.what());
    } catch (const InvalidArgument& e) {
        throw IoError(manifest_path.string() + ": " + e.what());
    }
}

std::vector<std::string> session_vocabulary(const std::vector<Session>& sessions) {
    std::set<std::string> vocab;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            for (auto& tok : tokenize(t.raw_utterance)) vocab.insert(std::move(tok));
        }
    }
    vocab.erase(ToyQueryEncoder::kUnknownToken);
    return {vocab.begin(), vocab.end()};
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be > 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be >= 0");
    if (batch_size == 0) throw InvalidArgument("batch size must be >= 1");
}

double batch_objective(const ToyQueryEncoder& encoder, const TrainingBatch& batch, double tau,
                       ToyQueryEncoder::Gradients* grads) {
    std::vector<DenseVector> queries;
    queries.reserve(batch.queries.size());
    for (const auto& q : batch.queries) queries.push_back(encoder.encode_pooled(q));

    double loss = 0.0;
    std::vector<DenseVector> dq;
    if (batch.teacher_scores.empty()) {
        auto r = contrastive_loss(queries, batch.passages, batch.positives, tau);
        loss = r.loss;
        dq = std::move(r.query_gradients);
    } else {
        if (batch.teacher_scores.size() != queries.size()) {
            throw InvalidArgument("distillation needs teacher scores for every query");
        }
        const double q_count = static_cast<double>(queries.size());
        dq.assign(queries.size(), DenseVector(encoder.dim(), 0.0));
        std::vector<double> student(batch.passages.size());
        for (std::size_t i = 0; i < queries.size(); ++i) {
            for (std::size_t p = 0; p < batch.passages.size(); ++p) student[p] = dot(queries[i], batch.passages[p]);
            const auto r = distill_loss(student, batch.teacher_scores[i], tau);
            loss += r.loss / q_count;
            for (std::size_t p = 0; p < batch.passages.size(); ++p) {
                const double w = r.student_gradient[p] / q_count;
                for (std::size_t c = 0; c < encoder.dim(); ++c) dq[i][c] += w * batch.passages[p][c];
            }
        }
    }
    if (grads) {
        for (std::size_t i = 0; i < batch.queries.size(); ++i) encoder.accumulate_gradient(batch.queries[i], dq[i], *grads);
    }
    return loss;
}

namespace {

DenseVector to_double(std::span<const float> v) { return DenseVector(v.begin(), v.end()); }

}  // namespace

TrainResult train(ToyQueryEncoder encoder, const WeakLabelSet& labels, const std::vector<Session>& sessions,
                  const PassageEmbeddingStore& passages, const TrainConfig& config, const Corpus* corpus,
                  const TeacherScorer* teacher) {
    config.validate();
    if (labels.empty()) throw InvalidArgument("no weak labels to train on");
    if (passages.dim() != encoder.dim()) {
        throw InvalidArgument("passage dim " + std::to_string(passages.dim()) + " does not match encoder dim " +
                              std::to_string(encoder.dim()));
    }
    if (teacher && !corpus) throw InvalidArgument("a teacher scorer needs the corpus");

    std::map<std::string, TurnInput> inputs;
    for (auto& in : turn_inputs(sessions)) inputs.emplace(in.qid, std::move(in));
    std::vector<const TurnInput*> label_inputs;
    for (const auto& l : labels) {
        auto it = inputs.find(l.qid);
        if (it == inputs.end()) throw InvalidArgument("no session turn for labelled query " + l.qid);
        label_inputs.push_back(&it->second);
        auto check = [&](const std::string& id) {
            if (!passages.row_of(id)) throw InvalidArgument("passage store lacks labelled passage '" + id + "'");
        };
        for (const auto& id : l.positives) check(id);
        for (const auto& id : l.bm25_pool) check(id);
        for (const auto& s : l.teacher_pool) check(s.id);
    }

    TripletSampler sampler(labels, config.seed);
    auto& rng = sampler.rng();
    std::vector<std::size_t> order(labels.size());
    std::size_t cursor = order.size();

    TrainResult result{std::move(encoder), {}};
    result.loss_trace.reserve(config.steps);
    for (std::size_t step = 0; step < config.steps; ++step) {
        TrainingBatch batch;
        std::vector<std::string> pool_ids;
        std::map<std::string, std::size_t> pool_index;
        auto add_passage = [&](const std::string& id) {
            auto [it, inserted] = pool_index.emplace(id, pool_ids.size());
            if (inserted) {
                pool_ids.push_back(id);
                batch.passages.push_back(to_double(passages.vector(id)));
            }
            return it->second;
        };
        std::vector<std::size_t> batch_labels;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                // New epoch: reshuffle the labelled turns.
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
                cursor = 0;
            }
            const auto li = order[cursor++];
            const auto inst = sampler.sample(li, config.use_hard_negatives);
            batch.queries.push_back(*label_inputs[li]);
            batch.positives.push_back(add_passage(inst.positive_id));
            add_passage(inst.negative_id);
            batch_labels.push_back(li);
        }
        if (config.use_soft_labels) {
            for (const auto li : batch_labels) {
                const auto& label = labels[li];
                std::vector<double> scores;
                scores.reserve(pool_ids.size());
                if (teacher) {
                    for (const auto& id : pool_ids) scores.push_back(teacher->score(label.rewrite, corpus->at(id)));
                } else {
                    std::map<std::string, double> known;
                    double floor = std::numeric_limits<double>::infinity();
                    for (const auto& s : label.teacher_pool) {
                        known.emplace(s.id, s.score);
                        floor = std::min(floor, s.score);
                    }
                    for (const auto& id : pool_ids) {
                        auto it = known.find(id);
                        scores.push_back(it == known.end() ? floor : it->second);
                    }
                }
                batch.teacher_scores.push_back(std::move(scores));
            }
            if (pool_ids.size() < 2) {
                throw InvalidArgument("distillation batch at step " + std::to_string(step) +
                                      " has fewer than 2 passages");
            }
        }

        auto grads = result.encoder.zero_gradients();
        const double loss = batch_objective(result.encoder, batch, config.tau, &grads);
        if (!std::isfinite(loss)) throw Error("non-finite training loss at step " + std::to_string(step));
        result.loss_trace.push_back(loss);
        result.encoder.apply(grads, config.learning_rate);
    }
    return result;
}

}  // namespace cqe
