#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cqe/corpus.hpp"
#include "cqe/cqe_core.hpp"
#include "cqe/dense_index.hpp"
#include "cqe/sparse_index.hpp"

namespace cqe {

// ---------------------------------------------------------------------------
// Randomness

/// Uniform integer in [0, n) from raw engine output. Unlike
/// std::uniform_int_distribution the mapping is fixed, so sequences match
/// across standard library implementations.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);
/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(std::mt19937_64& rng);
/// Standard normal via Box-Muller.
double standard_normal(std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Reference embedder and teachers

/// Fixed bag-of-words embedder: every token gets a pseudo-random unit
/// vector derived from (seed, token); a text embeds as the mean of its token
/// vectors. Used to embed passages and as the desk-scale teacher.
class ReferenceEmbedder {
public:
    ReferenceEmbedder(std::size_t dim, std::uint64_t seed);

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }

    DenseVector token_vector(const std::string& token) const;
    /// Mean of the token vectors; zero vector for text without tokens.
    DenseVector embed_tokens(const std::vector<std::string>& tokens) const;
    DenseVector embed(std::string_view text) const { return embed_tokens(tokenize(text)); }

    /// Embeds every passage of the corpus into a store.
    PassageEmbeddingStore embed_corpus(const Corpus& corpus) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Reranker role in weak-label construction: scores a (query text, passage)
/// pair. Implementations must be deterministic.
class TeacherScorer {
public:
    virtual ~TeacherScorer() = default;
    virtual double score(const std::string& query_text, const Passage& passage) const = 0;
};

/// Cosine similarity between the reference embedding of the query text and
/// the passage's stored vector.
class CosineTeacher final : public TeacherScorer {
public:
    CosineTeacher(ReferenceEmbedder embedder, const PassageEmbeddingStore& store)
        : embedder_(std::move(embedder)), store_(&store) {}
    double score(const std::string& query_text, const Passage& passage) const override;

private:
    ReferenceEmbedder embedder_;
    const PassageEmbeddingStore* store_;
};

/// Precomputed scores from a tab-separated file: `query text \t passage id \t score`.
class TableTeacher final : public TeacherScorer {
public:
    explicit TableTeacher(std::map<std::pair<std::string, std::string>, double> table) : table_(std::move(table)) {}
    static TableTeacher load(const std::filesystem::path& path);
    /// Throws InvalidArgument for pairs missing from the table.
    double score(const std::string& query_text, const Passage& passage) const override;

private:
    std::map<std::pair<std::string, std::string>, double> table_;
};

/// Adapts any callable.
class FunctionTeacher final : public TeacherScorer {
public:
    using Fn = std::function<double(const std::string&, const Passage&)>;
    explicit FunctionTeacher(Fn fn) : fn_(std::move(fn)) {}
    double score(const std::string& query_text, const Passage& passage) const override { return fn_(query_text, passage); }

private:
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Weak labels

inline constexpr std::size_t kRetrievalDepth = 1000;
inline constexpr std::size_t kPoolDepth = 200;
inline constexpr std::size_t kPositivesPerTurn = 3;

struct ScoredId {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

/// Pseudo-relevance labels for one conversational turn.
struct WeakLabel {
    std::string qid;
    std::string rewrite;
    std::vector<std::string> positives;  // teacher top-3
    std::vector<std::string> bm25_pool;  // BM25 top-200
    std::vector<ScoredId> teacher_pool;  // teacher top-200 of the BM25 candidates

    bool operator==(const WeakLabel&) const = default;
};

using WeakLabelSet = std::vector<WeakLabel>;

/// BM25-retrieves each turn's manual rewrite, rescoring the candidates with
/// the teacher; the teacher's top three become positives. Turns with fewer
/// than three candidates are skipped with a warning. Throws InvalidArgument
/// for a turn without a manual rewrite.
WeakLabelSet build_weak_labels(const Corpus& corpus, const std::vector<Session>& sessions,
                               const InvertedIndex& index, const TeacherScorer& teacher);

void save_weak_labels(const WeakLabelSet& labels, const std::filesystem::path& path);
WeakLabelSet load_weak_labels(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Conversational inputs

/// Tokenized (q_<i ; q_i) for one turn: all earlier raw utterances, then the
/// current one.
struct TurnInput {
    std::string qid;
    std::vector<std::string> context;
    std::vector<std::string> query;
};

TurnInput turn_input(const Session& session, std::size_t turn_index);
std::vector<TurnInput> turn_inputs(const std::vector<Session>& sessions);

// ---------------------------------------------------------------------------
// Triplet sampling

struct TrainingInstance {
    std::size_t label_index = 0;
    std::string positive_id;
    std::string negative_id;
};

/// Draws (positive, negative) pairs per labelled turn. Negatives are drawn
/// without replacement; once a turn's eligible pool is used up it is
/// refilled. The first refill of each turn logs a warning.
class TripletSampler {
public:
    TripletSampler(const WeakLabelSet& labels, std::uint64_t seed);

    /// Throws InvalidArgument when the turn has no eligible negative.
    TrainingInstance sample(std::size_t label_index, bool use_hard_negatives);

    std::mt19937_64& rng() noexcept { return rng_; }

private:
    struct PoolState {
        std::vector<std::string> remaining;
        bool used = false;
        bool warned = false;
    };
    std::vector<std::string> eligible(std::size_t label_index, bool hard) const;

    const WeakLabelSet* labels_;
    std::mt19937_64 rng_;
    std::map<std::pair<std::size_t, bool>, PoolState> pools_;
};

// ---------------------------------------------------------------------------
// Losses

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<DenseVector> query_gradients;
};

/// In-batch softmax cross-entropy averaged over queries:
///   -(1/Q) sum_i log softmax_p(<q_i, p> / tau)[positive_i]
/// Every query scores every batch passage. Passage vectors are constants.
ContrastiveResult contrastive_loss(std::span<const DenseVector> queries, std::span<const DenseVector> passages,
                                   std::span<const std::size_t> positives, double tau);

struct DistillResult {
    double loss = 0.0;
    std::vector<double> student_gradient;
};

/// KL(softmax(teacher / tau) || softmax(student / tau)) and its gradient with
/// respect to the student scores.
DistillResult distill_loss(std::span<const double> student, std::span<const double> teacher, double tau);

/// Numerically stable softmax of scores / tau.
std::vector<double> softmax(std::span<const double> scores, double tau);

// ---------------------------------------------------------------------------
// Toy query encoder

/// Token embedding table followed by a shared linear map:
/// row(token) = table[token] * projection. Unknown tokens share row 0.
class ToyQueryEncoder {
public:
    static constexpr const char* kUnknownToken = "[UNK]";

    struct Gradients {
        std::vector<double> table;
        std::vector<double> projection;
    };

    ToyQueryEncoder() = default;
    /// `vocabulary` must not contain kUnknownToken; table is (V+1) x dim.
    ToyQueryEncoder(std::vector<std::string> vocabulary, std::size_t dim, std::vector<double> table,
                    std::vector<double> projection);

    /// Table rows from the reference embedder, identity projection.
    static ToyQueryEncoder from_reference(std::vector<std::string> vocabulary, const ReferenceEmbedder& embedder);
    /// Gaussian table rows with standard deviation `scale`, identity projection.
    static ToyQueryEncoder random(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed,
                                  double scale);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t vocab_size() const noexcept { return vocabulary_.size(); }
    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
    std::size_t token_index(const std::string& token) const;

    std::vector<double>& table() noexcept { return table_; }
    const std::vector<double>& table() const noexcept { return table_; }
    std::vector<double>& projection() noexcept { return projection_; }
    const std::vector<double>& projection() const noexcept { return projection_; }

    TokenEmbeddingMatrix encode(const std::vector<std::string>& context, const std::vector<std::string>& query) const;
    TokenEmbeddingMatrix encode(const TurnInput& input) const { return encode(input.context, input.query); }
    DenseVector encode_pooled(const TurnInput& input) const { return pool(encode(input)); }

    Gradients zero_gradients() const;
    /// Adds d(loss)/d(params) given d(loss)/d(pooled query) for one input.
    void accumulate_gradient(const TurnInput& input, std::span<const double> pooled_gradient, Gradients& grads) const;
    void apply(const Gradients& grads, double learning_rate);

    /// Manifest JSON plus `<stem>.table.f64` / `<stem>.proj.f64` blobs.
    void save(const std::filesystem::path& manifest_path) const;
    static ToyQueryEncoder load(const std::filesystem::path& manifest_path);

    bool operator==(const ToyQueryEncoder& other) const {
        return dim_ == other.dim_ && vocabulary_ == other.vocabulary_ && table_ == other.table_ &&
               projection_ == other.projection_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> vocabulary_;  // index 0 is kUnknownToken
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> table_;
    std::vector<double> projection_;
};

/// Sorted distinct tokens across all turns of the sessions.
std::vector<std::string> session_vocabulary(const std::vector<Session>& sessions);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double tau = 1.0;
    double learning_rate = 0.5;
    std::size_t batch_size = 8;
    std::size_t steps = 300;
    std::uint64_t seed = 13;
    bool use_hard_negatives = false;
    bool use_soft_labels = false;

    void validate() const;
};

/// One optimisation batch: queries, the shared passage pool, and for each
/// query the index of its positive (and optionally teacher scores over the
/// pool for distillation).
struct TrainingBatch {
    std::vector<TurnInput> queries;
    std::vector<DenseVector> passages;
    std::vector<std::size_t> positives;
    std::vector<std::vector<double>> teacher_scores;  // empty unless distilling
};

/// Batch loss and, when `grads` is non-null, its gradient with respect to the
/// encoder parameters. Uses distillation when teacher scores are present.
double batch_objective(const ToyQueryEncoder& encoder, const TrainingBatch& batch, double tau,
                       ToyQueryEncoder::Gradients* grads);

struct TrainResult {
    ToyQueryEncoder encoder;
    std::vector<double> loss_trace;
};

/// Plain gradient descent on the encoder with passages frozen. Deterministic
/// for a given config and seed. With soft labels, teacher scores come from
/// `teacher` when given, else from the label's teacher pool (passages outside
/// it get the pool minimum). Throws Error on a non-finite loss.
TrainResult train(ToyQueryEncoder encoder, const WeakLabelSet& labels, const std::vector<Session>& sessions,
                  const PassageEmbeddingStore& passages, const TrainConfig& config, const Corpus* corpus = nullptr,
                  const TeacherScorer* teacher = nullptr);

}  // namespace cqe
