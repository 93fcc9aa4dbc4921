#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqe/dense_index.hpp"

namespace cqe {

/// Contextualized query embeddings for one turn: context rows first
/// (context_len of them), then the current query's rows.
class TokenEmbeddingMatrix {
public:
    TokenEmbeddingMatrix() = default;

    /// `vectors` is row-major with tokens.size() rows of `dim` values.
    /// Throws InvalidArgument on shape mismatch, non-finite values or a
    /// context_len larger than the row count.
    TokenEmbeddingMatrix(std::vector<std::string> tokens, std::size_t context_len, std::size_t dim,
                         std::vector<double> vectors);

    std::size_t rows() const noexcept { return tokens_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t context_len() const noexcept { return context_len_; }
    std::size_t query_len() const noexcept { return rows() - context_len_; }
    bool empty() const noexcept { return tokens_.empty(); }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<double>& data() const noexcept { return vectors_; }
    std::span<const double> row(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }
    bool is_context(std::size_t i) const noexcept { return i < context_len_; }

    /// Returns a copy with every row multiplied by `factor`.
    TokenEmbeddingMatrix scaled(double factor) const;

    bool operator==(const TokenEmbeddingMatrix&) const = default;

private:
    std::vector<std::string> tokens_;
    std::size_t context_len_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> vectors_;
};

/// Threshold-based decontextualization settings.
struct RewriteConfig {
    double gamma = 10.5;
    bool exclude_special_tokens = true;

    static RewriteConfig sparse_default() { return {10.5, true}; }
    /// Threshold tuned for use inside hybrid retrieval.
    static RewriteConfig hybrid_default() { return {12.0, true}; }
};

struct Turn {
    std::string raw_utterance;
    std::optional<std::string> manual_rewrite;

    bool operator==(const Turn&) const = default;
};

struct Session {
    std::string session_id;
    std::vector<Turn> turns;

    /// Query id of turn `index` (0-based), e.g. "31_2" for the second turn.
    std::string qid(std::size_t index) const { return session_id + "_" + std::to_string(index + 1); }

    bool operator==(const Session&) const = default;
};

/// JSON-lines: {"session_id": str, "turns": [{"raw": str, "rewrite": str?}]}
std::vector<Session> load_sessions(const std::filesystem::path& path);
void save_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path);

struct TokenContribution {
    std::string token;
    double l2_norm = 0.0;
    /// Inner product of the row with the passage; zero rows contribute 0.
    double contribution = 0.0;
};

struct TokenNorm {
    std::string token;
    bool is_context = false;
    double l2_norm = 0.0;
    /// Norm divided by the mean context-row norm; absent when there is no
    /// context or the context rows are all zero.
    std::optional<double> normalized_norm;
};

double l2_norm(std::span<const double> v);

/// Mean over all rows, context included. Throws InvalidArgument when empty.
DenseVector pool(const TokenEmbeddingMatrix& matrix);

/// Inner product of the pooled query with a passage vector.
double score(const TokenEmbeddingMatrix& matrix, std::span<const double> passage);
double score(const TokenEmbeddingMatrix& matrix, std::span<const float> passage);

/// Per-row norm and contribution. The mean of the contributions equals
/// score(matrix, passage) up to rounding.
std::vector<TokenContribution> decompose(const TokenEmbeddingMatrix& matrix, std::span<const double> passage);

std::vector<TokenNorm> token_norm_report(const TokenEmbeddingMatrix& matrix);

/// Sequence-start/separator style markers such as "[CLS]", "[SEP]", "<s>".
bool is_special_token(const std::string& token);

/// Query tokens in order, followed by every context token whose norm is at
/// least gamma (in original order, duplicates kept).
std::vector<std::string> decontextualize(const TokenEmbeddingMatrix& matrix, const RewriteConfig& config);

/// A token matrix tagged with the turn it belongs to.
struct QueryMatrix {
    std::string qid;
    TokenEmbeddingMatrix matrix;
};

/// JSON-lines: {"qid", "tokens": [..], "context_len", "vectors": [[..], ..]}
std::vector<QueryMatrix> load_query_matrices(const std::filesystem::path& path);
void save_query_matrices(const std::vector<QueryMatrix>& matrices, const std::filesystem::path& path);

}  // namespace cqe
