#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cqe/corpus.hpp"
#include "cqe/ranked_list.hpp"

namespace cqe {

/// Okapi BM25 parameters.
struct BM25Config {
    double k1 = 0.82;
    double b = 0.68;

    /// Throws InvalidArgument unless k1 >= 0 and 0 <= b <= 1.
    void validate() const;
};

struct Posting {
    std::uint32_t ordinal;
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

/// Non-positional inverted index with BM25 scoring.
///
/// Scoring uses idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), which is never
/// negative, and multiplies each term's contribution by its multiplicity in
/// the query. Immutable after construction; concurrent reads are safe.
class InvertedIndex {
public:
    InvertedIndex() = default;

    /// Throws InvalidArgument for an empty corpus or invalid config.
    static InvertedIndex build(const Corpus& corpus, BM25Config config = {});

    std::size_t doc_count() const noexcept { return ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const BM25Config& config() const noexcept { return config_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const std::map<std::string, std::vector<Posting>, std::less<>>& postings() const noexcept { return postings_; }

    /// Postings for a term; empty when unindexed.
    const std::vector<Posting>& postings(std::string_view term) const;
    std::size_t document_frequency(std::string_view term) const { return postings(term).size(); }
    double idf(std::string_view term) const;

    /// Throws InvalidArgument for an unknown passage id.
    std::uint32_t ordinal_of(std::string_view passage_id) const;

    /// Query tokens are a bag: duplicates add weight.
    double score(const std::vector<std::string>& query_tokens, std::string_view passage_id) const;

    /// Up to k positive-scoring passages in canonical order.
    RankedList search(const std::vector<std::string>& query_tokens, std::size_t k,
                      std::string tag = "bm25") const;

    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);

    bool operator==(const InvertedIndex& other) const;

private:
    double term_weight(std::size_t df, std::uint32_t tf, std::uint32_t doc_len) const;
    void finalize();

    BM25Config config_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;
    std::map<std::string, std::uint32_t, std::less<>> ordinals_;
    double avg_doc_length_ = 0.0;
};

/// Query bag collapsed to distinct terms in first-occurrence order.
std::vector<std::pair<std::string, std::uint32_t>> term_multiplicities(const std::vector<std::string>& tokens);

}  // namespace cqe
