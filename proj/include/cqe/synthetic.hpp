#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cqe/corpus.hpp"
#include "cqe/cqe_core.hpp"
#include "cqe/dense_index.hpp"
#include "cqe/eval_metrics.hpp"

namespace cqe {

struct SyntheticConfig {
    std::size_t topics = 10;              // one session per topic
    std::size_t passages_per_topic = 10;  // corpus size = topics * passages_per_topic
    std::size_t dim = 32;
    std::uint64_t seed = 7;
};

/// Planted conversational retrieval task. Each session is about one topic
/// word that only its first turn names; later turns ask about an aspect
/// ("how did it start") and rely on the context to identify the topic.
/// Passages mention one topic plus two aspects; passage vectors come from the
/// reference embedder with (dim, seed).
struct SyntheticDataset {
    SyntheticConfig config;
    Corpus corpus;
    std::vector<Session> sessions;
    PassageEmbeddingStore passages;
    /// Per turn: topic passages naming the asked aspect get grade 3, other
    /// topic passages grade 2 (first turns: every topic passage grade 2).
    Qrels qrels;
    /// Last turn of every session; never used for training.
    std::set<std::string> heldout_qids;
    /// Context word that co-occurs with the positives of each session
    /// (the topic), and one that never appears in any passage.
    std::vector<std::string> topic_terms;
    std::string distractor_term;
};

SyntheticDataset make_synthetic_dataset(const SyntheticConfig& config = {});

/// Writes corpus.jsonl, sessions.jsonl, passages.json (+ .f32/.ids),
/// qrels.txt and heldout.txt into `dir`.
void save_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace cqe
