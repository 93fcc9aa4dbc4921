#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cqe/cqe_core.hpp"
#include "cqe/fusion.hpp"
#include "cqe/sparse_index.hpp"
#include "cqe/trainer.hpp"

namespace cqe {

/// Artifact locations. Empty paths are unset.
struct EnginePaths {
    std::filesystem::path corpus;
    std::filesystem::path sparse_index;
    std::filesystem::path dense_store;
    std::filesystem::path query_matrices;
    std::filesystem::path qrels;
};

/// Everything a pipeline run depends on besides its input files.
///
/// JSON layout (every key optional, unknown keys rejected):
///
///   {"paths": {"corpus", "sparse_index", "dense_store", "query_matrices", "qrels"},
///    "bm25": {"k1", "b"},
///    "rewrite": {"gamma", "hybrid_gamma", "exclude_special_tokens"},
///    "fusion": {"alpha", "rrf_k"},
///    "train": {"tau", "learning_rate", "batch_size", "steps", "seed",
///              "use_hard_negatives", "use_soft_labels"},
///    "k": 1000}
///
/// Relative paths resolve against the directory holding the config file.
struct EngineConfig {
    EnginePaths paths;
    BM25Config bm25;
    RewriteConfig rewrite = RewriteConfig::sparse_default();
    /// Threshold used when the rewrite feeds hybrid retrieval.
    double hybrid_gamma = RewriteConfig::hybrid_default().gamma;
    FusionConfig fusion;
    TrainConfig train;
    /// Retrieval depth for search commands.
    std::size_t k = 1000;

    RewriteConfig hybrid_rewrite() const { return {hybrid_gamma, rewrite.exclude_special_tokens}; }

    /// Checks every numeric field; throws InvalidArgument.
    void validate() const;
    /// Throws IoError for any set path that does not exist.
    void validate_paths() const;

    static EngineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    nlohmann::ordered_json to_json() const;
};

/// Reads and validates a config file. Throws IoError on unreadable or
/// malformed JSON, InvalidArgument on bad values or unknown keys.
EngineConfig load_engine_config(const std::filesystem::path& path);

/// The explicit path when given, else the CQE_CONFIG environment variable,
/// else nothing.
std::optional<std::filesystem::path> resolve_config_path(const std::string& explicit_path);

}  // namespace cqe
