#include "cqe/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "cqe/common.hpp"

namespace cqe {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw InvalidArgument("config: '" + std::string(section) + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw InvalidArgument("config: unknown key '" + key + "' in '" + std::string(section) + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& target, std::string_view section) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw InvalidArgument("expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw InvalidArgument("expected an integer");
            if (!it->is_number_unsigned() && it->template get<long long>() < 0) {
                throw InvalidArgument("expected a non-negative integer");
            }
        } else {
            if (!it->is_number()) throw InvalidArgument("expected a number");
        }
        target = it->template get<T>();
    } catch (const std::exception& e) {
        throw InvalidArgument("config: " + std::string(section) + "." + key + ": " + e.what());
    }
}

void read_path(const json& obj, const char* key, std::filesystem::path& target, const std::filesystem::path& base) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    if (!it->is_string()) throw InvalidArgument(std::string("config: paths.") + key + ": expected a string");
    std::filesystem::path p = it->get<std::string>();
    target = (p.is_relative() && !base.empty()) ? base / p : p;
}

}  // namespace

void EngineConfig::validate() const {
    bm25.validate();
    fusion.validate();
    train.validate();
    if (!(rewrite.gamma >= 0.0) || std::isnan(rewrite.gamma)) throw InvalidArgument("gamma must be >= 0");
    if (!(hybrid_gamma >= 0.0) || std::isnan(hybrid_gamma)) throw InvalidArgument("hybrid_gamma must be >= 0");
    if (k == 0) throw InvalidArgument("k must be >= 1");
}

void EngineConfig::validate_paths() const {
    const std::pair<const char*, const std::filesystem::path*> all[] = {
        {"corpus", &paths.corpus},
        {"sparse_index", &paths.sparse_index},
        {"dense_store", &paths.dense_store},
        {"query_matrices", &paths.query_matrices},
        {"qrels", &paths.qrels},
    };
    for (const auto& [name, path] : all) {
        if (!path->empty() && !std::filesystem::exists(*path)) {
            throw IoError(std::string("config: ") + name + " path does not exist: " + path->string());
        }
    }
}

EngineConfig EngineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    EngineConfig c;
    check_keys(j, "config", {"paths", "bm25", "rewrite", "fusion", "train", "k"});
    if (auto it = j.find("paths"); it != j.end()) {
        check_keys(*it, "paths", {"corpus", "sparse_index", "dense_store", "query_matrices", "qrels"});
        read_path(*it, "corpus", c.paths.corpus, base_dir);
        read_path(*it, "sparse_index", c.paths.sparse_index, base_dir);
        read_path(*it, "dense_store", c.paths.dense_store, base_dir);
        read_path(*it, "query_matrices", c.paths.query_matrices, base_dir);
        read_path(*it, "qrels", c.paths.qrels, base_dir);
    }
    if (auto it = j.find("bm25"); it != j.end()) {
        check_keys(*it, "bm25", {"k1", "b"});
        read(*it, "k1", c.bm25.k1, "bm25");
        read(*it, "b", c.bm25.b, "bm25");
    }
    if (auto it = j.find("rewrite"); it != j.end()) {
        check_keys(*it, "rewrite", {"gamma", "hybrid_gamma", "exclude_special_tokens"});
        read(*it, "gamma", c.rewrite.gamma, "rewrite");
        read(*it, "hybrid_gamma", c.hybrid_gamma, "rewrite");
        read(*it, "exclude_special_tokens", c.rewrite.exclude_special_tokens, "rewrite");
    }
    if (auto it = j.find("fusion"); it != j.end()) {
        check_keys(*it, "fusion", {"alpha", "rrf_k"});
        read(*it, "alpha", c.fusion.alpha, "fusion");
        read(*it, "rrf_k", c.fusion.rrf_k, "fusion");
    }
    if (auto it = j.find("train"); it != j.end()) {
        check_keys(*it, "train",
                   {"tau", "learning_rate", "batch_size", "steps", "seed", "use_hard_negatives", "use_soft_labels"});
        read(*it, "tau", c.train.tau, "train");
        read(*it, "learning_rate", c.train.learning_rate, "train");
        read(*it, "batch_size", c.train.batch_size, "train");
        read(*it, "steps", c.train.steps, "train");
        read(*it, "seed", c.train.seed, "train");
        read(*it, "use_hard_negatives", c.train.use_hard_negatives, "train");
        read(*it, "use_soft_labels", c.train.use_soft_labels, "train");
    }
    read(j, "k", c.k, "config");
    c.validate();
    return c;
}

nlohmann::ordered_json EngineConfig::to_json() const {
    nlohmann::ordered_json j;
    auto& p = j["paths"];
    p = nlohmann::ordered_json::object();
    if (!paths.corpus.empty()) p["corpus"] = paths.corpus.string();
    if (!paths.sparse_index.empty()) p["sparse_index"] = paths.sparse_index.string();
    if (!paths.dense_store.empty()) p["dense_store"] = paths.dense_store.string();
    if (!paths.query_matrices.empty()) p["query_matrices"] = paths.query_matrices.string();
    if (!paths.qrels.empty()) p["qrels"] = paths.qrels.string();
    j["bm25"] = {{"k1", bm25.k1}, {"b", bm25.b}};
    j["rewrite"] = {{"gamma", rewrite.gamma},
                    {"hybrid_gamma", hybrid_gamma},
                    {"exclude_special_tokens", rewrite.exclude_special_tokens}};
    j["fusion"] = {{"alpha", fusion.alpha}, {"rrf_k", fusion.rrf_k}};
    j["train"] = {{"tau", train.tau},
                  {"learning_rate", train.learning_rate},
                  {"batch_size", train.batch_size},
                  {"steps", train.steps},
                  {"seed", train.seed},
                  {"use_hard_negatives", train.use_hard_negatives},
                  {"use_soft_labels", train.use_soft_labels}};
    j["k"] = k;
    return j;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("malformed config " + path.string() + ": " + e.what());
    }
    return EngineConfig::from_json(j, path.parent_path());
}

std::optional<std::filesystem::path> resolve_config_path(const std::string& explicit_path) {
    if (!explicit_path.empty()) return std::filesystem::path(explicit_path);
    if (const char* env = std::getenv("CQE_CONFIG"); env != nullptr && *env != '\0') {
        return std::filesystem::path(env);
    }
    return std::nullopt;
}

}  // namespace cqe
