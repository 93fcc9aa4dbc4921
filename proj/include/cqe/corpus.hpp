#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cqe {

struct Passage {
    std::string id;
    std::string text;

    bool operator==(const Passage&) const = default;
};

/// Immutable, ordered passage collection with O(1) lookup by id.
class Corpus {
public:
    Corpus() = default;

    /// Throws InvalidArgument on empty, whitespace-bearing or duplicate ids.
    explicit Corpus(std::vector<Passage> passages);

    std::size_t count() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }

    const std::vector<Passage>& passages() const noexcept { return passages_; }
    const Passage& operator[](std::size_t i) const { return passages_[i]; }

    std::optional<std::size_t> ordinal_of(std::string_view id) const;
    /// Throws InvalidArgument when the id is unknown.
    const Passage& at(std::string_view id) const;

    bool operator==(const Corpus& other) const { return passages_ == other.passages_; }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Reads a JSON-lines corpus ({"id": ..., "text": ...} per line).
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// ASCII-lowercases and splits on every maximal run of non-alphanumeric bytes.
/// Non-ASCII bytes count as separators.
std::vector<std::string> tokenize(std::string_view text);

/// Space-joins tokens.
std::string join_tokens(const std::vector<std::string>& tokens);

/// True when the id is usable in a TREC run line.
bool is_valid_id(std::string_view id) noexcept;

}  // namespace cqe
