#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqe/ranked_list.hpp"

namespace cqe {

/// Query-side vector. Held in double; passage rows are stored as float.
using DenseVector = std::vector<double>;

/// Precomputed passage embeddings, one float32 row per passage id.
///
/// On disk: a JSON manifest {"dim", "count", "dtype": "f32le", "vectors",
/// "ids"} next to a raw row-major float32 little-endian vectors file and a
/// newline-delimited ids file.
class PassageEmbeddingStore {
public:
    PassageEmbeddingStore() = default;

    /// Throws InvalidArgument on dim == 0, size mismatch, duplicate ids or
    /// non-finite values.
    PassageEmbeddingStore(std::size_t dim, std::vector<std::string> ids, std::vector<float> vectors);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t count() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<float>& data() const noexcept { return vectors_; }

    std::span<const float> row(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }
    std::optional<std::size_t> row_of(std::string_view id) const;
    /// Throws InvalidArgument for an unknown id.
    std::span<const float> vector(std::string_view id) const;

    /// Exact inner-product top-k; ties broken by ascending id. Accumulates in double.
    RankedList search(std::span<const double> query, std::size_t k, std::string tag = "dense") const;

    /// Writes the manifest plus `<stem>.f32` and `<stem>.ids` beside it.
    void save(const std::filesystem::path& manifest_path) const;
    static PassageEmbeddingStore load(const std::filesystem::path& manifest_path);

    bool operator==(const PassageEmbeddingStore& other) const {
        return dim_ == other.dim_ && ids_ == other.ids_ && vectors_ == other.vectors_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> vectors_;
    std::unordered_map<std::string, std::size_t> rows_;
};

double dot(std::span<const double> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const double> b);

/// Little-endian float blobs, shared with the encoder checkpoint format.
std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected_count);
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values);
std::vector<double> read_f64_blob(const std::filesystem::path& path, std::size_t expected_count);
void write_f64_blob(const std::filesystem::path& path, std::span<const double> values);

}  // namespace cqe
