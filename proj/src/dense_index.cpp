#include "cqe/dense_index.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "cqe/common.hpp"
#include "cqe/corpus.hpp"

namespace cqe {

double dot(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * static_cast<double>(b[i]);
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

PassageEmbeddingStore::PassageEmbeddingStore(std::size_t dim, std::vector<std::string> ids,
                                             std::vector<float> vectors)
    : dim_(dim), ids_(std::move(ids)), vectors_(std::move(vectors)) {
    if (dim_ == 0) throw InvalidArgument("embedding dim must be > 0");
    if (vectors_.size() != ids_.size() * dim_) {
        throw InvalidArgument("embedding store has " + std::to_string(ids_.size()) + " ids but " +
                              std::to_string(vectors_.size()) + " values for dim " + std::to_string(dim_));
    }
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        if (!std::isfinite(vectors_[i])) {
            throw InvalidArgument("non-finite embedding value in row " + std::to_string(i / dim_));
        }
    }
    rows_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!is_valid_id(ids_[i])) throw InvalidArgument("invalid embedding id '" + ids_[i] + "'");
        if (!rows_.emplace(ids_[i], i).second) throw InvalidArgument("duplicate embedding id '" + ids_[i] + "'");
    }
}

std::optional<std::size_t> PassageEmbeddingStore::row_of(std::string_view id) const {
    auto it = rows_.find(std::string(id));
    if (it == rows_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> PassageEmbeddingStore::vector(std::string_view id) const {
    auto r = row_of(id);
    if (!r) throw InvalidArgument("no embedding for passage '" + std::string(id) + "'");
    return row(*r);
}

RankedList PassageEmbeddingStore::search(std::span<const double> query, std::size_t k, std::string tag) const {
    if (query.size() != dim_) {
        throw InvalidArgument("query dim " + std::to_string(query.size()) + " does not match store dim " +
                              std::to_string(dim_));
    }
    if (k == 0) throw InvalidArgument("search depth k must be >= 1");
    std::vector<std::pair<std::string, double>> candidates;
    candidates.reserve(count());
    for (std::size_t i = 0; i < count(); ++i) candidates.emplace_back(ids_[i], dot(query, row(i)));
    return make_ranked_list(std::move(candidates), k, std::move(tag));
}

namespace {

std::filesystem::path sibling(const std::filesystem::path& manifest, const std::string& name) {
    std::filesystem::path p(name);
    return p.is_absolute() ? p : manifest.parent_path() / p;
}

template <typename T>
std::vector<T> read_blob(const std::filesystem::path& path, std::size_t expected_count) {
    const auto data = binary::read_file(path.string());
    if (data.size() != expected_count * sizeof(T)) {
        throw IoError(path.string() + ": expected " + std::to_string(expected_count) + " values, found " +
                      std::to_string(data.size()) + " bytes");
    }
    binary::Reader r(data, path.string());
    std::vector<T> out;
    out.reserve(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        if constexpr (sizeof(T) == 4) {
            out.push_back(r.f32());
        } else {
            out.push_back(r.f64());
        }
    }
    return out;
}

template <typename T>
void write_blob(const std::filesystem::path& path, std::span<const T> values) {
    std::string buf;
    buf.reserve(values.size() * sizeof(T));
    for (auto v : values) {
        if constexpr (sizeof(T) == 4) {
            binary::put_f32(buf, v);
        } else {
            binary::put_f64(buf, v);
        }
    }
    binary::write_file(path.string(), buf);
}

}  // namespace

std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected_count) {
    return read_blob<float>(path, expected_count);
}
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values) {
    write_blob<float>(path, values);
}
std::vector<double> read_f64_blob(const std::filesystem::path& path, std::size_t expected_count) {
    return read_blob<double>(path, expected_count);
}
void write_f64_blob(const std::filesystem::path& path, std::span<const double> values) {
    write_blob<double>(path, values);
}

void PassageEmbeddingStore::save(const std::filesystem::path& manifest_path) const {
    const auto stem = manifest_path.stem().string();
    const std::string vectors_name = stem + ".f32";
    const std::string ids_name = stem + ".ids";

    nlohmann::ordered_json manifest;
    manifest["dim"] = dim_;
    manifest["count"] = count();
    manifest["dtype"] = "f32le";
    manifest["vectors"] = vectors_name;
    manifest["ids"] = ids_name;
    binary::write_file(manifest_path.string(), manifest.dump(2) + "\n");

    write_f32_blob(sibling(manifest_path, vectors_name), vectors_);

    std::string ids;
    for (const auto& id : ids_) {
        ids += id;
        ids.push_back('\n');
    }
    binary::write_file(sibling(manifest_path, ids_name).string(), ids);
}

PassageEmbeddingStore PassageEmbeddingStore::load(const std::filesystem::path& manifest_path) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(binary::read_file(manifest_path.string()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path.string() + ": malformed manifest: " + e.what());
    }
    std::size_t dim = 0, count = 0;
    std::string dtype;
    try {
        dim = manifest.at("dim").get<std::size_t>();
        count = manifest.at("count").get<std::size_t>();
        dtype = manifest.value("dtype", std::string("f32le"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path.string() + ": manifest needs integer \"dim\" and \"count\": " + e.what());
    }
    if (dtype != "f32le") throw IoError(manifest_path.string() + ": unsupported dtype '" + dtype + "'");
    if (dim == 0) throw IoError(manifest_path.string() + ": dim must be > 0");

    const auto stem = manifest_path.stem().string();
    const auto vectors_path = sibling(manifest_path, manifest.value("vectors", stem + ".f32"));
    const auto ids_path = sibling(manifest_path, manifest.value("ids", stem + ".ids"));

    std::vector<std::string> ids;
    {
        std::ifstream in(ids_path);
        if (!in) throw IoError("cannot open ids file " + ids_path.string());
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            ids.push_back(line);
        }
    }
    if (ids.size() != count) {
        throw IoError(ids_path.string() + ": manifest declares " + std::to_string(count) + " rows but ids file has " +
                      std::to_string(ids.size()));
    }
    auto vectors = read_f32_blob(vectors_path, count * dim);
    try {
        return PassageEmbeddingStore(dim, std::move(ids), std::move(vectors));
    } catch (const InvalidArgument& e) {
        throw IoError(manifest_path.string() + ": " + e.what());
    }
}

}  // namespace cqe
