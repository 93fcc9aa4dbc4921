#include "cqe/corpus.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "cqe/common.hpp"

namespace cqe {

namespace {

bool is_ascii_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

bool is_valid_id(std::string_view id) noexcept {
    if (id.empty()) return false;
    for (unsigned char c : id) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return false;
    }
    return true;
}

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
    by_id_.reserve(passages_.size());
    for (std::size_t i = 0; i < passages_.size(); ++i) {
        const auto& id = passages_[i].id;
        if (id.empty()) throw InvalidArgument("passage " + std::to_string(i) + " has an empty id");
        if (!is_valid_id(id)) throw InvalidArgument("passage id '" + id + "' contains whitespace");
        if (!by_id_.emplace(id, i).second) throw InvalidArgument("duplicate passage id '" + id + "'");
    }
}

std::optional<std::size_t> Corpus::ordinal_of(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

const Passage& Corpus::at(std::string_view id) const {
    auto ord = ordinal_of(id);
    if (!ord) throw InvalidArgument("unknown passage id '" + std::string(id) + "'");
    return passages_[*ord];
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file " + path.string());

    std::vector<Passage> passages;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto where = path.string() + ":" + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError("malformed JSON at " + where + ": " + e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") ||
            !obj["id"].is_string() || !obj["text"].is_string()) {
            throw IoError("expected string fields \"id\" and \"text\" at " + where);
        }
        Passage p{obj["id"].get<std::string>(), obj["text"].get<std::string>()};
        if (p.id.empty()) throw IoError("empty passage id at " + where);
        if (!is_valid_id(p.id)) throw IoError("passage id '" + p.id + "' contains whitespace at " + where);
        if (auto [it, inserted] = seen.emplace(p.id, line_no); !inserted) {
            throw IoError("duplicate passage id '" + p.id + "' at " + where + " (first seen on line " +
                          std::to_string(it->second) + ")");
        }
        passages.push_back(std::move(p));
    }
    return Corpus(std::move(passages));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file " + path.string());
    for (const auto& p : corpus.passages()) {
        nlohmann::ordered_json obj;
        obj["id"] = p.id;
        obj["text"] = p.text;
        out << obj.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_ascii_alnum(c)) {
            current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

}  // namespace cqe
