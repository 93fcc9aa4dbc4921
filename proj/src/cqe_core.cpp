#include "cqe/cqe_core.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "cqe/common.hpp"

namespace cqe {

TokenEmbeddingMatrix::TokenEmbeddingMatrix(std::vector<std::string> tokens, std::size_t context_len, std::size_t dim,
                                           std::vector<double> vectors)
    : tokens_(std::move(tokens)), context_len_(context_len), dim_(dim), vectors_(std::move(vectors)) {
    if (!tokens_.empty() && dim_ == 0) throw InvalidArgument("token matrix dim must be > 0");
    if (vectors_.size() != tokens_.size() * dim_) {
        throw InvalidArgument("token matrix has " + std::to_string(tokens_.size()) + " tokens but " +
                              std::to_string(vectors_.size()) + " values for dim " + std::to_string(dim_));
    }
    if (!tokens_.empty() && context_len_ >= tokens_.size()) {
        throw InvalidArgument("token matrix needs at least one query row (context_len " +
                              std::to_string(context_len_) + ", rows " + std::to_string(tokens_.size()) + ")");
    }
    if (tokens_.empty() && context_len_ != 0) throw InvalidArgument("empty token matrix with non-zero context_len");
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        if (!std::isfinite(vectors_[i])) {
            throw InvalidArgument("non-finite value in token row " + std::to_string(i / dim_));
        }
    }
}

TokenEmbeddingMatrix TokenEmbeddingMatrix::scaled(double factor) const {
    auto v = vectors_;
    for (auto& x : v) x *= factor;
    return TokenEmbeddingMatrix(tokens_, context_len_, dim_, std::move(v));
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

DenseVector pool(const TokenEmbeddingMatrix& matrix) {
    if (matrix.empty()) throw InvalidArgument("cannot pool an empty token matrix");
    // Running mean: exact when every row is identical.
    DenseVector mean(matrix.dim(), 0.0);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto row = matrix.row(r);
        const double n = static_cast<double>(r + 1);
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += (row[c] - mean[c]) / n;
    }
    return mean;
}

namespace {

void check_dim(const TokenEmbeddingMatrix& matrix, std::size_t passage_dim) {
    if (matrix.dim() != passage_dim) {
        throw InvalidArgument("passage dim " + std::to_string(passage_dim) + " does not match query dim " +
                              std::to_string(matrix.dim()));
    }
}

}  // namespace

double score(const TokenEmbeddingMatrix& matrix, std::span<const double> passage) {
    check_dim(matrix, passage.size());
    const auto q = pool(matrix);
    return dot(q, passage);
}

double score(const TokenEmbeddingMatrix& matrix, std::span<const float> passage) {
    check_dim(matrix, passage.size());
    const auto q = pool(matrix);
    return dot(q, passage);
}

std::vector<TokenContribution> decompose(const TokenEmbeddingMatrix& matrix, std::span<const double> passage) {
    check_dim(matrix, passage.size());
    std::vector<TokenContribution> out;
    out.reserve(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto row = matrix.row(r);
        const double norm = l2_norm(row);
        double contribution = 0.0;
        if (norm > 0.0) {
            // norm * <unit row, passage>
            double cos_part = 0.0;
            for (std::size_t c = 0; c < row.size(); ++c) cos_part += (row[c] / norm) * passage[c];
            contribution = norm * cos_part;
        }
        out.push_back({matrix.tokens()[r], norm, contribution});
    }
    return out;
}

std::vector<TokenNorm> token_norm_report(const TokenEmbeddingMatrix& matrix) {
    std::vector<TokenNorm> out;
    out.reserve(matrix.rows());
    double context_sum = 0.0;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const double norm = l2_norm(matrix.row(r));
        if (matrix.is_context(r)) context_sum += norm;
        out.push_back({matrix.tokens()[r], matrix.is_context(r), norm, std::nullopt});
    }
    if (matrix.context_len() > 0) {
        const double mean = context_sum / static_cast<double>(matrix.context_len());
        if (mean > 0.0) {
            for (auto& t : out) t.normalized_norm = t.l2_norm / mean;
        }
    }
    return out;
}

bool is_special_token(const std::string& token) {
    if (token.size() >= 3 && token.front() == '[' && token.back() == ']') return true;
    return token == "<s>" || token == "</s>" || token == "<pad>" || token == "<unk>" || token == "<cls>" ||
           token == "<sep>";
}

std::vector<std::string> decontextualize(const TokenEmbeddingMatrix& matrix, const RewriteConfig& config) {
    std::vector<std::string> out;
    for (std::size_t r = matrix.context_len(); r < matrix.rows(); ++r) out.push_back(matrix.tokens()[r]);
    for (std::size_t r = 0; r < matrix.context_len(); ++r) {
        const auto& token = matrix.tokens()[r];
        if (config.exclude_special_tokens && is_special_token(token)) continue;
        if (l2_norm(matrix.row(r)) >= config.gamma) out.push_back(token);
    }
    return out;
}

std::vector<Session> load_sessions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sessions file " + path.string());
    std::vector<Session> sessions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        try {
            const auto obj = nlohmann::json::parse(line);
            Session s;
            s.session_id = obj.at("session_id").get<std::string>();
            for (const auto& t : obj.at("turns")) {
                Turn turn;
                turn.raw_utterance = t.at("raw").get<std::string>();
                if (t.contains("rewrite") && !t["rewrite"].is_null()) {
                    turn.manual_rewrite = t["rewrite"].get<std::string>();
                }
                s.turns.push_back(std::move(turn));
            }
            if (s.session_id.empty()) throw IoError("empty session_id at " + where);
            if (s.turns.empty()) throw IoError("session '" + s.session_id + "' has no turns at " + where);
            sessions.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed session at " + where + ": " + e.what());
        }
    }
    return sessions;
}

void save_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : sessions) {
        nlohmann::ordered_json obj;
        obj["session_id"] = s.session_id;
        obj["turns"] = nlohmann::ordered_json::array();
        for (const auto& t : s.turns) {
            nlohmann::ordered_json turn;
            turn["raw"] = t.raw_utterance;
            if (t.manual_rewrite) turn["rewrite"] = *t.manual_rewrite;
            obj["turns"].push_back(std::move(turn));
        }
        out += obj.dump();
        out.push_back('\n');
    }
    binary::write_file(path.string(), out);
}

std::vector<QueryMatrix> load_query_matrices(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open query matrix file " + path.string());
    std::vector<QueryMatrix> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto where = path.string() + ":" + std::to_string(line_no);
        try {
            const auto obj = nlohmann::json::parse(line);
            QueryMatrix qm;
            qm.qid = obj.at("qid").get<std::string>();
            auto tokens = obj.at("tokens").get<std::vector<std::string>>();
            const auto context_len = obj.at("context_len").get<std::size_t>();
            const auto& rows = obj.at("vectors");
            if (rows.size() != tokens.size()) {
                throw IoError("token/vector count mismatch at " + where);
            }
            std::size_t dim = rows.empty() ? 0 : rows[0].size();
            std::vector<double> values;
            values.reserve(rows.size() * dim);
            for (const auto& row : rows) {
                if (row.size() != dim) throw IoError("ragged vector rows at " + where);
                for (const auto& x : row) values.push_back(x.get<double>());
            }
            qm.matrix = TokenEmbeddingMatrix(std::move(tokens), context_len, dim, std::move(values));
            out.push_back(std::move(qm));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed query matrix at " + where + ": " + e.what());
        } catch (const InvalidArgument& e) {
            throw IoError("invalid query matrix at " + where + ": " + e.what());
        }
    }
    return out;
}

void save_query_matrices(const std::vector<QueryMatrix>& matrices, const std::filesystem::path& path) {
    std::string out;
    for (const auto& qm : matrices) {
        nlohmann::ordered_json obj;
        obj["qid"] = qm.qid;
        obj["tokens"] = qm.matrix.tokens();
        obj["context_len"] = qm.matrix.context_len();
        auto rows = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < qm.matrix.rows(); ++r) {
            const auto row = qm.matrix.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        obj["vectors"] = std::move(rows);
        out += obj.dump();
        out.push_back('\n');
    }
    binary::write_file(path.string(), out);
}

}  // namespace cqe
