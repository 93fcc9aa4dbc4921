#include "cqe/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "cqe/common.hpp"

namespace cqe {

void FusionConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("fusion alpha must be a finite value >= 0");
    if (!(rrf_k > 0.0) || !std::isfinite(rrf_k)) throw InvalidArgument("rrf_k must be a finite value > 0");
}

namespace {

std::unordered_map<std::string, double> score_map(const RankedList& list, const char* which) {
    std::unordered_map<std::string, double> out;
    out.reserve(list.size());
    for (const auto& e : list.entries) {
        if (!out.emplace(e.docid, e.score).second) {
            throw InvalidArgument(std::string("duplicate docid '") + e.docid + "' in " + which + " list");
        }
    }
    return out;
}

double min_score(const RankedList& list) {
    double m = list.entries.front().score;
    for (const auto& e : list.entries) m = std::min(m, e.score);
    return m;
}

}  // namespace

RankedList hybrid_combine(const RankedList& sparse, const RankedList& dense, const FusionConfig& config,
                          std::string tag) {
    config.validate();
    if (sparse.empty()) throw InvalidArgument("hybrid_combine: sparse list is empty");
    if (dense.empty()) throw InvalidArgument("hybrid_combine: dense list is empty");

    const auto sparse_scores = score_map(sparse, "sparse");
    const auto dense_scores = score_map(dense, "dense");
    const double sparse_floor = min_score(sparse);
    const double dense_floor = min_score(dense);

    std::vector<std::pair<std::string, double>> fused;
    fused.reserve(sparse.size() + dense.size());
    for (const auto& e : dense.entries) {
        auto it = sparse_scores.find(e.docid);
        const double sp = it == sparse_scores.end() ? sparse_floor : it->second;
        fused.emplace_back(e.docid, config.alpha * sp + e.score);
    }
    for (const auto& e : sparse.entries) {
        if (dense_scores.contains(e.docid)) continue;
        fused.emplace_back(e.docid, config.alpha * e.score + dense_floor);
    }
    return make_ranked_list(std::move(fused), 0, std::move(tag));
}

RankedList rrf(std::span<const RankedList> lists, const FusionConfig& config, std::string tag) {
    config.validate();
    if (lists.empty()) throw InvalidArgument("rrf needs at least one ranked list");
    // Ordered map so the per-document summation order is the list order.
    std::map<std::string, double> scores;
    for (const auto& list : lists) {
        for (const auto& e : list.entries) scores[e.docid] += 1.0 / (config.rrf_k + static_cast<double>(e.rank));
    }
    std::vector<std::pair<std::string, double>> candidates(scores.begin(), scores.end());
    return make_ranked_list(std::move(candidates), 0, std::move(tag));
}

}  // namespace cqe
