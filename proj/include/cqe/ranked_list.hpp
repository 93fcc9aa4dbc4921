#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cqe {

struct RankedEntry {
    std::string docid;
    double score = 0.0;
    int rank = 0;  // 1-based

    bool operator==(const RankedEntry&) const = default;
};

/// Retrieval result for one query. Scores are non-increasing, ranks run
/// 1..n, docids are unique.
struct RankedList {
    std::string tag;
    std::vector<RankedEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    bool operator==(const RankedList&) const = default;
};

/// A run: one ranked list per query id, ordered by qid.
using Run = std::map<std::string, RankedList>;

/// Score-descending, then docid-ascending. The canonical order for every
/// ranked output in the library.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

/// Sorts (docid, score) candidates into canonical order, keeps the first
/// `k` (all when k == 0) and assigns ranks from 1.
RankedList make_ranked_list(std::vector<std::pair<std::string, double>> candidates, std::size_t k,
                            std::string tag);

/// Checks the RankedList invariants; returns an empty string when they hold,
/// otherwise a description of the first violation.
std::string validate_ranked_list(const RankedList& list);

}  // namespace cqe
