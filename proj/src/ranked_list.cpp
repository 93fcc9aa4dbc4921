#include "cqe/ranked_list.hpp"

#include <algorithm>
#include <unordered_set>

namespace cqe {

RankedList make_ranked_list(std::vector<std::pair<std::string, double>> candidates, std::size_t k,
                            std::string tag) {
    auto before = [](const auto& a, const auto& b) { return ranks_before(a.second, a.first, b.second, b.first); };
    std::size_t keep = (k == 0 || k > candidates.size()) ? candidates.size() : k;
    if (keep < candidates.size()) {
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                          candidates.end(), before);
        candidates.resize(keep);
    } else {
        std::sort(candidates.begin(), candidates.end(), before);
    }

    RankedList list;
    list.tag = std::move(tag);
    list.entries.reserve(candidates.size());
    int rank = 1;
    for (auto& [id, score] : candidates) list.entries.push_back({std::move(id), score, rank++});
    return list;
}

std::string validate_ranked_list(const RankedList& list) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        if (e.rank != static_cast<int>(i) + 1) {
            return "rank " + std::to_string(e.rank) + " at position " + std::to_string(i + 1);
        }
        if (i > 0 && e.score > list.entries[i - 1].score) return "score increases at rank " + std::to_string(e.rank);
        if (!seen.insert(e.docid).second) return "duplicate docid '" + e.docid + "'";
    }
    return {};
}

}  // namespace cqe
