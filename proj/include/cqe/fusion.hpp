#pragma once

#include <span>
#include <string>

#include "cqe/ranked_list.hpp"

namespace cqe {

struct FusionConfig {
    /// Weight on the sparse score in the hybrid combination.
    double alpha = 0.1;
    /// Rank offset for reciprocal rank fusion.
    double rrf_k = 60.0;

    void validate() const;
};

/// Linear sparse/dense combination over the union of both lists:
///
///   in both        alpha * sparse(p)        + dense(p)
///   dense only     alpha * min(sparse list) + dense(p)
///   sparse only    alpha * sparse(p)        + min(dense list)
///
/// The minima are taken over the scores actually present in each input, so
/// a document missing from one list is scored as if it sat at that list's
/// tail. Returns the full union; callers truncate.
RankedList hybrid_combine(const RankedList& sparse, const RankedList& dense, const FusionConfig& config,
                          std::string tag = "hybrid");

/// Reciprocal rank fusion: score(d) = sum over lists containing d of
/// 1 / (rrf_k + rank).
RankedList rrf(std::span<const RankedList> lists, const FusionConfig& config, std::string tag = "rrf");

}  // namespace cqe
