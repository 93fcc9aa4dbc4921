#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cqe/ranked_list.hpp"

namespace cqe {

/// Graded judgments: qid -> docid -> grade (0..4).
using Qrels = std::map<std::string, std::map<std::string, int>>;

inline constexpr int kMaxGrade = 4;

struct MetricReport {
    std::string metric_name;
    std::size_t cutoff = 0;
    std::map<std::string, double> per_query;
    double mean = 0.0;
};

/// `qid 0 docid grade` per line. Throws IoError on malformed lines or
/// grades outside 0..4.
Qrels load_qrels(const std::filesystem::path& path);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);

/// TREC run lines `qid Q0 docid rank score tag`. Entries are ordered by the
/// rank column; a line whose rank or score breaks the ordering rules is
/// reported through logging::warn.
Run load_run(const std::filesystem::path& path);
void save_run(const Run& run, const std::filesystem::path& path);
/// Formats one ranked list as TREC lines. Scores are printed in the shortest
/// form that parses back to the same double.
std::string format_run_lines(const std::string& qid, const RankedList& list);

/// nDCG with linear gains and log2(rank + 1) discount over the first
/// `cutoff` entries. Queries absent from the qrels are skipped with a
/// warning; queries with no positive grade are skipped silently.
MetricReport ndcg(const Run& run, const Qrels& qrels, std::size_t cutoff);

/// Fraction of documents graded >= min_grade found in the first `cutoff`
/// entries. Queries without such documents are skipped.
MetricReport recall_at(const Run& run, const Qrels& qrels, std::size_t cutoff = 1000, int min_grade = 2);

struct WinTie {
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t losses = 0;
};

inline constexpr double kTieEpsilon = 1e-9;

/// Per-query comparison of system against baseline. Throws
/// InvalidArgument unless both reports cover the same qids.
WinTie win_tie(const MetricReport& system, const MetricReport& baseline);

struct TTestResult {
    double t = 0.0;
    double p_two_sided = 1.0;
};

/// Paired Student t-test on a - b. All-zero differences give t = 0, p = 1.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

/// Values of both reports aligned on their shared qids (in qid order).
std::pair<std::vector<double>, std::vector<double>> align_reports(const MetricReport& a, const MetricReport& b);

}  // namespace cqe
