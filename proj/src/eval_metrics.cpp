#include "cqe/eval_metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "cqe/common.hpp"

namespace cqe {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string field;
    while (ss >> field) out.push_back(field);
    return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
    std::istringstream ss(s);
    T v{};
    ss >> v;
    if (!ss || !ss.eof()) throw IoError("bad number '" + s + "' at " + where);
    return v;
}

MetricReport finish(std::string name, std::size_t cutoff, std::map<std::string, double> per_query) {
    MetricReport r{std::move(name), cutoff, std::move(per_query), 0.0};
    if (!r.per_query.empty()) {
        double sum = 0.0;
        for (const auto& [qid, v] : r.per_query) sum += v;
        r.mean = sum / static_cast<double>(r.per_query.size());
    }
    return r;
}

}  // namespace

Qrels load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open qrels file " + path.string());
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = path.string() + ":" + std::to_string(line_no);
        auto f = split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 4) throw IoError("expected 'qid 0 docid grade' at " + where);
        const int grade = parse_number<int>(f[3], where);
        if (grade < 0 || grade > kMaxGrade) {
            throw IoError("grade " + f[3] + " outside 0.." + std::to_string(kMaxGrade) + " at " + where);
        }
        qrels[f[0]][f[2]] = grade;
    }
    return qrels;
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
    std::string out;
    for (const auto& [qid, docs] : qrels) {
        for (const auto& [docid, grade] : docs) out += qid + " 0 " + docid + " " + std::to_string(grade) + "\n";
    }
    binary::write_file(path.string(), out);
}

Run load_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run file " + path.string());
    Run run;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = path.string() + ":" + std::to_string(line_no);
        auto f = split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 6) throw IoError("expected 'qid Q0 docid rank score tag' at " + where);
        auto& list = run[f[0]];
        list.tag = f[5];
        list.entries.push_back({f[2], parse_number<double>(f[4], where), parse_number<int>(f[3], where)});
    }
    for (auto& [qid, list] : run) {
        std::stable_sort(list.entries.begin(), list.entries.end(),
                         [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
        if (auto problem = validate_ranked_list(list); !problem.empty()) {
            logging::warn(path.string() + ": query " + qid + ": " + problem);
        }
    }
    return run;
}

std::string format_run_lines(const std::string& qid, const RankedList& list) {
    std::string out;
    char score[64];
    for (const auto& e : list.entries) {
        // Shortest representation that reads back to the same double.
        const auto end = std::to_chars(score, score + sizeof score, e.score).ptr;
        out += qid + " Q0 " + e.docid + " " + std::to_string(e.rank) + " " + std::string(score, end) + " " +
               (list.tag.empty() ? std::string("cqe") : list.tag) + "\n";
    }
    return out;
}

void save_run(const Run& run, const std::filesystem::path& path) {
    std::string out;
    for (const auto& [qid, list] : run) out += format_run_lines(qid, list);
    binary::write_file(path.string(), out);
}

MetricReport ndcg(const Run& run, const Qrels& qrels, std::size_t cutoff) {
    if (cutoff == 0) throw InvalidArgument("nDCG cutoff must be >= 1");
    std::map<std::string, double> per_query;
    for (const auto& [qid, list] : run) {
        auto qit = qrels.find(qid);
        if (qit == qrels.end()) {
            logging::warn("query " + qid + " has no judgments; excluded");
            continue;
        }
        std::vector<int> grades;
        for (const auto& [docid, g] : qit->second) {
            if (g > 0) grades.push_back(g);
        }
        if (grades.empty()) continue;
        std::sort(grades.begin(), grades.end(), std::greater<>());

        double idcg = 0.0;
        for (std::size_t r = 0; r < std::min(cutoff, grades.size()); ++r) {
            idcg += grades[r] / std::log2(static_cast<double>(r) + 2.0);
        }
        double dcg = 0.0;
        for (std::size_t r = 0; r < std::min(cutoff, list.entries.size()); ++r) {
            auto it = qit->second.find(list.entries[r].docid);
            if (it != qit->second.end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(r) + 2.0);
        }
        per_query[qid] = dcg / idcg;
    }
    return finish("ndcg", cutoff, std::move(per_query));
}

MetricReport recall_at(const Run& run, const Qrels& qrels, std::size_t cutoff, int min_grade) {
    if (cutoff == 0) throw InvalidArgument("recall cutoff must be >= 1");
    std::map<std::string, double> per_query;
    for (const auto& [qid, list] : run) {
        auto qit = qrels.find(qid);
        if (qit == qrels.end()) {
            logging::warn("query " + qid + " has no judgments; excluded");
            continue;
        }
        std::size_t positives = 0;
        for (const auto& [docid, g] : qit->second) positives += g >= min_grade ? 1 : 0;
        if (positives == 0) continue;
        std::size_t found = 0;
        for (std::size_t r = 0; r < std::min(cutoff, list.entries.size()); ++r) {
            auto it = qit->second.find(list.entries[r].docid);
            if (it != qit->second.end() && it->second >= min_grade) ++found;
        }
        per_query[qid] = static_cast<double>(found) / static_cast<double>(positives);
    }
    return finish("recall", cutoff, std::move(per_query));
}

WinTie win_tie(const MetricReport& system, const MetricReport& baseline) {
    if (system.per_query.size() != baseline.per_query.size()) {
        throw InvalidArgument("win/tie needs reports over the same queries (" + std::to_string(system.per_query.size()) +
                              " vs " + std::to_string(baseline.per_query.size()) + ")");
    }
    WinTie out;
    for (const auto& [qid, v] : system.per_query) {
        auto it = baseline.per_query.find(qid);
        if (it == baseline.per_query.end()) throw InvalidArgument("query " + qid + " missing from baseline report");
        const double diff = v - it->second;
        if (std::abs(diff) <= kTieEpsilon) {
            ++out.ties;
        } else if (diff > 0) {
            ++out.wins;
        } else {
            ++out.losses;
        }
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> align_reports(const MetricReport& a, const MetricReport& b) {
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [qid, v] : a.per_query) {
        auto it = b.per_query.find(qid);
        if (it == b.per_query.end()) continue;
        out.first.push_back(v);
        out.second.push_back(it->second);
    }
    return out;
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0.0)) throw InvalidArgument("t distribution needs dof > 0");
    if (std::isinf(t)) return 0.0;
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("paired t-test needs equal-length samples (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    const std::size_t n = a.size();
    if (n < 2) throw InvalidArgument("paired t-test needs at least 2 pairs");

    std::vector<double> d(n);
    bool all_zero = true;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
        all_zero = all_zero && d[i] == 0.0;
    }
    if (all_zero) return {0.0, 1.0};

    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        // Constant non-zero difference: infinitely significant.
        return {mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), 0.0};
    }
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    return {t, student_t_two_sided_p(t, static_cast<double>(n - 1))};
}

}  // namespace cqe
