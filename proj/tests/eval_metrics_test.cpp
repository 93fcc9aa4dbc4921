#include "cqe/eval_metrics.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>

#include "cqe/common.hpp"
#include "cqe/trainer.hpp"
#include "test_support.hpp"

namespace cqe {
namespace {

RankedList ranked(const std::vector<std::string>& ids) {
    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t i = 0; i < ids.size(); ++i) scored.emplace_back(ids[i], static_cast<double>(ids.size() - i));
    return make_ranked_list(std::move(scored), 0, "t");
}

// Straight from the definition: gains in list order, ideal from sorted grades.
double oracle_ndcg(const std::vector<std::string>& ids, const std::map<std::string, int>& grades, std::size_t cutoff) {
    double dcg = 0;
    for (std::size_t i = 0; i < ids.size() && i < cutoff; ++i) {
        auto it = grades.find(ids[i]);
        const double g = it == grades.end() ? 0.0 : it->second;
        dcg += g / std::log2(static_cast<double>(i + 2));
    }
    std::vector<int> ideal;
    for (const auto& [d, g] : grades) ideal.push_back(g);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0;
    for (std::size_t i = 0; i < ideal.size() && i < cutoff; ++i) idcg += ideal[i] / std::log2(static_cast<double>(i + 2));
    return dcg / idcg;
}

double boost_p(double t, double dof) {
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

class EvalTest : public ::testing::Test {
protected:
    void SetUp() override { logging::set_quiet(true); }
    void TearDown() override { logging::set_quiet(false); }
};

TEST_F(EvalTest, IdealRankingScoresOne) {
    const Qrels qrels = {{"q", {{"a", 3}, {"b", 2}, {"c", 1}, {"z", 0}}}};
    const cqe::Run run = {{"q", ranked({"a", "b", "c", "x"})}};
    EXPECT_DOUBLE_EQ(ndcg(run, qrels, 1000).mean, 1.0);
    EXPECT_DOUBLE_EQ(ndcg(run, qrels, 3).mean, 1.0);
}

TEST_F(EvalTest, NoRelevantRetrievedScoresZero) {
    const Qrels qrels = {{"q", {{"a", 3}}}};
    const cqe::Run run = {{"q", ranked({"x", "y"})}};
    EXPECT_EQ(ndcg(run, qrels, 10).mean, 0.0);
    EXPECT_EQ(recall_at(run, qrels, 10).mean, 0.0);
}

TEST_F(EvalTest, HandComputedNdcg) {
    const Qrels qrels = {{"q", {{"a", 1}, {"b", 3}}}};
    const cqe::Run run = {{"q", ranked({"a", "x", "b"})}};
    const double dcg = 1.0 + 3.0 / 2.0;
    const double idcg = 3.0 + 1.0 / std::log2(3.0);
    EXPECT_NEAR(ndcg(run, qrels, 10).mean, dcg / idcg, 1e-15);
}

TEST_F(EvalTest, NdcgMatchesOracleOnRandomRuns) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> ids;
        std::map<std::string, int> grades;
        for (int i = 0; i < 15; ++i) {
            ids.push_back("d" + std::to_string(i));
            const int g = static_cast<int>(uniform_index(rng, 5));
            if (g > 0) grades[ids.back()] = g;
        }
        grades["unretrieved"] = 4;
        for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
        const std::size_t cutoff = 1 + uniform_index(rng, 20);
        const auto got = ndcg({{"q", ranked(ids)}}, {{"q", grades}}, cutoff);
        EXPECT_NEAR(got.per_query.at("q"), oracle_ndcg(ids, grades, cutoff), 1e-12);
    }
}

TEST_F(EvalTest, RecallCountsGradeTwoAndAbove) {
    const Qrels qrels = {{"q", {{"a", 1}, {"b", 2}, {"c", 4}, {"d", 3}}}};
    const cqe::Run run = {{"q", ranked({"a", "b", "x", "c"})}};
    EXPECT_DOUBLE_EQ(recall_at(run, qrels, 1000).mean, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(recall_at(run, qrels, 2).mean, 1.0 / 3.0);
}

TEST_F(EvalTest, RecallMatchesOracleOnRandomRuns) {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> ids;
        std::map<std::string, int> grades;
        for (int i = 0; i < 25; ++i) {
            const std::string id = "d" + std::to_string(i);
            if (uniform_unit(rng) < 0.6) ids.push_back(id);
            grades[id] = static_cast<int>(uniform_index(rng, 5));
        }
        if (ids.empty()) continue;
        const std::size_t cutoff = 1 + uniform_index(rng, 30);
        std::size_t positives = 0, found = 0;
        for (const auto& [d, g] : grades) positives += g >= 2;
        for (std::size_t i = 0; i < ids.size() && i < cutoff; ++i) found += grades[ids[i]] >= 2;
        const auto got = recall_at({{"q", ranked(ids)}}, {{"q", grades}}, cutoff);
        if (positives == 0) {
            EXPECT_TRUE(got.per_query.empty());
        } else {
            EXPECT_NEAR(got.per_query.at("q"), static_cast<double>(found) / static_cast<double>(positives), 1e-15);
        }
    }
}

TEST_F(EvalTest, UnjudgedQueriesAreWarnedAndExcluded) {
    logging::reset_warning_count();
    const Qrels qrels = {{"q1", {{"a", 2}}}, {"q3", {{"a", 0}}}};
    const cqe::Run run = {{"q1", ranked({"a"})}, {"q2", ranked({"a"})}, {"q3", ranked({"a"})}};
    const auto r = ndcg(run, qrels, 10);
    EXPECT_EQ(r.per_query.size(), 1u);
    EXPECT_EQ(logging::warning_count(), 1u);
}

TEST_F(EvalTest, MetricInvariants) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> ids;
        std::map<std::string, int> grades;
        for (int i = 0; i < 12; ++i) {
            ids.push_back("d" + std::to_string(i));
            grades[ids.back()] = static_cast<int>(uniform_index(rng, 5));
        }
        grades["d0"] = 3;
        const std::size_t cutoff = 1 + uniform_index(rng, 12);
        const Qrels qrels = {{"q", grades}};
        const double n = ndcg({{"q", ranked(ids)}}, qrels, cutoff).mean;
        const double r = recall_at({{"q", ranked(ids)}}, qrels, cutoff).mean;
        EXPECT_GE(n, 0.0);
        EXPECT_LE(n, 1.0 + 1e-12);
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 1.0);

        // Entries past the cutoff do not matter.
        auto longer = ids;
        longer.insert(longer.begin() + static_cast<long>(std::min(cutoff, longer.size())), "extra");
        grades["extra"] = 4;
        const Qrels with_extra = {{"q", grades}};
        auto truncated = ids;
        truncated.resize(std::min(cutoff, ids.size()));
        EXPECT_EQ(ndcg({{"q", ranked(truncated)}}, with_extra, cutoff).mean,
                  ndcg({{"q", ranked(longer)}}, with_extra, cutoff).mean);
    }
}

TEST_F(EvalTest, WinTieCounts) {
    MetricReport sys{"ndcg", 10, {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}, {"d", 0.4}}, 0};
    MetricReport base{"ndcg", 10, {{"a", 0.4}, {"b", 0.3 + 5e-10}, {"c", 0.25}, {"d", 0.3}}, 0};
    const auto wt = win_tie(sys, base);
    EXPECT_EQ(wt.wins, 2u);
    EXPECT_EQ(wt.ties, 1u);
    EXPECT_EQ(wt.losses, 1u);
    MetricReport short_base{"ndcg", 10, {{"a", 0.4}}, 0};
    EXPECT_THROW(win_tie(sys, short_base), InvalidArgument);
}

TEST_F(EvalTest, WinTieSumsToQueryCount) {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 50; ++trial) {
        MetricReport a{"m", 1, {}, 0}, b{"m", 1, {}, 0};
        const std::size_t n = 1 + uniform_index(rng, 40);
        for (std::size_t i = 0; i < n; ++i) {
            a.per_query["q" + std::to_string(i)] = std::round(uniform_unit(rng) * 4) / 4;
            b.per_query["q" + std::to_string(i)] = std::round(uniform_unit(rng) * 4) / 4;
        }
        const auto wt = win_tie(a, b);
        EXPECT_EQ(wt.wins + wt.ties + wt.losses, n);
        const auto rev = win_tie(b, a);
        EXPECT_EQ(rev.wins, wt.losses);
        EXPECT_EQ(rev.ties, wt.ties);
    }
}

TEST(TTest, FrozenReferenceValue) {
    const std::vector<double> a = {0.61, 0.52, 0.73, 0.44, 0.58, 0.69, 0.47, 0.55, 0.71, 0.63};
    const std::vector<double> b = {0.55, 0.50, 0.64, 0.47, 0.51, 0.60, 0.45, 0.56, 0.62, 0.58};
    const auto r = paired_t_test(a, b);
    EXPECT_NEAR(r.t, 3.2887723756551477, 1e-12);
    EXPECT_NEAR(r.p_two_sided, 0.009396740196542944, 1e-12);
}

TEST(TTest, TailProbabilityReferenceValues) {
    EXPECT_NEAR(student_t_two_sided_p(2.0, 5), 0.10193947882985828, 1e-13);
    EXPECT_NEAR(student_t_two_sided_p(-0.5, 30), 0.6207230048851273, 1e-13);
    EXPECT_DOUBLE_EQ(student_t_two_sided_p(0.0, 7), 1.0);
}

TEST(TTest, MatchesBoostStudentsT) {
    std::mt19937_64 rng(35);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 60);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = uniform_unit(rng);
            b[i] = uniform_unit(rng) + 0.1 * uniform_unit(rng);
        }
        const auto r = paired_t_test(a, b);
        EXPECT_NEAR(r.p_two_sided, boost_p(r.t, static_cast<double>(n - 1)), 1e-10);
    }
}

TEST(TTest, AntisymmetricAndDegenerate) {
    const std::vector<double> a = {0.1, 0.5, 0.3, 0.9}, b = {0.2, 0.1, 0.35, 0.6};
    const auto ab = paired_t_test(a, b), ba = paired_t_test(b, a);
    EXPECT_DOUBLE_EQ(ab.t, -ba.t);
    EXPECT_DOUBLE_EQ(ab.p_two_sided, ba.p_two_sided);
    const auto same = paired_t_test(a, a);
    EXPECT_EQ(same.t, 0.0);
    EXPECT_EQ(same.p_two_sided, 1.0);
    EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), InvalidArgument);
    EXPECT_THROW(paired_t_test(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST(IncompleteBeta, KnownValues) {
    EXPECT_DOUBLE_EQ(regularized_incomplete_beta(1, 1, 0.3), 0.3);
    EXPECT_NEAR(regularized_incomplete_beta(2, 3, 0.4), 0.5248, 1e-14);
    EXPECT_THROW(regularized_incomplete_beta(0, 1, 0.5), InvalidArgument);
    EXPECT_THROW(regularized_incomplete_beta(1, 1, 1.5), InvalidArgument);
}

TEST(Qrels, RejectsBadGrades) {
    testing::TempDir dir;
    testing::write_text(dir.path() / "q.txt", "q1 0 d1 5\n");
    EXPECT_THROW(load_qrels(dir.path() / "q.txt"), IoError);
    testing::write_text(dir.path() / "q.txt", "q1 0 d1\n");
    EXPECT_THROW(load_qrels(dir.path() / "q.txt"), IoError);
    testing::write_text(dir.path() / "q.txt", "q1 0 d1 x\n");
    EXPECT_THROW(load_qrels(dir.path() / "q.txt"), IoError);
    EXPECT_THROW(load_qrels(dir.path() / "missing.txt"), IoError);
}

TEST(Qrels, RoundTrip) {
    testing::TempDir dir;
    const Qrels q = {{"q1", {{"a", 0}, {"b", 4}}}, {"q2", {{"c", 2}}}};
    save_qrels(q, dir.path() / "q.txt");
    EXPECT_EQ(load_qrels(dir.path() / "q.txt"), q);
}

TEST(RunFile, RoundTripAndFormat) {
    testing::TempDir dir;
    cqe::Run run = {{"q1", make_ranked_list({{"a", 1.5}, {"b", 0.25}}, 0, "sys")}};
    EXPECT_EQ(format_run_lines("q1", run["q1"]), "q1 Q0 a 1 1.5 sys\nq1 Q0 b 2 0.25 sys\n");
    save_run(run, dir.path() / "r.txt");
    EXPECT_EQ(load_run(dir.path() / "r.txt"), run);
}

TEST(RunFile, OrdersByRankColumnAndWarnsOnBadOrder) {
    testing::TempDir dir;
    logging::set_quiet(true);
    logging::reset_warning_count();
    testing::write_text(dir.path() / "r.txt", "q1 Q0 b 2 0.5 s\nq1 Q0 a 1 1.0 s\n");
    auto run = load_run(dir.path() / "r.txt");
    EXPECT_EQ(run["q1"].entries[0].docid, "a");
    EXPECT_EQ(logging::warning_count(), 0u);
    testing::write_text(dir.path() / "r.txt", "q1 Q0 a 1 0.5 s\nq1 Q0 b 2 1.0 s\n");
    load_run(dir.path() / "r.txt");
    EXPECT_EQ(logging::warning_count(), 1u);
    logging::set_quiet(false);
    testing::write_text(dir.path() / "r.txt", "q1 Q0 a 1\n");
    EXPECT_THROW(load_run(dir.path() / "r.txt"), IoError);
}

}  // namespace
}  // namespace cqe
