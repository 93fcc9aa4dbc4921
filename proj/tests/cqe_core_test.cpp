#include "cqe/cqe_core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "cqe/common.hpp"
#include "cqe/synthetic.hpp"
#include "cqe/trainer.hpp"
#include "test_support.hpp"

namespace cqe {
namespace {

using testing::random_matrix;

TokenEmbeddingMatrix rows(std::vector<std::string> tokens, std::size_t context_len, std::vector<std::vector<double>> vs) {
    std::vector<double> flat;
    for (const auto& v : vs) flat.insert(flat.end(), v.begin(), v.end());
    const std::size_t dim = vs.empty() ? 0 : vs[0].size();
    return TokenEmbeddingMatrix(std::move(tokens), context_len, dim, std::move(flat));
}

// Row whose norm is exactly `norm` (along the first axis).
std::vector<double> with_norm(double norm, std::size_t dim = 3) {
    std::vector<double> v(dim, 0.0);
    v[0] = norm;
    return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

TEST(TokenEmbeddingMatrix, ValidatesShape) {
    EXPECT_THROW(rows({"a"}, 1, {{1.0}}), InvalidArgument);  // no query row
    EXPECT_THROW(TokenEmbeddingMatrix({"a", "b"}, 0, 2, {1, 2, 3}), InvalidArgument);
    EXPECT_THROW(TokenEmbeddingMatrix({"a"}, 0, 1, {std::numeric_limits<double>::infinity()}), InvalidArgument);
}

TEST(Pool, Examples) {
    EXPECT_EQ(pool(rows({"a"}, 0, {{3, -1}})), (DenseVector{3, -1}));
    EXPECT_EQ(pool(rows({"a", "b"}, 1, {{1, 0}, {0, 1}})), (DenseVector{0.5, 0.5}));
    EXPECT_THROW(pool(TokenEmbeddingMatrix{}), InvalidArgument);
}

TEST(Pool, MatchesColumnMean) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_matrix(rng, 5, 2, 8);
        const auto p = pool(m);
        for (std::size_t c = 0; c < 8; ++c) {
            double sum = 0;
            for (std::size_t r = 0; r < 5; ++r) sum += m.row(r)[c];
            EXPECT_LT(std::abs(p[c] - sum / 5.0), 1e-12);
        }
    }
}

TEST(Pool, IdenticalRowsExact) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + uniform_index(rng, 40);
        const auto v = testing::gaussian(rng, 7, 1e3);
        std::vector<std::vector<double>> vs(n, v);
        std::vector<std::string> toks(n, "x");
        EXPECT_EQ(pool(rows(toks, n - 1, vs)), v);
    }
}

TEST(Score, Examples) {
    const auto m = rows({"a", "b"}, 1, {{1, 0}, {0, 1}});
    EXPECT_EQ(score(m, std::vector<double>{2, 0}), 1.0);
    EXPECT_EQ(score(m, std::vector<double>{0, 0}), 0.0);
    EXPECT_THROW(score(m, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST(Decompose, CollinearAndOrthogonal) {
    const auto c = decompose(rows({"a"}, 0, {{3, 0}}), std::vector<double>{1, 0});
    EXPECT_EQ(c[0].l2_norm, 3.0);
    EXPECT_EQ(c[0].contribution, 3.0);
    EXPECT_EQ(score(rows({"a"}, 0, {{3, 0}}), std::vector<double>{1, 0}), 3.0);

    const auto o = decompose(rows({"a"}, 0, {{0, 2}}), std::vector<double>{1, 0});
    EXPECT_EQ(o[0].contribution, 0.0);
    EXPECT_GT(o[0].l2_norm, 0.0);
}

TEST(Decompose, ZeroRowContributesNothing) {
    const auto c = decompose(rows({"a", "b"}, 1, {{0, 0}, {1, 1}}), std::vector<double>{5, 5});
    EXPECT_EQ(c[0].l2_norm, 0.0);
    EXPECT_EQ(c[0].contribution, 0.0);
}

TEST(Decompose, MeanContributionEqualsScore) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = random_matrix(rng, 6, 3, 4);
        const auto p = testing::gaussian(rng, 4);
        double sum = 0;
        for (const auto& t : decompose(m, p)) sum += t.contribution;
        EXPECT_LT(rel_err(sum / 6.0, score(m, p)), 1e-9);
    }
    const auto m = random_matrix(rng, 4, 1, 6);
    const auto p = testing::gaussian(rng, 6);
    double sum = 0;
    for (const auto& t : decompose(m, p)) sum += t.contribution;
    EXPECT_LT(rel_err(sum / 4.0, score(m, p)), 1e-9);
}

TEST(TokenNormReport, NormalizesByContextMean) {
    const auto m = rows({"a", "b", "q"}, 2, {with_norm(2), with_norm(4), with_norm(5)});
    const auto r = token_norm_report(m);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_NEAR(*r[0].normalized_norm, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(*r[1].normalized_norm, 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(*r[2].normalized_norm, 5.0 / 3.0, 1e-15);
    EXPECT_TRUE(r[0].is_context);
    EXPECT_FALSE(r[2].is_context);
}

TEST(TokenNormReport, EqualContextNormsGiveOne) {
    const auto m = rows({"a", "b", "c", "q"}, 3, {{0, 3, 4}, {5, 0, 0}, {3, 4, 0}, {1, 1, 1}});
    const auto r = token_norm_report(m);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(*r[i].normalized_norm, 1.0);
}

TEST(TokenNormReport, NoContextLeavesNormalizedEmpty) {
    const auto r = token_norm_report(rows({"q"}, 0, {{1, 0}}));
    EXPECT_FALSE(r[0].normalized_norm.has_value());
}

TEST(Decontextualize, Boundaries) {
    std::mt19937_64 rng(4);
    const auto m = random_matrix(rng, 7, 4, 5);
    const auto all = decontextualize(m, {0.0, true});
    EXPECT_EQ(all.size(), 7u);
    const auto none = decontextualize(m, {std::numeric_limits<double>::infinity(), true});
    EXPECT_EQ(none, (std::vector<std::string>{"t4", "t5", "t6"}));
}

TEST(Decontextualize, NeolithicExample) {
    const auto m = rows({"neolithic", "revolution", "start", "end", "why", "did", "it", "start"}, 4,
                        {with_norm(14), with_norm(13), with_norm(8), with_norm(7), with_norm(9), with_norm(6),
                         with_norm(5), with_norm(8)});
    const auto out = decontextualize(m, RewriteConfig::sparse_default());
    EXPECT_EQ(out, (std::vector<std::string>{"why", "did", "it", "start", "neolithic", "revolution"}));
}

TEST(Decontextualize, ThresholdIsInclusiveAndKeepsDuplicates) {
    const auto m = rows({"x", "x", "y", "q"}, 3, {with_norm(10.5), with_norm(11), with_norm(10.4), with_norm(1)});
    EXPECT_EQ(decontextualize(m, RewriteConfig::sparse_default()), (std::vector<std::string>{"q", "x", "x"}));
}

TEST(Decontextualize, SpecialTokensExcludedFromSelectionOnly) {
    const auto m = rows({"[CLS]", "<s>", "topic", "[SEP]", "q"}, 4,
                        {with_norm(50), with_norm(50), with_norm(50), with_norm(50), with_norm(1)});
    EXPECT_EQ(decontextualize(m, {1.0, true}), (std::vector<std::string>{"q", "topic"}));
    EXPECT_EQ(decontextualize(m, {1.0, false}).size(), 5u);
    EXPECT_EQ(pool(m)[0], (50.0 * 4 + 1.0) / 5.0);
}

TEST(Decontextualize, SelectionMonotoneInGamma) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = random_matrix(rng, 12, 9, 4, 3.0);
        double g1 = uniform_unit(rng) * 10, g2 = uniform_unit(rng) * 10;
        if (g1 > g2) std::swap(g1, g2);
        const auto lo = decontextualize(m, {g1, true});
        const auto hi = decontextualize(m, {g2, true});
        const std::multiset<std::string> a(lo.begin() + 3, lo.end()), b(hi.begin() + 3, hi.end());
        EXPECT_TRUE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
    }
}

TEST(Decontextualize, ScaleInvariantWithGamma) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = random_matrix(rng, 8, 5, 4);
        const double c = 0.5 + 4 * uniform_unit(rng);
        const double g = 2 * uniform_unit(rng);
        const auto scaled = m.scaled(c);
        EXPECT_EQ(decontextualize(scaled, {g * c, true}), decontextualize(m, {g, true}));
        const auto p = testing::gaussian(rng, 4);
        EXPECT_LT(rel_err(score(scaled, p), c * score(m, p)), 1e-12);
        const auto r0 = token_norm_report(m);
        const auto r1 = token_norm_report(scaled);
        for (std::size_t i = 0; i < r0.size(); ++i) EXPECT_LT(rel_err(r1[i].l2_norm, c * r0[i].l2_norm), 1e-12);
    }
}

TEST(RewriteConfig, Defaults) {
    EXPECT_EQ(RewriteConfig{}.gamma, 10.5);
    EXPECT_EQ(RewriteConfig::sparse_default().gamma, 10.5);
    EXPECT_EQ(RewriteConfig::hybrid_default().gamma, 12.0);
    EXPECT_TRUE(RewriteConfig{}.exclude_special_tokens);
}

TEST(IsSpecialToken, Recognizes) {
    EXPECT_TRUE(is_special_token("[CLS]"));
    EXPECT_TRUE(is_special_token("[SEP]"));
    EXPECT_TRUE(is_special_token("</s>"));
    EXPECT_FALSE(is_special_token("cls"));
    EXPECT_FALSE(is_special_token("[]"));
}

TEST(Sessions, RoundTripAndQids) {
    testing::TempDir dir;
    const std::vector<Session> s = {{"31", {{"What is throat cancer?", "what is throat cancer"}, {"Is it treatable?", std::nullopt}}}};
    save_sessions(s, dir / "s.jsonl");
    EXPECT_EQ(load_sessions(dir / "s.jsonl"), s);
    EXPECT_EQ(s[0].qid(1), "31_2");
    testing::write_text(dir / "bad.jsonl", "{\"session_id\":\"1\",\"turns\":[]}\n");
    EXPECT_THROW(load_sessions(dir / "bad.jsonl"), IoError);
}

TEST(QueryMatrices, RoundTrip) {
    testing::TempDir dir;
    std::mt19937_64 rng(7);
    const std::vector<QueryMatrix> ms = {{"1_1", random_matrix(rng, 3, 0, 4)}, {"1_2", random_matrix(rng, 6, 3, 4)}};
    save_query_matrices(ms, dir / "m.jsonl");
    const auto back = load_query_matrices(dir / "m.jsonl");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].qid, ms[i].qid);
        EXPECT_EQ(back[i].matrix, ms[i].matrix);
    }
    testing::write_text(dir / "bad.jsonl", R"({"qid":"x","tokens":["a","b"],"context_len":0,"vectors":[[1,2]]})");
    EXPECT_THROW(load_query_matrices(dir / "bad.jsonl"), IoError);
}

// Fine-tuning the toy encoder on the planted task raises the topic term's
// normalized norm above the distractor's.
TEST(TokenNormReport, PlantedTermOutgrowsDistractorAfterTraining) {
    const auto data = make_synthetic_dataset();
    const auto index = InvertedIndex::build(data.corpus);
    const ReferenceEmbedder ref(data.config.dim, data.config.seed);
    const CosineTeacher teacher(ref, data.passages);
    WeakLabelSet labels;
    for (auto& l : build_weak_labels(data.corpus, data.sessions, index, teacher)) {
        if (!data.heldout_qids.contains(l.qid)) labels.push_back(std::move(l));
    }
    TrainConfig tc;
    tc.tau = 0.05;
    tc.learning_rate = 0.1;
    tc.steps = 1000;
    const auto trained = train(ToyQueryEncoder::from_reference(session_vocabulary(data.sessions), ref), labels,
                               data.sessions, data.passages, tc);
    const auto input = turn_input(data.sessions[0], 2);
    const auto report = token_norm_report(trained.encoder.encode(input));
    double topic = -1, distractor = -1;
    for (const auto& t : report) {
        if (!t.is_context) continue;
        if (t.token == data.topic_terms[0]) topic = *t.normalized_norm;
        if (t.token == data.distractor_term) distractor = *t.normalized_norm;
    }
    ASSERT_GT(topic, 0);
    ASSERT_GT(distractor, 0);
    EXPECT_GT(topic, distractor);
}

}  // namespace
}  // namespace cqe
