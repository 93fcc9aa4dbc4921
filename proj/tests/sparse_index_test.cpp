#include "cqe/sparse_index.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "cqe/common.hpp"
#include "cqe/trainer.hpp"
#include "test_support.hpp"

namespace cqe {
namespace {

using testing::TempDir;

// Term-by-term evaluation straight from the tokenized documents.
double oracle_bm25(const Corpus& corpus, const std::vector<std::string>& query, const std::string& pid,
                   double k1 = 0.82, double b = 0.68) {
    const double n = static_cast<double>(corpus.count());
    double total_len = 0;
    std::vector<std::vector<std::string>> docs;
    for (const auto& p : corpus.passages()) {
        docs.push_back(tokenize(p.text));
        total_len += static_cast<double>(docs.back().size());
    }
    const double avg = total_len / n;
    const auto& doc = docs[*corpus.ordinal_of(pid)];
    double score = 0;
    for (const auto& term : query) {
        double df = 0;
        for (const auto& d : docs) df += std::find(d.begin(), d.end(), term) != d.end() ? 1 : 0;
        const double tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
        if (tf == 0) continue;
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(doc.size()) / avg));
    }
    return score;
}

Corpus random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t vocab, std::size_t max_len) {
    std::vector<Passage> ps;
    for (std::size_t d = 0; d < docs; ++d) {
        std::string text;
        const auto len = 1 + uniform_index(rng, max_len);
        for (std::size_t i = 0; i < len; ++i) text += "w" + std::to_string(uniform_index(rng, vocab)) + " ";
        char id[16];
        std::snprintf(id, sizeof id, "d%03zu", d);
        ps.push_back({id, text});
    }
    return Corpus(std::move(ps));
}

TEST(BM25Config, Defaults) {
    const BM25Config c;
    EXPECT_EQ(c.k1, 0.82);
    EXPECT_EQ(c.b, 0.68);
    EXPECT_THROW((BM25Config{-1.0, 0.5}.validate()), InvalidArgument);
    EXPECT_THROW((BM25Config{1.0, 1.5}.validate()), InvalidArgument);
}

TEST(BuildIndex, SinglePassagePostings) {
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "a a b"}}));
    EXPECT_EQ(index.postings("a"), (std::vector<Posting>{{0, 2}}));
    EXPECT_EQ(index.postings("b"), (std::vector<Posting>{{0, 1}}));
    EXPECT_TRUE(index.postings("c").empty());
    EXPECT_EQ(index.avg_doc_length(), 3.0);
}

TEST(BuildIndex, AverageLength) {
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "a b"}, {"q", "a b c d"}}));
    EXPECT_EQ(index.avg_doc_length(), 3.0);
}

TEST(BuildIndex, EmptyCorpusRejected) { EXPECT_THROW(InvertedIndex::build(Corpus{}), InvalidArgument); }

TEST(BuildIndex, PostingsMatchNaiveCounts) {
    const Corpus corpus(std::vector<Passage>{{"p0", "the cat sat on the mat"},
                         {"p1", "The dog; the CAT!"},
                         {"p2", "mat mat mat"},
                         {"p3", "on"},
                         {"p4", "dog cat dog cat dog"}});
    const auto index = InvertedIndex::build(corpus);
    std::map<std::string, std::map<std::uint32_t, std::uint32_t>> naive;
    for (std::uint32_t d = 0; d < corpus.count(); ++d) {
        for (const auto& t : tokenize(corpus[d].text)) ++naive[t][d];
    }
    ASSERT_EQ(index.postings().size(), naive.size());
    for (const auto& [term, docs] : naive) {
        std::vector<Posting> expected;
        for (const auto& [d, tf] : docs) expected.push_back({d, tf});
        EXPECT_EQ(index.postings(term), expected) << term;
    }
}

TEST(BM25Score, NoOverlapIsZero) {
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "alpha beta"}, {"q", "gamma"}}));
    EXPECT_EQ(index.score({"delta"}, "p"), 0.0);
    EXPECT_EQ(index.score({"gamma"}, "p"), 0.0);
}

TEST(BM25Score, SingleDocumentHandEvaluation) {
    // N = 1, df = 1 for both terms, doc length = avg length = 2, tf = 1:
    // idf = ln(1 + 0.5 / 1.5) = ln(4/3); tf part = 1.82 / 1.82 = 1.
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "red fox"}}));
    EXPECT_NEAR(index.score({"red", "fox"}, "p"), 2.0 * std::log(4.0 / 3.0), 1e-15);
}

TEST(BM25Score, ThreeDocumentOracle) {
    const Corpus corpus(std::vector<Passage>{{"a", "solar wind solar flare"}, {"b", "wind farm"}, {"c", "flare gun flare flare wind"}});
    const auto index = InvertedIndex::build(corpus);
    for (const auto& pid : {"a", "b", "c"}) {
        EXPECT_NEAR(index.score({"solar", "flare"}, pid), oracle_bm25(corpus, {"solar", "flare"}, pid), 1e-12) << pid;
    }
}

TEST(BM25Score, AdditiveOverQueryUnion) {
    std::mt19937_64 rng(11);
    const auto corpus = random_corpus(rng, 30, 12, 15);
    const auto index = InvertedIndex::build(corpus);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> q1, q2;
        for (std::size_t i = 0; i < 1 + uniform_index(rng, 4); ++i) q1.push_back("w" + std::to_string(uniform_index(rng, 14)));
        for (std::size_t i = 0; i < 1 + uniform_index(rng, 4); ++i) q2.push_back("w" + std::to_string(uniform_index(rng, 14)));
        auto both = q1;
        both.insert(both.end(), q2.begin(), q2.end());
        const auto& pid = corpus[uniform_index(rng, corpus.count())].id;
        EXPECT_NEAR(index.score(both, pid), index.score(q1, pid) + index.score(q2, pid), 1e-12);
    }
}

TEST(BM25Score, MultiplicityAddsOneTerm) {
    const Corpus corpus(std::vector<Passage>{{"a", "x y y"}, {"b", "x z"}, {"c", "z"}});
    const auto index = InvertedIndex::build(corpus);
    const double once = index.score({"y"}, "a");
    EXPECT_GT(once, 0.0);
    EXPECT_NEAR(index.score({"y", "x", "y"}, "a") - index.score({"x", "y"}, "a"), once, 1e-14);
}

TEST(SearchSparse, NoIndexedTermsGivesEmptyList) {
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "alpha"}}));
    EXPECT_TRUE(index.search({"omega"}, 10).empty());
    EXPECT_TRUE(index.search({}, 10).empty());
}

TEST(SearchSparse, KLargerThanMatches) {
    const auto index = InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "alpha"}, {"q", "alpha beta"}, {"r", "gamma"}}));
    const auto list = index.search({"alpha"}, 50);
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(validate_ranked_list(list), "");
}

TEST(SearchSparse, MatchesExhaustiveOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto corpus = random_corpus(rng, 20, 8, 10);
        const auto index = InvertedIndex::build(corpus);
        std::vector<std::string> q;
        for (int i = 0; i < 3; ++i) q.push_back("w" + std::to_string(uniform_index(rng, 8)));
        std::vector<std::pair<std::string, double>> all;
        for (const auto& p : corpus.passages()) {
            const double s = oracle_bm25(corpus, q, p.id);
            if (s > 0) all.emplace_back(p.id, s);
        }
        std::sort(all.begin(), all.end(),
                  [](const auto& a, const auto& b) { return ranks_before(a.second, a.first, b.second, b.first); });
        const auto list = index.search(q, 5);
        ASSERT_EQ(list.size(), std::min<std::size_t>(5, all.size()));
        for (std::size_t i = 0; i < list.size(); ++i) {
            EXPECT_EQ(list.entries[i].docid, all[i].first);
            EXPECT_NEAR(list.entries[i].score, all[i].second, 1e-12);
        }
        // The top-5 is a prefix of the full ranking.
        const auto full = index.search(q, corpus.count());
        for (std::size_t i = 0; i < list.size(); ++i) EXPECT_EQ(list.entries[i], full.entries[i]);
    }
}

TEST(SearchSparse, ScoresEqualPointScores) {
    std::mt19937_64 rng(8);
    const auto corpus = random_corpus(rng, 40, 10, 12);
    const auto index = InvertedIndex::build(corpus);
    const std::vector<std::string> q = {"w1", "w3", "w1", "w7"};
    for (const auto& e : index.search(q, 40).entries) EXPECT_EQ(e.score, index.score(q, e.docid));
}

TEST(SparseIndexFile, RoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(2);
    const auto index = InvertedIndex::build(random_corpus(rng, 25, 9, 8), BM25Config{1.2, 0.75});
    index.save(dir / "idx.bin");
    const auto loaded = InvertedIndex::load(dir / "idx.bin");
    EXPECT_TRUE(loaded == index);
    EXPECT_EQ(loaded.config().k1, 1.2);
    EXPECT_EQ(loaded.search({"w1", "w2"}, 10), index.search({"w1", "w2"}, 10));
}

TEST(SparseIndexFile, HeaderLayout) {
    TempDir dir;
    InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "a"}})).save(dir / "idx.bin");
    const auto bytes = testing::read_text(dir / "idx.bin");
    ASSERT_GE(bytes.size(), 16u);
    EXPECT_EQ(bytes.substr(0, 8), "CQESPIDX");
    EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
}

TEST(SparseIndexFile, RejectsCorruption) {
    TempDir dir;
    InvertedIndex::build(Corpus(std::vector<Passage>{{"p", "a b"}, {"q", "b c"}})).save(dir / "idx.bin");
    auto bytes = testing::read_text(dir / "idx.bin");
    testing::write_text(dir / "bad_magic.bin", "XQESPIDX" + bytes.substr(8));
    EXPECT_THROW(InvertedIndex::load(dir / "bad_magic.bin"), IoError);
    testing::write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(InvertedIndex::load(dir / "short.bin"), IoError);
    EXPECT_THROW(InvertedIndex::load(dir / "absent.bin"), IoError);
}

}  // namespace
}  // namespace cqe
