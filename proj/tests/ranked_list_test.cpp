#include "cqe/ranked_list.hpp"

#include <gtest/gtest.h>

namespace cqe {
namespace {

TEST(MakeRankedList, SortsByScoreThenId) {
    const auto list = make_ranked_list({{"b", 1.0}, {"a", 1.0}, {"c", 2.0}, {"d", 0.5}}, 0, "t");
    ASSERT_EQ(list.size(), 4u);
    EXPECT_EQ(list.entries[0].docid, "c");
    EXPECT_EQ(list.entries[1].docid, "a");
    EXPECT_EQ(list.entries[2].docid, "b");
    EXPECT_EQ(list.entries[3].docid, "d");
    for (std::size_t i = 0; i < list.size(); ++i) EXPECT_EQ(list.entries[i].rank, static_cast<int>(i) + 1);
    EXPECT_EQ(list.tag, "t");
}

TEST(MakeRankedList, TruncatesToK) {
    const auto list = make_ranked_list({{"b", 1.0}, {"a", 1.0}, {"c", 2.0}}, 2, "t");
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(list.entries[1].docid, "a");
    EXPECT_EQ(make_ranked_list({{"a", 1.0}}, 10, "t").size(), 1u);
}

TEST(ValidateRankedList, DetectsViolations) {
    RankedList ok{"t", {{"a", 2.0, 1}, {"b", 1.0, 2}}};
    EXPECT_EQ(validate_ranked_list(ok), "");
    RankedList bad_rank{"t", {{"a", 2.0, 1}, {"b", 1.0, 3}}};
    EXPECT_NE(validate_ranked_list(bad_rank), "");
    RankedList rising{"t", {{"a", 1.0, 1}, {"b", 2.0, 2}}};
    EXPECT_NE(validate_ranked_list(rising), "");
    RankedList dup{"t", {{"a", 2.0, 1}, {"a", 1.0, 2}}};
    EXPECT_NE(validate_ranked_list(dup), "");
}

}  // namespace
}  // namespace cqe
