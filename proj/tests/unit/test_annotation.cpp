#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "ordinal/annotation.hpp"
#include "support/oracles.hpp"

using namespace ordinal;

namespace {

// Perfect annotator for a weak order given as class ranks (lower is closer).
Answer truthful(const std::vector<int>& rank, int i, int j) {
    if (rank[i] == rank[j])
        return Answer::same;
    return rank[i] < rank[j] ? Answer::closer : Answer::farther;
}

AnnotationSession run(AnnotationSession s, const std::vector<int>& rank,
                      std::set<std::pair<int, int>>* asked = nullptr) {
    while (const auto q = next_question(s)) {
        if (asked)
            EXPECT_TRUE(asked->insert({q->i, q->j}).second) << "pair asked twice";
        s = submit_answer(std::move(s), truthful(rank, q->i, q->j));
    }
    return s;
}

std::vector<int> ranks_of(const Ordering& o, int n) {
    std::vector<int> r(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < o.size(); ++k)
        for (int m : o[k].members)
            r[static_cast<std::size_t>(m)] = static_cast<int>(k);
    return r;
}

oracle::RelationTable table_of(const RelationSet& rs, int n) {
    oracle::RelationTable t(n);
    for (const auto& r : rs.relations)
        t.set(r.i, r.j, r.r);
    return t;
}

} // namespace

TEST(Answer, StringRoundTrip) {
    for (Answer a : {Answer::closer, Answer::farther, Answer::same, Answer::ambiguous})
        EXPECT_EQ(answer_from_string(to_string(a)), a);
    EXPECT_THROW(answer_from_string("Closer"), InvalidInput);
    EXPECT_THROW(answer_from_string(""), InvalidInput);
}

TEST(Session, SingleJointIsComplete) {
    const auto s = make_session("x", 1);
    EXPECT_EQ(s.status, SessionStatus::complete);
    EXPECT_FALSE(next_question(s).has_value());
    EXPECT_THROW(submit_answer(s, Answer::same), ProtocolError);
}

TEST(Session, TwoJointsNeedOneQuestion) {
    for (Answer a : {Answer::closer, Answer::farther, Answer::same}) {
        auto s = make_session("x", 2);
        const auto q = next_question(s);
        ASSERT_TRUE(q.has_value());
        EXPECT_EQ(*q, (Question{0, 1}));
        s = submit_answer(s, a);
        EXPECT_EQ(s.status, SessionStatus::complete);
        EXPECT_EQ(s.question_count, 1);
        const auto rel = ordering_to_relations(final_ordering(s));
        ASSERT_EQ(rel.size(), 1u);
        EXPECT_EQ(rel.relations[0].r, a == Answer::same ? 0 : (a == Answer::closer ? 1 : -1));
    }
}

TEST(Session, ThreeJointsEveryStrictOrder) {
    std::vector<int> perm{0, 1, 2};
    do {
        std::vector<int> rank(3);
        for (int k = 0; k < 3; ++k)
            rank[perm[k]] = k;
        const auto s = run(make_session("x", 3), rank);
        EXPECT_EQ(ranks_of(final_ordering(s), 3), rank);
        EXPECT_GE(s.question_count, 2);
        EXPECT_LE(s.question_count, 3);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Session, AllTiedNeedsOneQuestionPerInsertion) {
    for (int n = 2; n <= 14; ++n) {
        const auto s = run(make_session("x", n), std::vector<int>(n, 0));
        EXPECT_EQ(s.question_count, n - 1);
        const auto o = final_ordering(s);
        ASSERT_EQ(o.size(), 1u);
        EXPECT_EQ(o[0].members.size(), std::size_t(n));
    }
    const auto rel = ordering_to_relations(final_ordering(run(make_session("x", 14), std::vector<int>(14, 0))));
    EXPECT_EQ(rel.size(), 91u);
    for (const auto& r : rel.relations)
        EXPECT_EQ(r.r, 0);
}

TEST(Session, RecoversEveryWeakOrderUpToFive) {
    for (int n = 1; n <= 5; ++n) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        const auto all = oracle::weak_orders(n);
        for (const auto& rank : all) {
            std::vector<int> ins = order;
            do {
                std::set<std::pair<int, int>> asked;
                const auto s = run(make_session("x", n, ins), rank, &asked);
                EXPECT_EQ(ranks_of(final_ordering(s), n), rank);
                EXPECT_LE(s.question_count, binary_insertion_bound(n));
                EXPECT_LE(s.question_count, n * (n - 1) / 2);
            } while (n <= 4 && std::next_permutation(ins.begin(), ins.end()));
        }
    }
}

TEST(Session, InsertionBound) {
    EXPECT_EQ(binary_insertion_bound(1), 0);
    EXPECT_EQ(binary_insertion_bound(2), 1);
    EXPECT_EQ(binary_insertion_bound(3), 3);
    EXPECT_EQ(binary_insertion_bound(5), 1 + 2 + 2 + 3);
    int want = 0;
    for (int k = 2; k <= 14; ++k)
        want += int(std::ceil(std::log2(double(k))));
    EXPECT_EQ(binary_insertion_bound(14), want);
}

TEST(Session, RejectsBadConstruction) {
    EXPECT_THROW(make_session("x", 0), InvalidInput);
    EXPECT_THROW(make_session("x", 3, {0, 1}), InvalidInput);
    EXPECT_THROW(make_session("x", 3, {0, 1, 1}), InvalidInput);
    EXPECT_THROW(final_ordering(make_session("x", 3)), ContractViolation);
}

TEST(Session, QuestionIsIdempotent) {
    const auto s = make_session("x", 6);
    EXPECT_EQ(next_question(s), next_question(s));
}

TEST(Session, AmbiguousRetriesOtherMemberThenSoftTies) {
    // 0 and 1 tied; 2 answered ambiguous against both members.
    auto s = make_session("x", 3);
    s = submit_answer(s, Answer::same);
    const auto q1 = next_question(s);
    s = submit_answer(s, Answer::ambiguous);
    const auto q2 = next_question(s);
    ASSERT_TRUE(q1 && q2);
    EXPECT_NE(*q1, *q2);
    s = submit_answer(s, Answer::ambiguous);
    ASSERT_EQ(s.status, SessionStatus::complete);
    const auto o = final_ordering(s);
    ASSERT_EQ(o.size(), 1u);
    EXPECT_EQ(o[0].soft_tied, std::vector<int>{2});
    EXPECT_EQ(ordering_to_relations(o).size(), 1u);
    EXPECT_EQ(ordering_to_relations(o, true).size(), 3u);
}

TEST(Session, AmbiguousRetryCanResolve) {
    auto s = make_session("x", 3);
    s = submit_answer(s, Answer::same);
    s = submit_answer(s, Answer::ambiguous);
    const auto q = *next_question(s);
    s = submit_answer(s, q.i == 2 ? Answer::closer : Answer::farther);
    const auto o = final_ordering(s);
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[0].members, std::vector<int>{2});
    EXPECT_TRUE(o[0].soft_tied.empty() && o[1].soft_tied.empty());
}

TEST(Relations, SignsFollowClassOrder) {
    const Ordering o{{{3}, {}}, {{0, 2}, {}}, {{1}, {}}};
    const auto rs = ordering_to_relations(o);
    EXPECT_NO_THROW(rs.validate(4));
    EXPECT_EQ(rs.size(), 6u);
    const auto t = table_of(rs, 4);
    EXPECT_EQ(t.get(3, 0), 1);
    EXPECT_EQ(t.get(1, 3), -1);
    EXPECT_EQ(t.get(0, 2), 0);
    EXPECT_EQ(t.get(2, 1), 1);
}

TEST(Relations, ExportedSetsAreTransitive) {
    for (int n = 1; n <= 5; ++n)
        for (const auto& rank : oracle::weak_orders(n)) {
            const auto s = run(make_session("x", n), rank);
            const auto rs = ordering_to_relations(final_ordering(s));
            EXPECT_EQ(rs.size(), std::size_t(n * (n - 1) / 2));
            EXPECT_TRUE(oracle::transitive(table_of(rs, n)));
            for (const auto& r : rs.relations)
                EXPECT_EQ(r.r, rank[r.i] == rank[r.j] ? 0 : (rank[r.i] < rank[r.j] ? 1 : -1));
        }
}

TEST(SessionJson, RoundTripAtEveryStep) {
    const std::vector<int> rank{2, 0, 1, 0, 3, 2, 1};
    auto s = make_session("item-00007", 7, {6, 5, 4, 3, 2, 1, 0});
    while (true) {
        const auto back = session_from_json(session_to_json(s));
        EXPECT_EQ(back, s);
        const auto q = next_question(s);
        if (!q)
            break;
        s = submit_answer(s, truthful(rank, q->i, q->j));
    }
    EXPECT_EQ(ranks_of(final_ordering(s), 7), rank);
    const auto j = ordering_to_json(final_ordering(s));
    ASSERT_TRUE(j.is_array());
    EXPECT_EQ(j[0]["members"], nlohmann::json::array({1, 3}));
}
