#include "ordinal/supervision.hpp"

#include <set>
#include <utility>

namespace ordinal {

void RelationSet::validate(int joint_count) const {
    std::set<std::pair<int, int>> seen;
    for (const auto& rel : relations) {
        if (rel.i < 0 || rel.i >= joint_count || rel.j < 0 || rel.j >= joint_count)
            throw IndexError("relation (" + std::to_string(rel.i) + ", " + std::to_string(rel.j) +
                             ") out of range");
        if (rel.i == rel.j)
            throw ContractViolation("relation pairs a joint with itself");
        if (!valid_relation_value(rel.r))
            throw ContractViolation("relation value must be +1, -1 or 0");
        if (!seen.insert(std::minmax(rel.i, rel.j)).second)
            throw ContractViolation("duplicate relation for pair (" + std::to_string(rel.i) +
                                    ", " + std::to_string(rel.j) + ")");
    }
}

std::optional<int> lookup_relation(const RelationSet& set, int a, int b) {
    for (const auto& rel : set.relations) {
        if (rel.i == a && rel.j == b)
            return rel.r;
        if (rel.i == b && rel.j == a)
            return -rel.r;
    }
    return std::nullopt;
}

namespace {

// Rank of each of three items under some total preorder; a smaller rank is closer.
bool admits_preorder(int r_ab, int r_bc, int r_ac) {
    for (int ra = 0; ra < 3; ++ra)
        for (int rb = 0; rb < 3; ++rb)
            for (int rc = 0; rc < 3; ++rc) {
                auto rel = [](int x, int y) { return x < y ? 1 : (x > y ? -1 : 0); };
                if (rel(ra, rb) == r_ab && rel(rb, rc) == r_bc && rel(ra, rc) == r_ac)
                    return true;
            }
    return false;
}

} // namespace

std::optional<std::array<int, 3>> find_contradiction(const RelationSet& set, int joint_count) {
    const auto n = static_cast<std::size_t>(joint_count);
    // Dense lookup table; 2 marks an absent pair.
    std::vector<int> table(n * n, 2);
    for (const auto& rel : set.relations) {
        table[static_cast<std::size_t>(rel.i) * n + static_cast<std::size_t>(rel.j)] = rel.r;
        table[static_cast<std::size_t>(rel.j) * n + static_cast<std::size_t>(rel.i)] = -rel.r;
    }
    auto at = [&](int a, int b) {
        return table[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)];
    };
    for (int a = 0; a < joint_count; ++a)
        for (int b = a + 1; b < joint_count; ++b)
            for (int c = b + 1; c < joint_count; ++c) {
                const int ab = at(a, b), bc = at(b, c), ac = at(a, c);
                if (ab == 2 || bc == 2 || ac == 2)
                    continue;
                if (!admits_preorder(ab, bc, ac))
                    return std::array<int, 3>{a, b, c};
            }
    return std::nullopt;
}

} // namespace ordinal
