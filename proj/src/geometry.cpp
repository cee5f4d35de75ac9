#include "ordinal/geometry.hpp"

#include <algorithm>
#include <deque>

namespace ordinal {

int Skeleton::root() const {
    for (int j = 0; j < joint_count(); ++j)
        if (parent[j] == j)
            return j;
    throw InvalidInput("skeleton '" + id + "' has no root");
}

double Skeleton::bone_length(int joint) const {
    const int r = root();
    if (joint < 0 || joint >= joint_count() || joint == r)
        throw IndexError("bone_length: joint " + std::to_string(joint) + " has no bone");
    return bone_lengths[static_cast<std::size_t>(joint < r ? joint : joint - 1)];
}

std::vector<std::pair<int, int>> Skeleton::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int j = 0; j < joint_count(); ++j)
        if (parent[j] != j)
            out.emplace_back(parent[j], j);
    return out;
}

std::vector<int> Skeleton::breadth_first_order() const {
    std::vector<int> order;
    std::deque<int> queue{root()};
    while (!queue.empty()) {
        const int j = queue.front();
        queue.pop_front();
        order.push_back(j);
        for (int c = 0; c < joint_count(); ++c)
            if (c != j && parent[c] == j)
                queue.push_back(c);
    }
    return order;
}

void Skeleton::validate() const {
    const int n = joint_count();
    if (n < 1)
        throw InvalidInput("skeleton '" + id + "': no joints");
    if (static_cast<int>(joint_names.size()) != n)
        throw InvalidInput("skeleton '" + id + "': joint_names size mismatch");
    if (static_cast<int>(bone_lengths.size()) != n - 1)
        throw InvalidInput("skeleton '" + id + "': expected N-1 bone lengths");
    int roots = 0;
    for (int j = 0; j < n; ++j) {
        if (parent[j] < 0 || parent[j] >= n)
            throw InvalidInput("skeleton '" + id + "': parent index out of range");
        roots += parent[j] == j;
    }
    if (roots != 1)
        throw InvalidInput("skeleton '" + id + "': expected exactly one root");
    // Every joint must reach the root without revisiting a joint.
    for (int j = 0; j < n; ++j) {
        int cur = j;
        for (int steps = 0; parent[cur] != cur; ++steps) {
            if (steps > n)
                throw InvalidInput("skeleton '" + id + "': parent array has a cycle");
            cur = parent[cur];
        }
    }
    if (std::any_of(bone_lengths.begin(), bone_lengths.end(),
                    [](double l) { return !(l > 0.0) || !std::isfinite(l); }))
        throw InvalidInput("skeleton '" + id + "': bone lengths must be positive");
}

} // namespace ordinal
