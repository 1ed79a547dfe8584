#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace grouptraj {

// Partition of pedestrians 0..N-1 into groups 0..M-1. Group ids are compact
// and ordered by first occurrence (the group holding the lowest pedestrian
// index is group 0), which keeps every derived mask deterministic.
struct GroupAssignment {
    std::vector<int> group_of;  // pedestrian index -> group index
    int num_groups = 0;

    std::size_t num_pedestrians() const { return group_of.size(); }

    void validate() const {
        if (group_of.empty()) throw std::invalid_argument("groups: empty assignment");
        std::vector<bool> used(static_cast<std::size_t>(num_groups), false);
        for (int g : group_of) {
            if (g < 0 || g >= num_groups)
                throw std::invalid_argument("groups: group id " + std::to_string(g) +
                                            " outside [0," + std::to_string(num_groups) + ")");
            used[static_cast<std::size_t>(g)] = true;
        }
        for (int g = 0; g < num_groups; ++g) {
            if (!used[static_cast<std::size_t>(g)])
                throw std::invalid_argument("groups: group id " + std::to_string(g) + " unused");
        }
    }

    std::vector<std::vector<int>> members() const {
        std::vector<std::vector<int>> by_group(static_cast<std::size_t>(num_groups));
        for (std::size_t i = 0; i < group_of.size(); ++i)
            by_group[static_cast<std::size_t>(group_of[i])].push_back(static_cast<int>(i));
        return by_group;
    }
};

// Builds a compact GroupAssignment from arbitrary raw labels, one per
// pedestrian in index order. Raw ids may be any integers; they are renumbered
// by first occurrence.
inline GroupAssignment compact_groups(const std::vector<long>& raw_labels) {
    GroupAssignment ga;
    ga.group_of.reserve(raw_labels.size());
    std::unordered_map<long, int> remap;
    for (long raw : raw_labels) {
        auto [it, inserted] = remap.try_emplace(raw, ga.num_groups);
        if (inserted) ++ga.num_groups;
        ga.group_of.push_back(it->second);
    }
    ga.validate();
    return ga;
}

inline GroupAssignment singleton_groups(std::size_t n) {
    GroupAssignment ga;
    ga.group_of.resize(n);
    for (std::size_t i = 0; i < n; ++i) ga.group_of[i] = static_cast<int>(i);
    ga.num_groups = static_cast<int>(n);
    return ga;
}

}  // namespace grouptraj
